import numpy as np
import pytest

from zicount.dataset import DataError, ObservationTable, cell_summaries, read_csv, trajan, write_csv


def test_trajan_shape():
    d = trajan()
    assert d.n == 270
    assert np.all(d.response >= 0)
    counts = [c.n for c in cell_summaries(d)]
    assert counts == [30, 30, 40, 40, 30, 30, 30, 40]


def test_trajan_zero_counts_16h():
    d = trajan()
    mask = (d.factors["photoperiod"] == "16") & (d.response == 0)
    assert mask.sum() == 62


def test_trajan_single_seventeen():
    d = trajan()
    idx = np.nonzero(d.response == 17)[0]
    assert len(idx) == 1
    assert d.factors["photoperiod"][idx[0]] == "8" and d.factors["bap"][idx[0]] == "2.2"


def test_trajan_row_order_deterministic():
    a, b = trajan(), trajan()
    assert a.equals(b)
    first = a.subset(np.arange(30))
    assert np.all(np.diff(first.response) >= 0)


def test_cell_summary_examples():
    cells = {c.cell: c for c in cell_summaries(trajan())}
    c = cells[("8", "2.2")]
    assert round(c.mean, 1) == 5.8 and round(c.variance, 1) == 14.1
    assert c.mean == pytest.approx(175 / 30)
    c = cells[("16", "17.6")]
    assert round(c.mean, 1) == 2.5 and round(c.variance, 1) == 8.5


def test_single_observation_cell_has_no_variance():
    d = ObservationTable("y", np.array([1, 2, 3]), {"g": np.array(["a", "a", "b"])}, {"g": ("a", "b")})
    cells = cell_summaries(d)
    assert cells[1].n == 1 and cells[1].variance is None
    assert cells[0].variance == pytest.approx(0.5)


def test_csv_round_trip(tmp_path):
    d = trajan()
    path = tmp_path / "trajan.csv"
    write_csv(d, path)
    back = read_csv(path, "roots", ["photoperiod", "bap"])
    assert back.equals(d)


def test_csv_negative_response_names_row(tmp_path):
    path = tmp_path / "bad.csv"
    rows = ["y,g"] + [f"{v},a" for v in (1, 2, 3, 4, -1, 2)]
    path.write_text("\n".join(rows) + "\n")
    with pytest.raises(DataError, match="row 5"):
        read_csv(path, "y", ["g"])


def test_csv_non_integer(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("y,g\n1,a\n2.5,b\n")
    with pytest.raises(DataError, match="row 2"):
        read_csv(path, "y", ["g"])


def test_csv_missing_column(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("y,g\n1,a\n")
    with pytest.raises(DataError, match="missing column"):
        read_csv(path, "y", ["h"])


def test_csv_empty(tmp_path):
    path = tmp_path / "e.csv"
    path.write_text("")
    with pytest.raises(DataError):
        read_csv(path, "y", ["g"])
    path.write_text("y,g\n")
    with pytest.raises(DataError):
        read_csv(path, "y", ["g"])


def test_levels_first_appearance(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("y,g\n1,z\n2,a\n3,z\n")
    assert read_csv(path, "y", ["g"]).levels["g"] == ("z", "a")


def test_with_levels_rejects_non_permutation():
    with pytest.raises(DataError):
        trajan().with_levels("photoperiod", ["8", "12"])
