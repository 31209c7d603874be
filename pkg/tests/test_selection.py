import json

import numpy as np
import pytest

from zicount import selection
from zicount.dataset import ObservationTable
from zicount.fitting import Convergence, FitOptions, ModelSpec, fit
from zicount.linkdesign import DesignError, factor, interaction
from zicount.selection import (
    CandidateScope,
    compare_models,
    format_table,
    parse_scope,
    step_gaic_all,
    to_cell_means,
)

from conftest import CM, greedy_violations

ORDER = [(1, "mu", "forward"), (2, "sigma", "forward"), (3, "nu", "forward"), (4, "tau", "forward"),
         (5, "nu", "backward"), (6, "sigma", "backward"), (7, "mu", "backward")]


@pytest.fixture(scope="module")
def zip_trace(trajan_data):
    return step_gaic_all("ZIP", trajan_data)


def test_zip_selects_photoperiod(zip_trace):
    spec = zip_trace.final_spec
    assert spec.terms_for("mu").summary() == "photoperiod"
    assert spec.terms_for("sigma").summary() == "photoperiod"
    assert spec.terms_for("mu").coding == "cell_means"
    assert zip_trace.final_fit.df == 4


def test_step_order(zip_trace):
    seen = []
    for r in zip_trace.records:
        key = (r.step, r.param, r.direction)
        if not seen or seen[-1] != key:
            seen.append(key)
    expected = [k for k in ORDER if k[1] in ("mu", "sigma")]
    assert seen == [k for k in expected if k in seen]
    assert seen[0] == (1, "mu", "forward")


def test_greedy_soundness(zip_trace):
    assert greedy_violations(zip_trace) == []


def test_trace_replay(zip_trace, trajan_data):
    refit = fit(zip_trace.final_spec, trajan_data)
    assert refit.aic == pytest.approx(zip_trace.final_fit.aic, abs=1e-4)
    accepted = [r for r in zip_trace.records if r.accepted]
    assert accepted[-1].gaic == pytest.approx(zip_trace.final_fit.aic, abs=1e-4)


def test_huge_penalty_gives_intercept_only(trajan_data):
    tr = step_gaic_all("ZIP", trajan_data, k=1e6, options=FitOptions(n_starts=1))
    for p in ("mu", "sigma"):
        assert tr.final_spec.terms_for(p).summary() == "intercept"
    assert not any(r.accepted for r in tr.records)


def test_constant_factor_never_added():
    rng = np.random.default_rng(1)
    y = rng.poisson(3.0, 60)
    d = ObservationTable("y", y, {"g": np.array(["a"] * 60)}, {"g": ("a",)})
    tr = step_gaic_all("NB", d, options=FitOptions(n_starts=1))
    assert not any(r.accepted for r in tr.records)
    assert tr.final_spec.terms_for("mu").summary() == "intercept"


def test_default_scope(trajan_data):
    scope = CandidateScope.default(trajan_data)
    assert set(scope.terms) == {factor("photoperiod"), factor("bap"), interaction("photoperiod", "bap")}


def test_parse_scope_and_validation(trajan_data):
    s = parse_scope("photoperiod, bap, photoperiod:bap")
    assert len(s.terms) == 3
    with pytest.raises(DesignError):
        parse_scope("photoperiod,temperature").validate(trajan_data)
    with pytest.raises(DesignError):
        parse_scope("").validate(trajan_data)
    with pytest.raises(DesignError):
        parse_scope("a:b:c")


def test_unknown_scope_rejected_before_fitting(trajan_data, monkeypatch):
    calls = []
    monkeypatch.setattr(selection, "fit", lambda *a, **k: calls.append(1))
    with pytest.raises(DesignError):
        step_gaic_all("ZIP", trajan_data, parse_scope("foo"))
    assert calls == []


def test_nonpositive_k_rejected(trajan_data):
    with pytest.raises(ValueError):
        step_gaic_all("ZIP", trajan_data, k=0)


def test_failed_candidate_is_skipped(trajan_data, monkeypatch):
    real_fit = selection.fit

    def flaky(spec, data, options=None):
        fm = real_fit(spec, data, options)
        if "bap" in spec.terms_for("mu").formula():
            fm.convergence = Convergence(False, 0, 1.0, {}, message="forced")
        return fm

    monkeypatch.setattr(selection, "fit", flaky)
    tr = step_gaic_all("PO", trajan_data, options=FitOptions(n_starts=1))
    skipped = [r for r in tr.records if r.gaic is None]
    assert skipped and all("skipped" in r.note for r in skipped)
    assert tr.final_spec.terms_for("mu").summary() == "photoperiod"


def test_trace_files(zip_trace, tmp_path):
    zip_trace.write(tmp_path / "trace.log", tmp_path / "trace.json")
    lines = (tmp_path / "trace.log").read_text().splitlines()
    assert lines[0].startswith("# stepwise GAIC")
    assert len(lines) == len(zip_trace.records) + 2
    d = json.loads((tmp_path / "trace.json").read_text())
    assert d["family"] == "ZIP" and len(d["steps"]) == len(zip_trace.records)
    assert d["final_model"]["terms"]["mu"] == CM


def test_to_cell_means_keeps_likelihood(trajan_data):
    spec = ModelSpec.build("ZIP", {"mu": "photoperiod", "sigma": "photoperiod"})
    a = fit(spec, trajan_data)
    b = fit(to_cell_means(spec), trajan_data)
    assert a.deviance == pytest.approx(b.deviance, abs=1e-6)


def test_compare_models_rows(published_fits):
    rows = compare_models(published_fits.values())
    assert [r["family"] for r in rows] == sorted((r["family"] for r in rows),
                                                 key=lambda f: published_fits[f].aic)
    assert {"family", "deviance", "df", "aic", "bic", "mu", "sigma", "nu", "tau"} <= set(rows[0])
    zip_row = next(r for r in rows if r["family"] == "ZIP")
    assert zip_row["nu"] == "-" and zip_row["sigma"] == "photoperiod"
    one = compare_models([published_fits["ZIP"]])
    assert len(one) == 1
    text = format_table(rows)
    assert text.splitlines()[0].startswith("Model")


def test_compare_models_stable_ties(published_fits):
    fm = published_fits["ZIP"]
    rows = compare_models([fm, fm])
    assert [r["index"] for r in rows] == [0, 1]


def test_compare_models_rejects_mixed_data(published_fits, trajan_data):
    other = fit(ModelSpec.build("PO"), trajan_data.subset(np.arange(100)))
    with pytest.raises(ValueError):
        compare_models([published_fits["ZIP"], other])
    with pytest.raises(ValueError):
        compare_models([published_fits["ZIP"]], criterion="dic")
