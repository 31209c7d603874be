"""Observation tables: the embedded Trajan rooting experiment and CSV input."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "DataError",
    "ObservationTable",
    "CellSummary",
    "trajan",
    "cell_summaries",
    "read_csv",
    "write_csv",
]


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True, eq=False)
class ObservationTable:
    """Count response plus categorical factors, one row per observation.

    ``factors`` maps a factor name to an array of level strings; ``levels``
    gives each factor's level order (first appearance unless overridden).
    ``labels`` optionally shortens a factor name in design column labels.
    """

    response_name: str
    response: np.ndarray
    factors: dict[str, np.ndarray]
    levels: dict[str, tuple[str, ...]]
    labels: dict[str, str] = field(default_factory=dict)
    source: str = "memory"

    def __post_init__(self):
        y = np.asarray(self.response)
        if y.ndim != 1:
            raise DataError("response must be one-dimensional")
        if np.any(y < 0):
            raise DataError("response must be nonnegative")
        object.__setattr__(self, "response", y.astype(np.int64))
        for name, col in self.factors.items():
            if len(col) != len(y):
                raise DataError(f"factor {name!r} has {len(col)} rows, response has {len(y)}")
            unknown = set(col) - set(self.levels[name])
            if unknown:
                raise DataError(f"factor {name!r} has undeclared levels {sorted(unknown)}")

    @property
    def n(self) -> int:
        return len(self.response)

    def label(self, factor: str) -> str:
        return self.labels.get(factor, factor)

    def with_levels(self, factor: str, order) -> "ObservationTable":
        """Copy with ``factor``'s level order replaced."""
        order = tuple(str(v) for v in order)
        if sorted(order) != sorted(self.levels[factor]):
            raise DataError(f"level order for {factor!r} must permute {self.levels[factor]}")
        levels = dict(self.levels)
        levels[factor] = order
        return ObservationTable(self.response_name, self.response, self.factors, levels,
                                self.labels, self.source)

    def subset(self, mask) -> "ObservationTable":
        mask = np.asarray(mask)
        return ObservationTable(self.response_name, self.response[mask],
                                {k: v[mask] for k, v in self.factors.items()},
                                self.levels, self.labels, self.source)

    def equals(self, other: "ObservationTable") -> bool:
        return (self.response_name == other.response_name
                and np.array_equal(self.response, other.response)
                and self.levels == other.levels
                and self.factors.keys() == other.factors.keys()
                and all(np.array_equal(self.factors[k], other.factors[k]) for k in self.factors))


# Frequency table: rows are root counts, columns the eight treatment cells
# (8h: BAP 2.2, 4.4, 8.8, 17.6; then 16h: same order).
_TRAJAN_CELLS = [("8", "2.2"), ("8", "4.4"), ("8", "8.8"), ("8", "17.6"),
                 ("16", "2.2"), ("16", "4.4"), ("16", "8.8"), ("16", "17.6")]
_TRAJAN_FREQ = {
    0: (0, 0, 0, 2, 15, 16, 12, 19),
    1: (3, 0, 0, 0, 0, 2, 3, 2),
    2: (2, 3, 1, 0, 2, 1, 2, 2),
    3: (3, 0, 2, 2, 2, 1, 1, 4),
    4: (6, 1, 4, 2, 1, 2, 2, 3),
    5: (3, 0, 4, 5, 2, 1, 2, 1),
    6: (2, 3, 4, 5, 1, 2, 3, 4),
    7: (2, 7, 4, 4, 0, 0, 1, 3),
    8: (3, 3, 7, 8, 1, 1, 0, 0),
    9: (1, 5, 5, 3, 3, 0, 2, 2),
    10: (2, 3, 4, 4, 1, 3, 0, 0),
    11: (1, 4, 1, 4, 1, 0, 1, 0),
    12: (0, 0, 2, 0, 1, 1, 1, 0),
    13: (1, 1, 0, 0, 0, 0, 0, 0),
    14: (0, 0, 2, 1, 0, 0, 0, 0),
    17: (1, 0, 0, 0, 0, 0, 0, 0),
}


def trajan() -> ObservationTable:
    """The 270 micropropagated Trajan shoots in long form.

    Rows run cell by cell (8h before 16h, BAP ascending) and within each
    cell by ascending root count.
    """
    roots, photo, bap = [], [], []
    for j, (p, b) in enumerate(_TRAJAN_CELLS):
        for y, counts in _TRAJAN_FREQ.items():
            roots += [y] * counts[j]
            photo += [p] * counts[j]
            bap += [b] * counts[j]
    return ObservationTable(
        response_name="roots",
        response=np.array(roots),
        factors={"photoperiod": np.array(photo), "bap": np.array(bap)},
        levels={"photoperiod": ("8", "16"), "bap": ("2.2", "4.4", "8.8", "17.6")},
        labels={"photoperiod": "photo"},
        source="trajan",
    )


@dataclass(frozen=True)
class CellSummary:
    cell: tuple[str, ...]
    n: int
    mean: float
    variance: float | None  # None when n < 2


def cell_summaries(data: ObservationTable, factors=None) -> list[CellSummary]:
    """Count, mean and sample variance (n - 1 divisor) per treatment cell.

    Cells are crossed levels of ``factors`` (default: all factors) in level
    order, first factor varying slowest; empty cells are skipped.
    """
    factors = list(data.factors) if factors is None else list(factors)
    out = []
    for cell in np.ndindex(*[len(data.levels[f]) for f in factors]):
        key = tuple(data.levels[f][i] for f, i in zip(factors, cell))
        mask = np.ones(data.n, dtype=bool)
        for f, level in zip(factors, key):
            mask &= data.factors[f] == level
        y = data.response[mask].astype(float)
        if len(y) == 0:
            continue
        var = float(np.var(y, ddof=1)) if len(y) > 1 else None
        out.append(CellSummary(key, len(y), float(np.mean(y)), var))
    return out


def read_csv(path, response: str, factors) -> ObservationTable:
    """Read a comma-delimited file with a header row.

    The response must be a nonnegative integer in every row; errors name the
    1-based data row. Factor levels keep their order of first appearance.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames:
            raise DataError(f"{path}: empty file")
        missing = [c for c in [response, *factors] if c not in reader.fieldnames]
        if missing:
            raise DataError(f"{path}: missing column(s) {', '.join(missing)}")
        ys = []
        cols = {f: [] for f in factors}
        for i, row in enumerate(reader, start=1):
            raw = (row[response] or "").strip()
            try:
                y = int(raw)
            except ValueError:
                raise DataError(f"{path}: row {i}: response {raw!r} is not an integer") from None
            if y < 0:
                raise DataError(f"{path}: row {i}: response {y} is negative")
            ys.append(y)
            for f in factors:
                cols[f].append((row[f] or "").strip())
    if not ys:
        raise DataError(f"{path}: no data rows")
    levels = {f: tuple(dict.fromkeys(cols[f])) for f in factors}
    return ObservationTable(response, np.array(ys), {f: np.array(cols[f]) for f in factors},
                            levels, source=str(path))


def write_csv(data: ObservationTable, path) -> None:
    names = [data.response_name, *data.factors]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for i in range(data.n):
            w.writerow([int(data.response[i]), *(data.factors[f][i] for f in data.factors)])
