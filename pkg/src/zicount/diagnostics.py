"""Quantile residuals, worm-plot series and term effects for fitted models."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .dataset import ObservationTable
from .distributions import cdf, sample
from .fitting import FittedModel
from .specfun import std_normal_pdf, std_normal_quantile

__all__ = [
    "ResidualSet",
    "WormSeries",
    "TermEffect",
    "quantile_residuals",
    "simulate",
    "residuals_from_bounds",
    "worm_series",
    "worm_from_values",
    "term_effects",
    "write_residuals",
    "write_worm",
    "write_term_effects",
]

MIN_GROUP = 8
Z95 = 1.96
_U_EPS = 1e-16


@dataclass(frozen=True, eq=False)
class ResidualSet:
    index: np.ndarray
    y: np.ndarray
    lower: np.ndarray   # F(y - 1)
    upper: np.ndarray   # F(y)
    u: np.ndarray
    z: np.ndarray       # NaN where the observation is impossible under the fit
    valid: np.ndarray
    seed: int | None
    mode: str

    def __len__(self):
        return len(self.z)


def residuals_from_bounds(lower, upper, y=None, seed=None, mode: str = "randomized") -> ResidualSet:
    """Quantile residuals from cdf bounds F(y-1), F(y).

    Randomized mode draws u ~ U(F(y-1), F(y)) from ``default_rng(seed)``;
    midpoint mode takes the interval centre. z = Phi^-1(u).
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if mode not in ("randomized", "midpoint"):
        raise ValueError(f"unknown residual mode {mode!r}")
    n = len(lower)
    valid = upper > lower
    if mode == "midpoint":
        u = 0.5 * (lower + upper)
    else:
        rng = np.random.default_rng(seed)
        u = lower + (upper - lower) * rng.random(n)
    # keep u strictly inside (0, 1) without leaving [F(y-1), F(y)]
    u = np.clip(u, _U_EPS, 1.0 - _U_EPS)
    u = np.where(valid, np.clip(u, lower, upper), u)
    u = np.where(valid & (u <= 0.0), upper, u)
    z = np.full(n, np.nan)
    if np.any(valid):
        z[valid] = std_normal_quantile(u[valid])
    y = np.full(n, -1, dtype=np.int64) if y is None else np.asarray(y)
    return ResidualSet(np.arange(n), y, lower, upper, u, z, valid, seed, mode)


def quantile_residuals(fm: FittedModel, data: ObservationTable, seed=None,
                       mode: str = "randomized") -> ResidualSet:
    """Randomized (or midpoint) quantile residuals of ``fm`` on ``data``.

    Same seed, same residuals. Observations with F(y-1) = F(y) under the
    fitted parameters get ``valid = False`` and NaN z.
    """
    params = fm.fitted_params(data)
    fam = fm.spec.family
    y = data.response
    upper = cdf(fam, params, y)
    lower = cdf(fam, params, y - 1)
    return residuals_from_bounds(lower, upper, y=y, seed=seed, mode=mode)


def simulate(fm: FittedModel, data: ObservationTable, rng: np.random.Generator) -> ObservationTable:
    """``data`` with its response replaced by draws from the fitted model.

    Observations sharing a parameter vector are drawn together, in order of
    first appearance, so the result depends only on the generator state.
    """
    params = np.column_stack(fm.fitted_params(data))
    _, first, inverse = np.unique(params, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.ravel()
    y = np.empty(data.n, dtype=np.int64)
    for g in np.argsort(first):
        rows = inverse == g
        y[rows] = sample(fm.spec.family, tuple(params[first[g]]), rng, int(rows.sum()))
    return ObservationTable(data.response_name, y, data.factors, data.levels, data.labels, "simulated")


@dataclass(frozen=True, eq=False)
class WormSeries:
    label: str
    p: np.ndarray          # plotting positions
    q: np.ndarray          # theoretical normal quantiles
    z: np.ndarray          # ordered residuals
    deviation: np.ndarray  # z - q
    band: np.ndarray       # 95% pointwise half-width

    @property
    def m(self) -> int:
        return len(self.q)

    def inside(self) -> np.ndarray:
        return np.abs(self.deviation) <= self.band

    def fraction_inside(self) -> float:
        return float(np.mean(self.inside()))


def worm_from_values(z, label: str = "all") -> WormSeries:
    """Detrended normal Q-Q series for residuals ``z``.

    Plotting positions (i - 3/8)/(m + 1/4); band 1.96 sqrt(p(1-p)/m)/phi(q).
    """
    z = np.sort(np.asarray(z, dtype=float))
    m = len(z)
    if m < MIN_GROUP:
        raise ValueError(f"worm plot for {label!r} needs at least {MIN_GROUP} residuals, got {m}")
    p = (np.arange(1, m + 1) - 0.375) / (m + 0.25)
    q = std_normal_quantile(p)
    band = Z95 * np.sqrt(p * (1.0 - p) / m) / std_normal_pdf(q)
    return WormSeries(label, p, q, z, z - q, band)


def worm_series(rs: ResidualSet, data: ObservationTable | None = None,
                group: str | None = None) -> list[WormSeries]:
    """One global worm series, or one per level of factor ``group``."""
    z = rs.z
    ok = rs.valid
    if group is None:
        return [worm_from_values(z[ok], "all")]
    if data is None or group not in data.factors:
        raise ValueError(f"unknown grouping factor {group!r}")
    col = data.factors[group]
    return [worm_from_values(z[ok & (col == level)], f"{group}={level}")
            for level in data.levels[group] if np.any(col == level)]


@dataclass(frozen=True)
class TermEffect:
    param: str
    label: str
    estimate: float
    se: float | None
    lower: float | None
    upper: float | None

    @property
    def has_interval(self) -> bool:
        return self.se is not None


def term_effects(fm: FittedModel) -> list[TermEffect]:
    """Link-scale estimate and 95% interval for every coefficient.

    Without a usable covariance matrix the effects carry no interval.
    """
    theta = fm.theta
    se = None if fm.vcov is None else np.sqrt(np.clip(np.diag(fm.vcov), 0.0, None))
    out = []
    for i, (param, label) in enumerate(fm.coefficient_index()):
        est = float(theta[i])
        if se is None:
            out.append(TermEffect(param, label, est, None, None, None))
        else:
            s = float(se[i])
            out.append(TermEffect(param, label, est, s, est - Z95 * s, est + Z95 * s))
    return out


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and np.isnan(x)):
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.12g}"


def write_residuals(rs: ResidualSet, path, data: ObservationTable | None = None) -> None:
    factors = list(data.factors) if data is not None else []
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "y", *factors, "cdf_lower", "cdf_upper", "u", "z", "valid"])
        for i in range(len(rs)):
            w.writerow([i, _fmt(rs.y[i]), *(data.factors[f][i] for f in factors),
                        _fmt(rs.lower[i]), _fmt(rs.upper[i]), _fmt(rs.u[i]), _fmt(rs.z[i]),
                        int(rs.valid[i])])


def write_worm(ws: WormSeries, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["group", "rank", "p", "q", "z", "deviation", "band", "inside"])
        for i in range(ws.m):
            w.writerow([ws.label, i + 1, _fmt(ws.p[i]), _fmt(ws.q[i]), _fmt(ws.z[i]),
                        _fmt(ws.deviation[i]), _fmt(ws.band[i]), int(ws.inside()[i])])


def write_term_effects(effects, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["param", "term", "estimate", "se", "lower95", "upper95"])
        for e in effects:
            w.writerow([e.param, e.label, _fmt(e.estimate), _fmt(e.se), _fmt(e.lower), _fmt(e.upper)])
