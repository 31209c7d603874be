"""Joint maximum-likelihood fitting of all distribution-parameter predictors.

Every parameter of the family gets its own design matrix and link; the
stacked coefficient vector is optimised directly with BFGS on central
difference gradients, then polished with a few Newton steps on the
numerically differentiated Hessian. Deviance follows the GAMLSS
convention, ``-2 * loglik`` with no saturated-model term.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .dataset import ObservationTable
from .distributions import INFLATION_MAX, FamilySpec, _log_pmf_unchecked, get_family
from .linkdesign import DesignMatrix, Link, TermList, build_design, get_link, intercept_only, parse_terms

__all__ = [
    "ModelSpec",
    "FitOptions",
    "Convergence",
    "FittedModel",
    "Objective",
    "neg_log_likelihood",
    "numerical_gradient",
    "numerical_hessian",
    "fit",
    "information_criteria",
]

log = logging.getLogger(__name__)

# Dispersion parameters outside this range are treated as leaving the domain;
# beyond it the BNB evaluation loses precision and the likelihood is flat.
DISPERSION_RANGE = (1e-8, 1e8)


@dataclass(frozen=True)
class ModelSpec:
    family: FamilySpec
    terms: tuple[TermList, ...]
    links: tuple[Link, ...]

    def __post_init__(self):
        n = self.family.n_params
        if len(self.terms) != n or len(self.links) != n:
            raise ValueError(f"{self.family.family_id} needs exactly {n} term lists and links")

    @classmethod
    def build(cls, family, terms=None, links=None) -> "ModelSpec":
        """Convenience constructor.

        ``terms`` maps parameter name to a TermList or term string; missing
        parameters are intercept-only. ``links`` likewise overrides the
        family's default links.
        """
        fam = get_family(family)
        terms = terms or {}
        links = links or {}
        unknown = (set(terms) | set(links)) - set(fam.param_names)
        if unknown:
            raise ValueError(f"{fam.family_id} has no parameter(s) {sorted(unknown)}")
        tl = []
        for p in fam.param_names:
            t = terms.get(p, intercept_only())
            tl.append(parse_terms(t) if isinstance(t, str) else t)
        lk = tuple(get_link(links.get(p, d)) for p, d in zip(fam.param_names, fam.default_links))
        return cls(fam, tuple(tl), lk)

    def replace_terms(self, param: str, terms: TermList) -> "ModelSpec":
        i = self.family.param_names.index(param)
        new = list(self.terms)
        new[i] = terms
        return ModelSpec(self.family, tuple(new), self.links)

    def terms_for(self, param: str) -> TermList:
        return self.terms[self.family.param_names.index(param)]

    def describe(self) -> str:
        parts = [f"{p}: {t.formula()}" for p, t in zip(self.family.param_names, self.terms)]
        return f"{self.family.family_id}(" + ", ".join(parts) + ")"

    def to_dict(self) -> dict:
        return {
            "family": self.family.family_id,
            "terms": {p: t.formula() for p, t in zip(self.family.param_names, self.terms)},
            "links": {p: lk.link_id for p, lk in zip(self.family.param_names, self.links)},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls.build(d["family"], d.get("terms"), d.get("links"))


@dataclass(frozen=True)
class FitOptions:
    max_iter: int = 500
    tol: float = 1e-6
    n_starts: int = 5
    seed: int = 0
    start_sd: float = 0.5


@dataclass
class Convergence:
    """Outcome of the optimiser.

    ``status`` is "converged" (gradient norm within ``tol * (1 + |nll|)``), "boundary"
    (stopped short of tolerance with an estimate on the edge of the parameter
    space, where the supremum is approached rather than attained) or
    "failed".
    """

    converged: bool
    iterations: int
    grad_norm: float
    boundary: dict[str, bool] = field(default_factory=dict)
    best_start: int = 0
    n_starts: int = 1
    message: str = ""
    vcov_available: bool = True

    @property
    def status(self) -> str:
        if self.converged:
            return "converged"
        if any(self.boundary.values()):
            return "boundary"
        return "failed"


@dataclass
class FittedModel:
    spec: ModelSpec
    coefficients: dict[str, np.ndarray]
    column_labels: dict[str, tuple[str, ...]]
    loglik: float
    df: int
    n: int
    vcov: np.ndarray | None
    convergence: Convergence
    data_source: str = "memory"
    data_fingerprint: str = ""

    @property
    def deviance(self) -> float:
        return -2.0 * self.loglik

    @property
    def aic(self) -> float:
        return self.deviance + 2.0 * self.df

    @property
    def bic(self) -> float:
        return self.deviance + self.df * math.log(self.n)

    def gaic(self, k: float) -> float:
        return self.deviance + k * self.df

    @property
    def theta(self) -> np.ndarray:
        return np.concatenate([self.coefficients[p] for p in self.spec.family.param_names])

    def coefficient_index(self) -> list[tuple[str, str]]:
        """(parameter, column label) for each entry of :attr:`theta`."""
        return [(p, lab) for p in self.spec.family.param_names for lab in self.column_labels[p]]

    def fitted_params(self, data: ObservationTable) -> tuple[np.ndarray, ...]:
        """Per-observation distribution parameters on their natural scale."""
        out = []
        for p, t, lk in zip(self.spec.family.param_names, self.spec.terms, self.spec.links):
            X = build_design(data, t).matrix
            out.append(lk.inverse(X @ self.coefficients[p]))
        return _clamp_params(self.spec.family, out)

    def to_dict(self) -> dict:
        c = self.convergence
        return {
            "model": self.spec.to_dict(),
            "data": self.data_source,
            "data_fingerprint": self.data_fingerprint,
            "n": self.n,
            "coefficients": {
                p: dict(zip(self.column_labels[p], map(float, self.coefficients[p])))
                for p in self.spec.family.param_names
            },
            "loglik": self.loglik,
            "deviance": self.deviance,
            "df": self.df,
            "aic": self.aic,
            "bic": self.bic,
            "vcov": None if self.vcov is None else self.vcov.tolist(),
            "convergence": {
                "converged": c.converged,
                "status": c.status,
                "iterations": c.iterations,
                "grad_norm": c.grad_norm,
                "boundary": c.boundary,
                "best_start": c.best_start,
                "n_starts": c.n_starts,
                "message": c.message,
                "vcov_available": c.vcov_available,
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FittedModel":
        spec = ModelSpec.from_dict(d["model"])
        coefs = {p: np.array(list(v.values()), dtype=float) for p, v in d["coefficients"].items()}
        labels = {p: tuple(v) for p, v in d["coefficients"].items()}
        c = d["convergence"]
        conv = Convergence(c["converged"], c["iterations"], c["grad_norm"], dict(c["boundary"]),
                           c["best_start"], c["n_starts"], c["message"], c["vcov_available"])
        vcov = None if d.get("vcov") is None else np.array(d["vcov"], dtype=float)
        return cls(spec, coefs, labels, -0.5 * d["deviance"], d["df"], d["n"], vcov, conv,
                   d.get("data", "memory"), d.get("data_fingerprint", ""))


def _clamp_params(family: FamilySpec, params):
    return tuple(np.minimum(v, INFLATION_MAX) if kind == "inflation" else v
                 for v, kind in zip(params, family.param_kinds))


class Objective:
    """Negative log-likelihood of ``spec`` on ``data`` as a function of theta.

    Observations sharing every design row and the response are collapsed
    into one weighted pattern, which makes factorial designs cheap.
    """

    def __init__(self, spec: ModelSpec, data: ObservationTable):
        self.spec = spec
        self.designs: list[DesignMatrix] = [build_design(data, t) for t in spec.terms]
        self.sizes = [d.n_cols for d in self.designs]
        self.n = data.n
        stacked = np.column_stack([d.matrix for d in self.designs] + [data.response])
        patterns, counts = np.unique(stacked, axis=0, return_counts=True)
        self.weights = counts.astype(float)
        self.y = patterns[:, -1].astype(np.int64)
        self.blocks = []
        start = 0
        for k in self.sizes:
            self.blocks.append(patterns[:, start:start + k])
            start += k
        self.dim = start

    def split(self, theta) -> list[np.ndarray]:
        out, start = [], 0
        for k in self.sizes:
            out.append(np.asarray(theta[start:start + k], dtype=float))
            start += k
        return out

    def params(self, theta):
        """Linked parameters per pattern, or None if any leaves its domain."""
        fam = self.spec.family
        out = []
        with np.errstate(over="ignore", under="ignore"):
            for X, beta, lk, kind in zip(self.blocks, self.split(theta), self.spec.links, fam.param_kinds):
                v = lk.inverse(X @ beta)
                if not np.all(np.isfinite(v)):
                    return None
                if kind == "inflation":
                    if np.any(v > INFLATION_MAX) or np.any(v < 0):
                        return None
                elif kind == "dispersion":
                    if np.any(v < DISPERSION_RANGE[0]) or np.any(v > DISPERSION_RANGE[1]):
                        return None
                elif np.any(v <= 0):
                    return None
                out.append(v)
        return out

    def __call__(self, theta) -> float:
        params = self.params(theta)
        if params is None:
            return math.inf
        with np.errstate(all="ignore"):
            lp = _log_pmf_unchecked(self.spec.family.family_id, params, self.y)
        value = -float(np.dot(self.weights, lp))
        return value if math.isfinite(value) else math.inf


def neg_log_likelihood(spec: ModelSpec, data: ObservationTable, theta) -> float:
    """-sum_i log P(y_i | linked parameters); +inf outside the parameter domain."""
    obj = Objective(spec, data)
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (obj.dim,):
        raise ValueError(f"theta must have length {obj.dim}, got {theta.shape}")
    return obj(theta)


def numerical_gradient(f, theta, rel_step: float = 1e-6) -> np.ndarray:
    """Central differences with step ``rel_step * (1 + |theta_i|)``."""
    theta = np.asarray(theta, dtype=float)
    g = np.empty_like(theta)
    for i in range(len(theta)):
        h = rel_step * (1.0 + abs(theta[i]))
        up, down = theta.copy(), theta.copy()
        up[i] += h
        down[i] -= h
        g[i] = (f(up) - f(down)) / (2.0 * h)
    return g


def numerical_hessian(f, theta, rel_step: float = 1e-4) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    p = len(theta)
    h = rel_step * (1.0 + np.abs(theta))
    H = np.empty((p, p))
    f0 = f(theta)
    for i in range(p):
        e_i = np.zeros(p)
        e_i[i] = h[i]
        H[i, i] = (f(theta + e_i) - 2.0 * f0 + f(theta - e_i)) / h[i] ** 2
        for j in range(i + 1, p):
            e_j = np.zeros(p)
            e_j[j] = h[j]
            H[i, j] = H[j, i] = (f(theta + e_i + e_j) - f(theta + e_i - e_j)
                                 - f(theta - e_i + e_j) + f(theta - e_i - e_j)) / (4.0 * h[i] * h[j])
    return H


def _initial_theta(obj: Objective, data: ObservationTable) -> np.ndarray:
    y = data.response.astype(float)
    ybar = max(float(np.mean(y)), 1e-3)
    p0 = float(np.mean(y == 0))
    pois0 = math.exp(-ybar)
    excess = (p0 - pois0) / (1.0 - pois0) if pois0 < 1 else 0.5
    excess = min(max(excess, 0.01), 0.9)
    theta = []
    for design, lk, kind in zip(obj.designs, obj.spec.links, obj.spec.family.param_kinds):
        if kind == "mean":
            target = ybar
        elif kind == "inflation":
            target = excess
        else:
            target = 1.0
        eta = float(lk.forward(target)) if lk.link_id != "identity" else target
        # constant predictor in whatever coding the design uses
        beta, *_ = np.linalg.lstsq(design.matrix, np.full(design.n_rows, eta), rcond=None)
        theta.append(beta)
    return np.concatenate(theta)


def _gradient_tolerance(f, tol):
    # The objective only resolves to ~1e-16 * |f|, which bounds how small a
    # finite-difference gradient can get; scale the tolerance with it.
    return tol * (1.0 + abs(f))


def _newton_polish(obj, theta, tol, max_steps=25):
    f = obj(theta)
    g = numerical_gradient(obj, theta)
    steps = 0
    while np.linalg.norm(g) > tol and steps < max_steps:
        H = numerical_hessian(obj, theta)
        try:
            if np.min(np.linalg.eigvalsh(H)) <= 0:
                break
            direction = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            break
        t = 1.0
        while t > 1e-8:
            cand = theta + t * direction
            fc = obj(cand)
            if fc <= f:
                break
            t *= 0.5
        else:
            break
        theta, f = cand, fc
        g = numerical_gradient(obj, theta)
        steps += 1
    return theta, f, g, steps


def _single_start(obj, theta0, opts: FitOptions):
    res = optimize.minimize(obj, theta0, jac=lambda th: numerical_gradient(obj, th),
                            method="BFGS", options={"gtol": opts.tol, "maxiter": opts.max_iter})
    theta, f = res.x, res.fun
    if not math.isfinite(f):
        return theta, f, np.full_like(theta, np.inf), res.nit, res.message
    theta, f, g, extra = _newton_polish(obj, theta, opts.tol)
    return theta, f, g, res.nit + extra, res.message


def _boundary_flags(spec: ModelSpec, params) -> dict[str, bool]:
    flags = {}
    for name, kind, v in zip(spec.family.param_names, spec.family.param_kinds, params):
        if kind == "inflation":
            flags[name] = bool(np.any(v >= 1.0 - 1e-8) or np.any(v <= 1e-8))
        elif kind == "dispersion":
            flags[name] = bool(np.any(v <= 1e-4) or np.any(v >= 1e4))
    return flags


def fit(spec: ModelSpec, data: ObservationTable, options: FitOptions | None = None) -> FittedModel:
    """Maximum-likelihood fit of ``spec`` to ``data``.

    Start 0 is a constant predictor per parameter (sample mean, unit
    dispersion, observed zero excess over Poisson); further starts add
    N(0, start_sd^2) noise from a generator seeded with ``options.seed``.
    The best objective wins, ties going to the lowest start index.
    Non-convergence is reported in ``convergence``, never raised.
    """
    opts = options or FitOptions()
    if data.n == 0:
        raise ValueError("cannot fit an empty table")
    obj = Objective(spec, data)
    theta0 = _initial_theta(obj, data)
    rng = np.random.default_rng(opts.seed)
    starts = [theta0] + [theta0 + rng.normal(0.0, opts.start_sd, size=theta0.shape)
                         for _ in range(max(opts.n_starts, 1) - 1)]
    best = None
    for i, th in enumerate(starts):
        if not math.isfinite(obj(th)):
            log.debug("start %d infeasible, skipped", i)
            continue
        theta, f, g, nit, msg = _single_start(obj, th, opts)
        log.debug("start %d: nll=%.6f |g|=%.2e", i, f, np.linalg.norm(g))
        if best is None or f < best[1] - 1e-9:
            best = (theta, f, g, nit, msg, i)
    if best is None:
        raise RuntimeError(f"no feasible starting value for {spec.describe()}")
    theta, f, g, nit, msg, idx = best
    grad_norm = float(np.linalg.norm(g))

    vcov = None
    if math.isfinite(f):
        H = numerical_hessian(obj, theta)
        try:
            if np.all(np.isfinite(H)) and np.min(np.linalg.eigvalsh(H)) > 0:
                vcov = np.linalg.inv(H)
                vcov = 0.5 * (vcov + vcov.T)
        except np.linalg.LinAlgError:
            vcov = None

    params = obj.params(theta)
    boundary = _boundary_flags(spec, params) if params is not None else {}
    converged = math.isfinite(f) and grad_norm <= _gradient_tolerance(f, opts.tol)
    conv = Convergence(converged, int(nit), grad_norm, boundary, idx, len(starts),
                       str(msg), vcov is not None)
    names = spec.family.param_names
    parts = obj.split(theta)
    return FittedModel(
        spec=spec,
        coefficients={p: b for p, b in zip(names, parts)},
        column_labels={p: d.column_labels for p, d in zip(names, obj.designs)},
        loglik=-f,
        df=obj.dim,
        n=data.n,
        vcov=vcov,
        convergence=conv,
        data_source=data.source,
        data_fingerprint=data_fingerprint(data),
    )


def data_fingerprint(data: ObservationTable) -> str:
    h = hashlib.sha1(np.ascontiguousarray(data.response).tobytes())
    for name in sorted(data.factors):
        h.update(name.encode())
        h.update("\x1f".join(map(str, data.factors[name])).encode())
    return h.hexdigest()[:16]


def information_criteria(fm, n: int) -> dict[str, float]:
    """AIC = deviance + 2 df and BIC = deviance + df ln n.

    ``fm`` is a FittedModel or any object with ``deviance`` and ``df``.
    """
    dev, df = fm.deviance, fm.df
    return {"aic": dev + 2.0 * df, "bic": dev + df * math.log(n) if df else dev}
