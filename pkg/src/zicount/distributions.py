"""Count response families in GAMLSS parameter order (mu, sigma, nu, tau).

=======  ==========================  ===================================
family   parameters                  role of each parameter
=======  ==========================  ===================================
PO       mu                          Poisson mean
NB       mu, sigma                   mean, dispersion
ZIP      mu, sigma                   overall mean, zero-inflation prob.
ZINB     mu, sigma, nu               NB mean, dispersion, zero inflation
ZIPIG    mu, sigma, nu               PIG mean, dispersion, zero inflation
ZIBNB    mu, sigma, nu, tau          BNB mean, two dispersions, inflation
=======  ==========================  ===================================

ZIP uses the mean parameterisation: the Poisson component has rate
``mu / (1 - sigma)`` so that ``E[Y] = mu``.

The beta negative binomial is

    P(y) = Γ(y + 1/ν) B(y + μν/σ, 1/σ + 1/ν + 1)
           / (Γ(y + 1) Γ(1/ν) B(μν/σ, 1/σ + 1))

i.e. a BNB with ``r = 1/ν``, ``alpha = 1/σ + 1``, ``beta = μν/σ`` and mean μ.
Without the ``Γ(1/ν)`` factor the masses do not sum to one (see
``tests/test_distributions.py::test_bnb_needs_gamma_of_inverse_nu``).

All evaluation happens in log space; the zero branch of every mixture is a
log-sum-exp of the inflation mass and the count component's zero mass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import specfun
from .specfun import DomainError, log_gamma, log_gamma_ratio

__all__ = [
    "FamilySpec",
    "FAMILIES",
    "INFLATION_MAX",
    "get_family",
    "log_pmf",
    "pmf",
    "cdf",
    "mean",
    "sample",
    "truncation_point",
    "support_table",
]

# Upper clamp for zero-inflation probabilities; the ZIP rate mu/(1-sigma)
# is singular at 1.
INFLATION_MAX = 1.0 - 1e-10
TAIL_EPS = 1e-12
TRUNCATION_CAP = 10**6


@dataclass(frozen=True)
class FamilySpec:
    family_id: str
    param_names: tuple[str, ...]
    # "mean" | "dispersion" | "inflation" per parameter
    param_kinds: tuple[str, ...]
    default_links: tuple[str, ...]
    description: str = ""

    @property
    def n_params(self) -> int:
        return len(self.param_names)

    @property
    def inflation_param(self) -> str | None:
        for name, kind in zip(self.param_names, self.param_kinds):
            if kind == "inflation":
                return name
        return None

    def validate(self, params) -> tuple[np.ndarray, ...]:
        """Check domains and return arrays, inflation clamped to INFLATION_MAX."""
        if len(params) != self.n_params:
            raise DomainError(f"{self.family_id} takes {self.n_params} parameters, got {len(params)}")
        out = []
        for name, kind, value in zip(self.param_names, self.param_kinds, params):
            v = np.asarray(value, dtype=float)
            if not np.all(np.isfinite(v)):
                raise DomainError(f"{self.family_id}: {name} must be finite")
            if kind == "inflation":
                if np.any(v < 0) or np.any(v >= 1):
                    raise DomainError(f"{self.family_id}: {name} must lie in [0, 1)")
                v = np.minimum(v, INFLATION_MAX)
            elif self.family_id == "ZIBNB" and name == "nu":
                if np.any(v <= 0):
                    raise DomainError("ZIBNB: nu must be > 0")
            elif np.any(v < 0):
                raise DomainError(f"{self.family_id}: {name} must be >= 0")
            out.append(v)
        return tuple(out)


FAMILIES = {
    "PO": FamilySpec("PO", ("mu",), ("mean",), ("log",), "Poisson"),
    "NB": FamilySpec("NB", ("mu", "sigma"), ("mean", "dispersion"), ("log", "log"),
                     "Negative binomial"),
    "ZIP": FamilySpec("ZIP", ("mu", "sigma"), ("mean", "inflation"), ("log", "logit"),
                      "Zero-inflated Poisson"),
    "ZINB": FamilySpec("ZINB", ("mu", "sigma", "nu"), ("mean", "dispersion", "inflation"),
                       ("log", "log", "logit"), "Zero-inflated negative binomial"),
    "ZIPIG": FamilySpec("ZIPIG", ("mu", "sigma", "nu"), ("mean", "dispersion", "inflation"),
                        ("log", "log", "logit"), "Zero-inflated Poisson inverse Gaussian"),
    "ZIBNB": FamilySpec("ZIBNB", ("mu", "sigma", "nu", "tau"),
                        ("mean", "dispersion", "dispersion", "inflation"),
                        ("log", "log", "log", "logit"), "Zero-inflated beta negative binomial"),
}


def get_family(family) -> FamilySpec:
    if isinstance(family, FamilySpec):
        return family
    try:
        return FAMILIES[str(family).upper()]
    except KeyError:
        raise DomainError(f"unknown family {family!r}; choose from {', '.join(FAMILIES)}") from None


# ---------------------------------------------------------------------------
# component log-pmfs (no validation; arguments broadcast)


def _gather_cumulative(steps, y):
    """Index a cumulative table ``steps`` (shape (K,) + param shape) at y."""
    y = np.asarray(y)
    shape = np.broadcast_shapes(y.shape, steps.shape[1:])
    pad = (1,) * (len(shape) - (steps.ndim - 1))
    table = np.broadcast_to(steps.reshape(steps.shape[:1] + pad + steps.shape[1:]),
                            steps.shape[:1] + shape)
    idx = np.broadcast_to(y, shape)[None]
    return np.take_along_axis(table, idx, axis=0)[0]


def _log_rising(sigma, y):
    """sum_{j<y} log(1 + j*sigma) for integer y >= 0."""
    sigma = np.asarray(sigma, dtype=float)
    top = int(np.max(y)) if np.size(y) else 0
    steps = np.zeros((top + 1,) + sigma.shape)
    for j in range(1, top + 1):
        steps[j] = steps[j - 1] + np.log1p((j - 1) * sigma)
    return _gather_cumulative(steps, y)


def _poisson_lp(y, rate):
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(y > 0, y * np.log(np.where(rate > 0, rate, 1.0)), 0.0)
        term = np.where((y > 0) & (rate <= 0), -np.inf, term)
    return term - rate - log_gamma(y + 1.0)


def _nb_lp(y, mu, sigma):
    # Γ(y+1/σ)/Γ(1/σ) (σμ)^y = μ^y Π_{j<y}(1 + jσ): stable as σ -> 0
    rising = _log_rising(sigma, y)
    y, mu, sigma = np.broadcast_arrays(y, mu, sigma)
    with np.errstate(divide="ignore", invalid="ignore"):
        ymu = np.where(y > 0, y * np.log(np.where(mu > 0, mu, 1.0)), 0.0)
        ymu = np.where((y > 0) & (mu <= 0), -np.inf, ymu)
        safe = np.where(sigma > 0, sigma, 1.0)
        zero_term = np.where(sigma > 0, -np.log1p(safe * mu) / safe, -mu)
    return rising + ymu - y * np.log1p(sigma * mu) - log_gamma(y + 1.0) + zero_term


def _pig_lp(y, mu, sigma):
    mu, sigma = np.broadcast_arrays(mu, sigma)
    pos = (sigma > 0) & (mu > 0)
    s = np.where(pos, sigma, 1.0)
    m = np.where(pos, mu, 1.0)
    alpha = np.sqrt(1.0 / s**2 + 2.0 * m / s)
    # 1/σ - α written without cancellation
    head = -(2.0 * m / s) / (1.0 / s + alpha)
    lp = (y * np.log(m) + head + specfun._log_bessel_k_half_scaled(y, alpha)
          - y * np.log(alpha * s) - log_gamma(y + 1.0) + 0.5 * np.log(2.0 * alpha / np.pi))
    if np.all(pos):
        return lp
    return np.where(pos, lp, _poisson_lp(y, mu))


def _bnb_lp(y, mu, sigma, nu):
    # Grouped as ratios of gammas so that small sigma (huge a and b, the
    # NB limit) stays accurate.
    y, mu, sigma, nu = np.broadcast_arrays(y, mu, sigma, nu)
    pos = (sigma > 0) & (mu > 0)
    s = np.where(pos, sigma, 1.0)
    m = np.where(pos, mu, 1.0)
    r = 1.0 / nu
    a = 1.0 / s + 1.0
    b = m * nu / s
    lp = (log_gamma_ratio(r, y) - log_gamma(y + 1.0)
          + log_gamma_ratio(b, y) - log_gamma_ratio(a + b + r, y)
          + log_gamma_ratio(a, r) - log_gamma_ratio(a + b, r))
    if np.all(pos):
        return lp
    return np.where(pos, lp, _nb_lp(y, mu, nu))


def _zero_inflate(y, base_lp, pi):
    with np.errstate(divide="ignore"):
        log_pi = np.log(pi)
        log_rest = np.log1p(-pi)
    return np.where(y == 0, np.logaddexp(log_pi, log_rest + base_lp), log_rest + base_lp)


def _log_pmf_unchecked(family_id, params, y):
    y = np.asarray(y)
    if family_id == "PO":
        return _poisson_lp(y, params[0])
    if family_id == "NB":
        return _nb_lp(y, params[0], params[1])
    if family_id == "ZIP":
        mu, pi = params
        return _zero_inflate(y, _poisson_lp(y, mu / (1.0 - pi)), pi)
    if family_id == "ZINB":
        return _zero_inflate(y, _nb_lp(y, params[0], params[1]), params[2])
    if family_id == "ZIPIG":
        return _zero_inflate(y, _pig_lp(y, params[0], params[1]), params[2])
    if family_id == "ZIBNB":
        return _zero_inflate(y, _bnb_lp(y, params[0], params[1], params[2]), params[3])
    raise DomainError(f"unknown family {family_id!r}")


def _check_y(y):
    y_arr = np.asarray(y)
    if not np.all(np.equal(np.mod(y_arr, 1), 0)) or np.any(y_arr < 0):
        raise DomainError("y must be a nonnegative integer")
    return y_arr.astype(np.int64)


# ---------------------------------------------------------------------------
# public evaluators


def log_pmf(family, params, y):
    """ln P(Y = y) for ``family`` at ``params`` (broadcast against ``y``)."""
    fam = get_family(family)
    scalar = np.ndim(y) == 0 and all(np.ndim(p) == 0 for p in params)
    vals = fam.validate(params)
    out = _log_pmf_unchecked(fam.family_id, vals, _check_y(y))
    return float(out) if scalar else out


def pmf(family, params, y):
    return np.exp(log_pmf(family, params, y))


def truncation_point(family, params, eps: float = TAIL_EPS, cap: int = TRUNCATION_CAP) -> int:
    """Smallest y with F(y) >= 1 - eps for scalar params, capped at ``cap``."""
    return len(support_table(family, params, eps, cap)) - 1


def support_table(family, params, eps: float = TAIL_EPS, cap: int = TRUNCATION_CAP) -> np.ndarray:
    """pmf(0..Y*) for scalar parameters, Y* as in :func:`truncation_point`."""
    fam = get_family(family)
    vals = fam.validate(params)
    if any(np.ndim(v) for v in vals):
        raise DomainError("support_table needs scalar parameters")
    top = 64
    while True:
        top = min(top, cap)
        p = np.exp(_log_pmf_unchecked(fam.family_id, vals, np.arange(top + 1)))
        cum = np.cumsum(p)
        hit = np.nonzero(cum >= 1.0 - eps)[0]
        if hit.size:
            return p[: hit[0] + 1]
        if top == cap:
            return p
        top *= 4


def cdf(family, params, y):
    """F(y) = sum_{k<=y} pmf(k); F(y) = 0 for y < 0.

    ``params`` components and ``y`` broadcast together, so per-observation
    parameter vectors evaluate in one call.
    """
    fam = get_family(family)
    scalar = np.ndim(y) == 0 and all(np.ndim(p) == 0 for p in params)
    vals = fam.validate(params)
    y = np.asarray(y)
    if not np.all(np.equal(np.mod(y, 1), 0)):
        raise DomainError("y must be an integer")
    y = y.astype(np.int64)
    shape = np.broadcast_shapes(y.shape, *(v.shape for v in vals))
    yb = np.broadcast_to(y, shape).ravel()
    vb = [np.broadcast_to(v, shape).ravel()[:, None] for v in vals]
    top = max(int(yb.max()) if yb.size else 0, 0)
    grid = np.arange(top + 1)[None, :]
    p = np.exp(_log_pmf_unchecked(fam.family_id, vb, grid))
    cum = np.minimum(np.cumsum(p, axis=1), 1.0)
    out = np.where(yb >= 0, cum[np.arange(len(yb)), np.clip(yb, 0, None)], 0.0).reshape(shape)
    return float(out) if scalar else out


def mean(family, params):
    fam = get_family(family)
    vals = fam.validate(params)
    mu = vals[0]
    if fam.family_id in ("ZINB", "ZIPIG"):
        out = (1.0 - vals[2]) * mu
    elif fam.family_id == "ZIBNB":
        out = (1.0 - vals[3]) * mu
    else:
        out = mu
    return float(out) if np.ndim(out) == 0 else out


def sample(family, params, rng: np.random.Generator, n: int) -> np.ndarray:
    """``n`` iid draws by inverse-cdf search over the truncated support."""
    if n < 1:
        raise ValueError("n must be >= 1")
    table = support_table(family, params)
    cum = np.cumsum(table)
    u = rng.random(n)
    return np.minimum(np.searchsorted(cum, u, side="right"), len(table) - 1).astype(np.int64)
