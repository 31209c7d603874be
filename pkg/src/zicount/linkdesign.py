"""Link functions, term lists and factor design matrices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .dataset import ObservationTable

__all__ = [
    "DesignError",
    "Link",
    "LINKS",
    "get_link",
    "Term",
    "TermList",
    "DesignMatrix",
    "parse_terms",
    "build_design",
    "apply_link",
]


class DesignError(ValueError):
    """Unknown factor, malformed term string or unidentifiable design."""


@dataclass(frozen=True)
class Link:
    link_id: str

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        if self.link_id == "log":
            return np.log(x)
        if self.link_id == "logit":
            return special.logit(x)
        return x

    def inverse(self, eta):
        eta = np.asarray(eta, dtype=float)
        if self.link_id == "log":
            return np.exp(eta)
        if self.link_id == "logit":
            return special.expit(eta)
        return eta

    def inverse_derivative(self, eta):
        eta = np.asarray(eta, dtype=float)
        if self.link_id == "log":
            return np.exp(eta)
        if self.link_id == "logit":
            p = special.expit(eta)
            return p * (1.0 - p)
        return np.ones_like(eta)


LINKS = {name: Link(name) for name in ("log", "logit", "identity")}


def get_link(link) -> Link:
    if isinstance(link, Link):
        return link
    try:
        return LINKS[link]
    except KeyError:
        raise DesignError(f"unknown link {link!r}") from None


@dataclass(frozen=True, order=True)
class Term:
    """``kind`` is "intercept", "factor" or "interaction"."""

    kind: str
    factors: tuple[str, ...] = ()

    @property
    def label(self) -> str:
        if self.kind == "intercept":
            return "1"
        return ":".join(self.factors)

    def __str__(self):
        return self.label


INTERCEPT = Term("intercept")


def factor(name: str) -> Term:
    return Term("factor", (name,))


def interaction(a: str, b: str) -> Term:
    return Term("interaction", (a, b))


@dataclass(frozen=True)
class TermList:
    terms: tuple[Term, ...]
    coding: str = "treatment"  # or "cell_means"

    def __post_init__(self):
        if self.coding not in ("treatment", "cell_means"):
            raise DesignError(f"unknown coding {self.coding!r}")
        mains = {t.factors[0] for t in self.terms if t.kind == "factor"}
        for t in self.terms:
            if t.kind == "interaction" and not set(t.factors) <= mains:
                raise DesignError(f"interaction {t.label} needs both main effects")
        if self.coding == "cell_means" and not mains:
            raise DesignError("cell-means coding needs at least one factor")

    @property
    def factor_terms(self) -> tuple[Term, ...]:
        return tuple(t for t in self.terms if t.kind != "intercept")

    def with_term(self, term: Term) -> "TermList":
        return TermList(self._ordered(self.terms + (term,)), self.coding)

    def without_term(self, term: Term) -> "TermList":
        rest = tuple(t for t in self.terms if t != term)
        coding = self.coding
        if coding == "cell_means" and not any(t.kind == "factor" for t in rest):
            coding, rest = "treatment", (INTERCEPT,)
        return TermList(rest, coding)

    @staticmethod
    def _ordered(terms):
        order = {"intercept": 0, "factor": 1, "interaction": 2}
        seen = dict.fromkeys(terms)
        return tuple(sorted(seen, key=lambda t: order[t.kind]))

    def formula(self) -> str:
        body = "+".join(t.label for t in self.factor_terms)
        if self.coding == "cell_means":
            return "~0+" + body
        return body or "1"

    def summary(self) -> str:
        """Compact description in the style of a model comparison table."""
        body = self.factor_terms
        if not body:
            return "intercept"
        return "+".join(t.label for t in body)

    def __str__(self):
        return self.formula()


def intercept_only() -> TermList:
    return TermList((INTERCEPT,))


def parse_terms(text: str) -> TermList:
    """Parse a compact term string.

    ``"1"`` intercept only; ``"a"`` / ``"a+b"`` main effects; ``"a*b"`` main
    effects plus interaction; ``"a:b"`` interaction; a ``"~0+"`` prefix
    selects cell-means coding (no intercept column). A leading ``"~"`` is
    optional otherwise.
    """
    s = text.replace(" ", "")
    coding = "treatment"
    if s.startswith("~"):
        s = s[1:]
    if s.startswith("0+") or s.startswith("-1+"):
        coding = "cell_means"
        s = s.split("+", 1)[1]
    if s in ("", "1"):
        if coding == "cell_means":
            raise DesignError(f"{text!r}: cell-means coding needs a factor")
        return intercept_only()
    terms = [] if coding == "cell_means" else [INTERCEPT]
    for piece in s.split("+"):
        if piece == "1":
            continue
        if not piece or any(not part for part in piece.replace("*", ":").split(":")):
            raise DesignError(f"malformed term string {text!r}")
        if "*" in piece:
            names = piece.split("*")
            if len(names) != 2:
                raise DesignError(f"only pairwise interactions supported: {piece!r}")
            terms += [factor(names[0]), factor(names[1]), interaction(*names)]
        elif ":" in piece:
            names = piece.split(":")
            if len(names) != 2:
                raise DesignError(f"only pairwise interactions supported: {piece!r}")
            terms.append(interaction(*names))
        else:
            terms.append(factor(piece))
    return TermList(TermList._ordered(terms), coding)


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    matrix: np.ndarray
    column_labels: tuple[str, ...]

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_cols(self) -> int:
        return self.matrix.shape[1]


def _indicators(data: ObservationTable, name: str, drop_first: bool):
    levels = data.levels[name]
    if drop_first:
        levels = levels[1:]
    col = data.factors[name]
    return [(f"{data.label(name)}{lv}", (col == lv).astype(float)) for lv in levels]


def build_design(data: ObservationTable, terms: TermList) -> DesignMatrix:
    """Indicator design matrix for ``terms`` on ``data``.

    Column order: intercept, main effects in declaration order (levels in the
    table's level order), then interactions. Treatment coding drops each
    factor's first level; cell-means coding keeps every level of the first
    factor and omits the intercept.
    """
    for t in terms.terms:
        for name in t.factors:
            if name not in data.factors:
                raise DesignError(f"unknown factor {name!r}")
    cols: list[tuple[str, np.ndarray]] = []
    if terms.coding == "treatment" and INTERCEPT in terms.terms:
        cols.append(("(Intercept)", np.ones(data.n)))
    first = True
    for t in terms.terms:
        if t.kind == "factor":
            full = terms.coding == "cell_means" and first
            cols += _indicators(data, t.factors[0], drop_first=not full)
            first = False
    for t in terms.terms:
        if t.kind == "interaction":
            a, b = t.factors
            for la, ca in _indicators(data, a, True):
                for lb, cb in _indicators(data, b, True):
                    cols.append((f"{la}:{lb}", ca * cb))
    if not cols:
        raise DesignError("empty design")
    X = np.column_stack([c for _, c in cols])
    labels = tuple(label for label, _ in cols)
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise DesignError(f"rank-deficient design for {terms.formula()!r}: "
                          f"{np.linalg.matrix_rank(X)} < {X.shape[1]} columns")
    return DesignMatrix(X, labels)


def apply_link(link, design: DesignMatrix, coefficients) -> np.ndarray:
    beta = np.asarray(coefficients, dtype=float)
    if beta.shape != (design.n_cols,):
        raise DesignError(f"expected {design.n_cols} coefficients, got {beta.shape}")
    return get_link(link).inverse(design.matrix @ beta)
