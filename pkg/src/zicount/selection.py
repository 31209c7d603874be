"""Stepwise GAIC selection over every distribution parameter, and model tables.

The search runs seven passes in a fixed order:

1. forward  mu     (other parameters constant)
2. forward  sigma
3. forward  nu
4. forward  tau
5. backward nu
6. backward sigma
7. backward mu

Passes for parameters the family does not have are skipped. A forward pass
repeatedly adds the single candidate term with the lowest GAIC while that
improves on the current model; a backward pass drops terms the same way.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .dataset import ObservationTable
from .distributions import get_family
from .fitting import FitOptions, FittedModel, ModelSpec, fit
from .linkdesign import DesignError, Term, TermList, factor, interaction

__all__ = [
    "CandidateScope",
    "StepRecord",
    "SelectionTrace",
    "step_gaic_all",
    "compare_models",
    "format_table",
    "to_cell_means",
    "parse_scope",
]

IMPROVEMENT = 1e-6

_PASSES = [
    (1, "mu", "forward"),
    (2, "sigma", "forward"),
    (3, "nu", "forward"),
    (4, "tau", "forward"),
    (5, "nu", "backward"),
    (6, "sigma", "backward"),
    (7, "mu", "backward"),
]


@dataclass(frozen=True)
class CandidateScope:
    """Terms the search may add. Interactions need both main effects present."""

    terms: tuple[Term, ...]

    @classmethod
    def default(cls, data: ObservationTable) -> "CandidateScope":
        names = list(data.factors)
        terms = [factor(n) for n in names]
        terms += [interaction(a, b) for i, a in enumerate(names) for b in names[i + 1:]]
        return cls(tuple(terms))

    def validate(self, data: ObservationTable) -> None:
        if not self.terms:
            raise DesignError("empty candidate scope")
        for t in self.terms:
            for name in t.factors:
                if name not in data.factors:
                    raise DesignError(f"scope term {t.label!r}: unknown factor {name!r}")


def parse_scope(text: str) -> CandidateScope:
    """``"photoperiod,bap,photoperiod:bap"`` -> CandidateScope."""
    terms = []
    for piece in (p.strip() for p in text.split(",")):
        if not piece:
            continue
        parts = piece.replace("*", ":").split(":")
        if len(parts) == 1:
            terms.append(factor(parts[0]))
        elif len(parts) == 2:
            terms.append(interaction(*parts))
        else:
            raise DesignError(f"only pairwise interactions supported: {piece!r}")
    return CandidateScope(tuple(dict.fromkeys(terms)))


@dataclass
class StepRecord:
    step: int
    param: str
    direction: str
    candidate: str
    gaic: float | None
    accepted: bool
    model: str
    note: str = ""


@dataclass
class SelectionTrace:
    family: str
    k: float
    records: list[StepRecord] = field(default_factory=list)
    final_spec: ModelSpec | None = None
    final_fit: FittedModel | None = None

    def log_lines(self) -> list[str]:
        out = [f"# stepwise GAIC, family={self.family}, k={self.k:g}"]
        for r in self.records:
            g = "NA" if r.gaic is None else f"{r.gaic:.4f}"
            flag = "accept" if r.accepted else "reject"
            note = f"  ({r.note})" if r.note else ""
            out.append(f"step {r.step} {r.direction:8s} {r.param:5s} {r.candidate:24s} "
                       f"GAIC={g:>11s} {flag}{note}")
        if self.final_fit is not None:
            out.append(f"# final {self.final_spec.describe()} AIC={self.final_fit.aic:.4f}")
        return out

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "k": self.k,
            "steps": [vars(r) for r in self.records],
            "final_model": None if self.final_spec is None else self.final_spec.to_dict(),
            "final_aic": None if self.final_fit is None else self.final_fit.aic,
            "final_gaic": None if self.final_fit is None else self.final_fit.gaic(self.k),
        }

    def write(self, log_path, json_path=None) -> None:
        with open(log_path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(self.log_lines()) + "\n")
        if json_path is not None:
            with open(json_path, "w", encoding="utf-8") as fh:
                json.dump(self.to_dict(), fh, indent=2)


def to_cell_means(spec: ModelSpec) -> ModelSpec:
    """Same model, with every factor-bearing predictor in cell-means coding."""
    terms = []
    for t in spec.terms:
        body = t.factor_terms
        if any(x.kind == "factor" for x in body):
            terms.append(TermList(body, "cell_means"))
        else:
            terms.append(t)
    return ModelSpec(spec.family, tuple(terms), spec.links)


class _Search:
    def __init__(self, data, scope, k, options):
        self.data = data
        self.scope = scope
        self.k = k
        self.options = options
        self.cache: dict[str, FittedModel | None] = {}

    def score(self, spec: ModelSpec):
        key = spec.describe()
        if key not in self.cache:
            fm = fit(spec, self.data, self.options)
            self.cache[key] = None if fm.convergence.status == "failed" else fm
        fm = self.cache[key]
        return None if fm is None else fm.gaic(self.k)

    def addable(self, terms: TermList):
        present = set(terms.terms)
        mains = {t.factors[0] for t in present if t.kind == "factor"}
        for t in self.scope.terms:
            if t in present:
                continue
            if t.kind == "interaction" and not set(t.factors) <= mains:
                continue
            yield t

    @staticmethod
    def droppable(terms: TermList):
        inter = [t for t in terms.terms if t.kind == "interaction"]
        for t in terms.factor_terms:
            if t.kind == "factor" and any(t.factors[0] in i.factors for i in inter):
                continue
            yield t

    def run_pass(self, trace, spec, step, param, direction):
        current = self.score(spec)
        if current is None:
            raise RuntimeError(f"stepwise search: starting model {spec.describe()} failed to converge")
        while True:
            terms = spec.terms_for(param)
            moves = self.addable(terms) if direction == "forward" else self.droppable(terms)
            scored = []
            for term in sorted(moves, key=lambda t: t.label):
                new_terms = terms.with_term(term) if direction == "forward" else terms.without_term(term)
                cand = spec.replace_terms(param, new_terms)
                g = self.score(cand)
                sign = "+" if direction == "forward" else "-"
                rec = StepRecord(step, param, direction, sign + term.label, g, False, cand.describe(),
                                 "" if g is not None else "fit did not converge; skipped")
                trace.records.append(rec)
                if g is not None:
                    scored.append((g, term.label, rec, cand))
            if not scored:
                return spec
            g, _, rec, cand = min(scored, key=lambda s: (s[0], s[1]))
            if g < current - IMPROVEMENT:
                rec.accepted = True
                spec, current = cand, g
            else:
                return spec


def step_gaic_all(family, data: ObservationTable, scope: CandidateScope | None = None,
                  k: float = 2.0, options: FitOptions | None = None) -> SelectionTrace:
    """Stepwise GAIC (= deviance + k * df) selection for every parameter.

    Parameters not yet visited stay intercept-only. The returned trace holds
    every candidate evaluated; the final model is refitted in cell-means
    coding, which leaves the likelihood unchanged.
    """
    if not k > 0:
        raise ValueError("penalty k must be positive")
    fam = get_family(family)
    scope = scope or CandidateScope.default(data)
    scope.validate(data)
    search = _Search(data, scope, k, options or FitOptions())
    trace = SelectionTrace(fam.family_id, k)
    spec = ModelSpec.build(fam)
    for step, param, direction in _PASSES:
        if param in fam.param_names:
            spec = search.run_pass(trace, spec, step, param, direction)
    trace.final_spec = to_cell_means(spec)
    trace.final_fit = fit(trace.final_spec, data, options or FitOptions())
    return trace


def _fingerprint(fm: FittedModel):
    return (fm.n, fm.data_fingerprint)


def compare_models(fits, criterion: str = "aic") -> list[dict]:
    """Rows sorted by ``criterion`` ascending; ties keep input order."""
    fits = list(fits)
    if not fits:
        return []
    if criterion not in ("aic", "bic"):
        raise ValueError("criterion must be 'aic' or 'bic'")
    if len({_fingerprint(f) for f in fits}) > 1:
        raise ValueError("compare_models: fits come from different data sets")
    rows = []
    for i, fm in enumerate(fits):
        fam = fm.spec.family
        terms = {}
        for p in ("mu", "sigma", "nu", "tau"):
            terms[p] = fm.spec.terms_for(p).summary() if p in fam.param_names else "-"
        rows.append({
            "index": i,
            "family": fam.family_id,
            "deviance": fm.deviance,
            "df": fm.df,
            "aic": fm.aic,
            "bic": fm.bic,
            "status": fm.convergence.status,
            **terms,
        })
    rows.sort(key=lambda r: (r[criterion], r["index"]))
    return rows


def format_table(rows) -> str:
    head = f"{'Model':7s} {'-2logLik':>10s} {'df':>3s} {'AIC':>10s} {'BIC':>10s}  " \
           f"{'mu':14s} {'sigma':14s} {'nu':14s} {'tau':14s}"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(f"{r['family']:7s} {r['deviance']:10.3f} {r['df']:3d} {r['aic']:10.3f} "
                     f"{r['bic']:10.3f}  {r['mu']:14s} {r['sigma']:14s} {r['nu']:14s} {r['tau']:14s}")
    return "\n".join(lines)

