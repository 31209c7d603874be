"""Zero-inflated count regression with a linear predictor for every distribution parameter."""

from .dataset import DataError, ObservationTable, cell_summaries, read_csv, trajan, write_csv
from .diagnostics import quantile_residuals, term_effects, worm_series
from .distributions import FAMILIES, cdf, get_family, log_pmf, mean, pmf, sample, support_table
from .fitting import FitOptions, FittedModel, ModelSpec, fit, information_criteria
from .linkdesign import DesignError, build_design, parse_terms
from .selection import CandidateScope, compare_models, step_gaic_all
from .specfun import DomainError

__version__ = "0.1.0"

__all__ = [
    "CandidateScope", "DataError", "DesignError", "DomainError", "FAMILIES", "FitOptions",
    "FittedModel", "ModelSpec", "ObservationTable", "build_design", "cdf", "cell_summaries",
    "compare_models", "fit", "get_family", "information_criteria", "log_pmf", "mean",
    "parse_terms", "pmf", "quantile_residuals", "read_csv", "sample", "step_gaic_all",
    "support_table", "term_effects", "trajan", "worm_series", "write_csv",
]
