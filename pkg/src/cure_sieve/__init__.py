"""Sieve maximum likelihood for the non-mixture Cox cure model with
left-truncated, partly interval-censored data."""

from .errors import (
    ConfigurationError,
    CureSieveError,
    DataError,
    DomainError,
    EvaluationError,
    InferenceError,
    McError,
    NonConvergence,
)
from .inference import beta_ci, cumhaz_increment, observed_information, score_matrix
from .likelihood import (
    Constraints,
    Dataset,
    Params,
    Status,
    Subject,
    cum_haz,
    grad_loglik,
    hazard,
    loglik,
    loglik_bform,
)
from .optimizer import FitConfig, FitResult, fit, project
from .simulate import Scenario, gen_dataset, hazard_curve, run_mc
from .splines import KnotSequence, build_knots, eval_b, eval_i, eval_m, integrate_b

__version__ = "0.1.0"
