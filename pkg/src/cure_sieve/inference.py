"""Observed information and standard errors for the sieve estimator.

Per-subject scores for ``beta`` and for the spline coefficients are stacked
into outer-product moment blocks (averages over subjects)::

    A11 = mean(s_b s_b'),  A12 = mean(s_b s_c'),  A22 = mean(s_c s_c')

The information for ``beta`` is the Schur complement
``O_hat = A11 - A12 A22^{-1} A21``, so ``se(beta_k) = sqrt([O_hat^{-1}]_kk / n)``.
The coefficient information ``O_tilde = A22 - A21 A11^{-1} A12`` feeds the
delta-method variance ``w' O_tilde^{-1} w / n`` of a cumulative hazard
increment ``Lambda(t) - Lambda(q)``, where ``w`` is its gradient with respect
to the coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import linalg
from scipy.stats import norm

from .errors import DomainError, InferenceError
from .likelihood import Dataset, subject_scores
from .optimizer import FitResult
from .splines import integrate_b

__all__ = [
    "ScoreMatrix",
    "InfoBlocks",
    "CoefRow",
    "score_matrix",
    "observed_information",
    "beta_ci",
    "cumhaz_increment",
]

ETA = "eta"
ALPHA = "alpha"


@dataclass
class ScoreMatrix:
    beta_scores: np.ndarray
    coef_scores: np.ndarray
    parameterization: str = ETA


@dataclass
class InfoBlocks:
    a11: np.ndarray
    a12: np.ndarray
    a22: np.ndarray
    o_hat: np.ndarray
    o_tilde: np.ndarray
    ridge_used: float
    n: int
    parameterization: str = ETA


class CoefRow(NamedTuple):
    estimate: float
    se: float
    lower: float
    upper: float
    p_value: float


def score_matrix(fit: FitResult, data: Dataset, parameterization: str = ETA) -> ScoreMatrix:
    """Per-subject scores at the fitted parameters.

    With ``parameterization="alpha"`` the coefficient columns are scores for
    the B-spline hazard coefficients ``alpha_j = eta_j * l / span_j``, i.e.
    the eta scores multiplied by ``span_j / l``.
    """
    if parameterization not in (ETA, ALPHA):
        raise ValueError(f"unknown parameterization {parameterization!r}")
    sb, se = subject_scores(fit.params, data, fit.knots)
    bad = ~(np.all(np.isfinite(sb), axis=1) & np.all(np.isfinite(se), axis=1))
    if np.any(bad):
        raise InferenceError(f"non-finite score for subject {int(np.flatnonzero(bad)[0])}")
    if parameterization == ALPHA:
        se = se * (fit.knots.spans / fit.knots.order)
    return ScoreMatrix(beta_scores=sb, coef_scores=se, parameterization=parameterization)


def _cho(mat: np.ndarray, what: str):
    try:
        return linalg.cho_factor(mat, lower=True)
    except linalg.LinAlgError as exc:
        raise InferenceError(f"{what} is not positive definite") from exc


def observed_information(sm: ScoreMatrix) -> InfoBlocks:
    """Outer-product moment blocks and their two Schur complements.

    ``A22`` receives a ridge of ``1e-8 * trace / p`` when its smallest
    eigenvalue falls below ``1e-10 * trace``; the amount is recorded in
    ``ridge_used``.
    """
    sb, sc = sm.beta_scores, sm.coef_scores
    n = sb.shape[0]
    if sc.shape[0] != n:
        raise InferenceError("score matrices disagree on the number of subjects")
    a11 = sb.T @ sb / n
    a12 = sb.T @ sc / n
    a22 = sc.T @ sc / n
    p = a22.shape[0]

    ridge = 0.0
    tr = float(np.trace(a22))
    if not tr > 0:
        raise InferenceError("coefficient score block is identically zero")
    if np.linalg.eigvalsh(a22)[0] < 1e-10 * tr:
        ridge = 1e-8 * tr / p
    a22r = a22 + ridge * np.eye(p)

    c22 = _cho(a22r, "coefficient information block")
    o_hat = a11 - a12 @ linalg.cho_solve(c22, a12.T)
    c11 = _cho(a11, "regression information block")
    o_tilde = a22r - a12.T @ linalg.cho_solve(c11, a12)
    return InfoBlocks(
        a11=a11,
        a12=a12,
        a22=a22,
        o_hat=0.5 * (o_hat + o_hat.T),
        o_tilde=0.5 * (o_tilde + o_tilde.T),
        ridge_used=ridge,
        n=n,
        parameterization=sm.parameterization,
    )


def beta_covariance(blocks: InfoBlocks) -> np.ndarray:
    c = _cho(blocks.o_hat, "observed information for beta")
    return linalg.cho_solve(c, np.eye(blocks.o_hat.shape[0])) / blocks.n


def beta_ci(blocks: InfoBlocks, fit: FitResult, level: float = 0.95) -> list[CoefRow]:
    """Wald intervals and two-sided normal p-values for each coefficient."""
    if not 0 < level < 1:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    se = np.sqrt(np.diag(beta_covariance(blocks)))
    zq = norm.ppf(0.5 + level / 2)
    rows = []
    for b, s in zip(fit.params.beta, se):
        rows.append(CoefRow(float(b), float(s), float(b - zq * s), float(b + zq * s), float(2 * norm.sf(abs(b) / s))))
    return rows


def cumhaz_increment(fit: FitResult, blocks: InfoBlocks, q: float, t: float) -> tuple[float, float]:
    """Estimate and delta-method standard error of ``Lambda(t) - Lambda(q)``."""
    if q > t:
        raise DomainError(f"increment requires q <= t, got q={q}, t={t}")
    ks = fit.knots
    iq, it = ks.basis_i(np.array([q, t]))
    if q == t:
        return 0.0, 0.0
    omega = it - iq
    estimate = float(omega @ fit.params.eta)
    if blocks.parameterization == ALPHA:
        omega = np.array([integrate_b(ks, j, q, t) for j in range(ks.p)])
    c = _cho(blocks.o_tilde, "observed information for the spline coefficients")
    var = float(omega @ linalg.cho_solve(c, omega)) / blocks.n
    return estimate, float(np.sqrt(max(var, 0.0)))
