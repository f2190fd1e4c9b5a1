"""Data containers and the I-spline sieve log-likelihood of the cure model.

Under the non-mixture Cox cure model ``S(t | z) = exp{-exp(beta'z) Lambda(t)}``
with a bounded baseline cumulative hazard, a left-truncated subject entering
at ``q`` contributes

* exact event at ``t``:       ``-e {Lambda(t) - Lambda(q)} + beta'z + log lambda(t)``
* interval ``(u, v]``:        ``log[exp{-e (Lambda(u) - Lambda(q))} - exp{-e (Lambda(v) - Lambda(q))}]``
* right-censored at ``v``:    ``-e {Lambda(v) - Lambda(q)}``

where ``e = exp(beta'z)``. The sieve represents ``Lambda = sum_j eta_j I_j``
with non-negative I-spline coefficients, so ``lambda = sum_j eta_j M_j``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, DataError, EvaluationError
from .splines import KnotSequence, integrate_b

__all__ = [
    "Status",
    "Subject",
    "Dataset",
    "Params",
    "Constraints",
    "cum_haz",
    "hazard",
    "loglik",
    "grad_loglik",
    "subject_loglik",
    "subject_scores",
    "loglik_bform",
]


class Status(enum.IntEnum):
    EXACT = 0
    INTERVAL = 1
    RIGHT = 2


@dataclass(frozen=True)
class Subject:
    """One observation.

    ``t`` is used by exact events, ``(u, v)`` by interval-censored events and
    ``v`` alone by right-censored subjects (the censoring time).
    """

    q: float
    status: Status
    z: tuple[float, ...]
    t: float = float("nan")
    u: float = float("nan")
    v: float = float("nan")

    @classmethod
    def exact(cls, q: float, t: float, z: Sequence[float]) -> "Subject":
        return cls(q=float(q), status=Status.EXACT, t=float(t), z=tuple(map(float, z)))

    @classmethod
    def interval(cls, q: float, u: float, v: float, z: Sequence[float]) -> "Subject":
        return cls(q=float(q), status=Status.INTERVAL, u=float(u), v=float(v), z=tuple(map(float, z)))

    @classmethod
    def right(cls, q: float, v: float, z: Sequence[float]) -> "Subject":
        return cls(q=float(q), status=Status.RIGHT, v=float(v), z=tuple(map(float, z)))


class Dataset:
    """Column-oriented collection of subjects sharing ``tau`` and covariate dimension.

    Parameters
    ----------
    q : array_like
        Entry (truncation) times.
    status : array_like of int
        :class:`Status` codes.
    t, u, v : array_like
        Event time, interval endpoints / censoring time; ``nan`` where unused.
    z : array_like, shape (n, d)
        Covariates.
    tau : float
        Cure threshold.
    """

    def __init__(self, q, status, t, u, v, z, tau: float):
        self.q = np.asarray(q, dtype=float).ravel()
        self.status = np.asarray(status, dtype=int).ravel()
        self.t = np.asarray(t, dtype=float).ravel()
        self.u = np.asarray(u, dtype=float).ravel()
        self.v = np.asarray(v, dtype=float).ravel()
        z = np.asarray(z, dtype=float)
        if z.ndim == 1:
            z = z.reshape(self.q.size, -1)
        self.z = z
        self.tau = float(tau)
        self._designs: dict[KnotSequence, _Design] = {}
        self._validate()

    @classmethod
    def from_subjects(cls, subjects: Iterable[Subject], tau: float) -> "Dataset":
        subjects = list(subjects)
        if not subjects:
            raise DataError("dataset has no subjects")
        dims = {len(s.z) for s in subjects}
        if len(dims) != 1:
            raise DataError(f"subjects disagree on covariate dimension: {sorted(dims)}")
        return cls(
            q=[s.q for s in subjects],
            status=[int(s.status) for s in subjects],
            t=[s.t for s in subjects],
            u=[s.u for s in subjects],
            v=[s.v for s in subjects],
            z=np.array([s.z for s in subjects], dtype=float).reshape(len(subjects), dims.pop()),
            tau=tau,
        )

    def _validate(self) -> None:
        n = self.q.size
        if n == 0:
            raise DataError("dataset has no subjects")
        for name in ("status", "t", "u", "v"):
            if getattr(self, name).size != n:
                raise DataError(f"column {name!r} has length {getattr(self, name).size}, expected {n}")
        if self.z.shape[0] != n:
            raise DataError(f"covariate matrix has {self.z.shape[0]} rows, expected {n}")
        if not self.tau > 0:
            raise DataError("tau must be positive")
        if not np.all(np.isfinite(self.z)):
            raise DataError("covariates must be finite")
        if np.any(np.isin(self.status, [s.value for s in Status], invert=True)):
            raise DataError("unknown status code")
        tau = self.tau
        bad = ~(self.q >= 0)
        ex, it, rt = self.exact_mask, self.interval_mask, self.right_mask
        bad |= ex & ~((self.q < self.t) & (self.t <= tau))
        bad |= it & ~((self.q <= self.u) & (self.u < self.v) & (self.v <= tau))
        bad |= rt & ~((self.q <= self.v) & (self.v <= tau))
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise DataError(f"subject {i} violates the time ordering for status {Status(self.status[i]).name}")

    def __len__(self) -> int:
        return self.q.size

    @property
    def n(self) -> int:
        return self.q.size

    @property
    def d(self) -> int:
        return self.z.shape[1]

    @property
    def exact_mask(self) -> np.ndarray:
        return self.status == Status.EXACT

    @property
    def interval_mask(self) -> np.ndarray:
        return self.status == Status.INTERVAL

    @property
    def right_mask(self) -> np.ndarray:
        return self.status == Status.RIGHT

    @property
    def n_events(self) -> int:
        """Subjects known to have experienced the event (exact or interval)."""
        return int(np.sum(self.exact_mask | self.interval_mask))

    def followup(self) -> np.ndarray:
        """Last time each subject is known to be under observation."""
        return np.where(self.exact_mask, self.t, self.v)

    def knot_times(self) -> np.ndarray:
        """Pooled distinct exact times and observation-window endpoints below ``tau``.

        Interval subjects contribute ``u`` and ``v``; right-censored subjects
        contribute their censoring time ``v``. Entry times are excluded.
        """
        ex, it, rt = self.exact_mask, self.interval_mask, self.right_mask
        pooled = np.concatenate([self.t[ex], self.u[it], self.v[it], self.v[rt]])
        pooled = pooled[pooled < self.tau]
        return np.unique(pooled)

    @property
    def subjects(self) -> list[Subject]:
        return [
            Subject(
                q=float(self.q[i]),
                status=Status(int(self.status[i])),
                z=tuple(float(x) for x in self.z[i]),
                t=float(self.t[i]),
                u=float(self.u[i]),
                v=float(self.v[i]),
            )
            for i in range(self.n)
        ]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.q[idx], self.status[idx], self.t[idx], self.u[idx], self.v[idx], self.z[idx], self.tau)

    def design(self, ks: KnotSequence) -> "_Design":
        if ks.tau != self.tau:
            raise ConfigurationError(f"knot tau {ks.tau} differs from data tau {self.tau}")
        if ks not in self._designs:
            self._designs[ks] = _Design(self, ks)
        return self._designs[ks]


class _Design:
    """Basis matrices of a dataset, fixed for a given knot sequence."""

    def __init__(self, data: Dataset, ks: KnotSequence):
        self.n, self.p, self.d = data.n, ks.p, data.d
        self.z = data.z
        self.ex = np.flatnonzero(data.exact_mask)
        self.it = np.flatnonzero(data.interval_mask)
        self.rt = np.flatnonzero(data.right_mask)
        iq = ks.basis_i(data.q)
        # increments are differenced once here so that tiny intervals stay exact
        self.d_ex = ks.basis_i(data.t[self.ex]) - iq[self.ex]
        self.m_ex = ks.basis_m(data.t[self.ex])
        self.d_rt = ks.basis_i(data.v[self.rt]) - iq[self.rt]
        i_u = ks.basis_i(data.u[self.it])
        self.d_it = i_u - iq[self.it]
        self.w_it = ks.basis_i(data.v[self.it]) - i_u

    def terms(self, beta: np.ndarray, eta: np.ndarray, scores: bool = False):
        """Per-subject log-likelihood terms and, optionally, score rows."""
        lp = self.z @ beta
        e = np.exp(lp)
        ll = np.empty(self.n)
        if scores:
            s_lp = np.empty(self.n)
            s_eta = np.empty((self.n, self.p))

        ex = self.ex
        if ex.size:
            e_ex = e[ex]
            cum = self.d_ex @ eta
            lam = self.m_ex @ eta
            if np.any(~(lam > 0)):
                i = int(ex[np.flatnonzero(~(lam > 0))[0]])
                raise EvaluationError(f"hazard is not positive at the event time of subject {i}")
            ll[ex] = -e_ex * cum + lp[ex] + np.log(lam)
            if scores:
                s_lp[ex] = 1.0 - e_ex * cum
                s_eta[ex] = -e_ex[:, None] * self.d_ex + self.m_ex / lam[:, None]

        rt = self.rt
        if rt.size:
            e_rt = e[rt]
            cum = self.d_rt @ eta
            ll[rt] = -e_rt * cum
            if scores:
                s_lp[rt] = -e_rt * cum
                s_eta[rt] = -e_rt[:, None] * self.d_rt

        it = self.it
        if it.size:
            e_it = e[it]
            a = self.d_it @ eta
            ew = e_it * (self.w_it @ eta)
            if np.any(~(ew > 0)):
                i = int(it[np.flatnonzero(~(ew > 0))[0]])
                raise EvaluationError(f"interval of subject {i} has zero probability")
            ll[it] = -e_it * a + np.log(-np.expm1(-ew))
            if scores:
                g = np.exp(-ew) / -np.expm1(-ew)
                s_lp[it] = -e_it * a + g * ew
                s_eta[it] = -e_it[:, None] * self.d_it + (g * e_it)[:, None] * self.w_it

        if not np.all(np.isfinite(ll)):
            raise EvaluationError("log-likelihood is not finite")
        if scores:
            return ll, s_lp[:, None] * self.z, s_eta
        return ll

    def loglik(self, beta, eta) -> float:
        return float(np.sum(self.terms(beta, eta)))

    def value_and_grad(self, beta, eta):
        ll, sb, se = self.terms(beta, eta, scores=True)
        return float(np.sum(ll)), sb.sum(axis=0), se.sum(axis=0)


@dataclass
class Params:
    """Model state: regression coefficients and I-spline coefficients."""

    beta: np.ndarray
    eta: np.ndarray

    def __post_init__(self) -> None:
        self.beta = np.atleast_1d(np.asarray(self.beta, dtype=float)).copy()
        self.eta = np.atleast_1d(np.asarray(self.eta, dtype=float)).copy()

    def alpha(self, ks: KnotSequence) -> np.ndarray:
        """Equivalent B-spline hazard coefficients ``eta_j * l / span_j``."""
        return self.eta * ks.order / ks.spans

    @classmethod
    def from_alpha(cls, beta, alpha, ks: KnotSequence) -> "Params":
        return cls(beta, np.asarray(alpha, dtype=float) * ks.spans / ks.order)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.beta, self.eta])

    @classmethod
    def from_vector(cls, x: np.ndarray, d: int) -> "Params":
        return cls(x[:d], x[d:])


@dataclass(frozen=True)
class Constraints:
    """Linear feasible set ``eta_j >= m_j``, ``sum(eta) <= tau * b0``, ``|beta| <= c0``."""

    a0: float
    b0: float
    c0: float
    m: np.ndarray = field(repr=False)
    sum_cap: float

    def __post_init__(self) -> None:
        if not self.a0 > 0:
            raise ConfigurationError(f"a0 must be positive, got {self.a0}")
        if not self.b0 > self.a0:
            raise ConfigurationError(f"b0 must exceed a0, got b0={self.b0}, a0={self.a0}")
        if not self.c0 > 0:
            raise ConfigurationError(f"c0 must be positive, got {self.c0}")
        if np.any(~(np.asarray(self.m) > 0)):
            raise ConfigurationError("lower bounds m_j must be positive")

    @classmethod
    def build(cls, ks: KnotSequence, a0: float, b0: float, c0: float) -> "Constraints":
        m = ks.spans / ks.order * a0
        return cls(a0=float(a0), b0=float(b0), c0=float(c0), m=m, sum_cap=ks.tau * float(b0))

    @classmethod
    def default(
        cls,
        data: Dataset,
        ks: KnotSequence,
        a0: float | None = None,
        b0: float | None = None,
        c0: float | None = None,
    ) -> "Constraints":
        """Data-scaled defaults: ``a0 = 1e-6``, ``c0 = 10`` and ``b0`` ten times
        the crude event rate (events per unit of observed follow-up)."""
        a0 = 1e-6 if a0 is None else a0
        c0 = 10.0 if c0 is None else c0
        if b0 is None:
            exposure = float(np.sum(data.followup() - data.q))
            events = max(data.n_events, 1)
            b0 = 10.0 * events / exposure if exposure > 0 else 10.0
            b0 = max(b0, 10.0 * a0)
        return cls.build(ks, a0, b0, c0)

    def is_feasible(self, params: Params, tol: float = 1e-12) -> bool:
        return bool(
            np.all(params.eta >= self.m - tol)
            and np.sum(params.eta) <= self.sum_cap + tol * max(1.0, self.sum_cap)
            and np.linalg.norm(params.beta) <= self.c0 * (1 + tol)
        )


def cum_haz(params: Params, ks: KnotSequence, t):
    """Baseline cumulative hazard ``Lambda(t) = sum_j eta_j I_j(t)``."""
    return ks.basis_i(t) @ params.eta


def hazard(params: Params, ks: KnotSequence, t):
    """Baseline hazard ``lambda(t) = sum_j eta_j M_j(t)``."""
    return ks.basis_m(t) @ params.eta


def loglik(params: Params, data: Dataset, ks: KnotSequence) -> float:
    """Sieve log-likelihood in the I-spline parameterisation."""
    return data.design(ks).loglik(params.beta, params.eta)


def grad_loglik(params: Params, data: Dataset, ks: KnotSequence) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradient ``(d loglik / d beta, d loglik / d eta)``."""
    _, gb, ge = data.design(ks).value_and_grad(params.beta, params.eta)
    return gb, ge


def subject_loglik(params: Params, data: Dataset, ks: KnotSequence) -> np.ndarray:
    return data.design(ks).terms(params.beta, params.eta)


def subject_scores(params: Params, data: Dataset, ks: KnotSequence) -> tuple[np.ndarray, np.ndarray]:
    """Per-subject score rows ``(n x d, n x p)`` in the eta parameterisation."""
    _, sb, se = data.design(ks).terms(params.beta, params.eta, scores=True)
    return sb, se


def loglik_bform(beta, alpha, data: Dataset, ks: KnotSequence) -> float:
    """Log-likelihood with the hazard written as ``sum_j alpha_j B_j``.

    Every cumulative hazard is an explicit integral of the B-spline hazard
    over ``[q_i, x]`` and the interval term is the literal difference of two
    survival probabilities. Meant as a slow, independent reference for
    :func:`loglik`.
    """
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    if np.any(alpha < 0):
        raise ConfigurationError("B-spline coefficients must be non-negative")

    def integral(a: float, b: float) -> float:
        return sum(alpha[j] * integrate_b(ks, j, a, b) for j in range(ks.p))

    total = 0.0
    for i in range(data.n):
        lp = float(data.z[i] @ beta)
        e = np.exp(lp)
        q = data.q[i]
        status = data.status[i]
        if status == Status.EXACT:
            lam = float(ks.basis_b(data.t[i]) @ alpha)
            if not lam > 0:
                raise EvaluationError(f"hazard is not positive at the event time of subject {i}")
            total += -e * integral(q, data.t[i]) + lp + np.log(lam)
        elif status == Status.RIGHT:
            total += -e * integral(q, data.v[i])
        else:
            diff = np.exp(-e * integral(q, data.u[i])) - np.exp(-e * integral(q, data.v[i]))
            if not diff > 0:
                raise EvaluationError(f"interval of subject {i} has zero probability")
            total += np.log(diff)
    return float(total)

