"""B-, M- and I-spline bases on a clamped knot sequence over ``[0, tau]``.

The M-spline of order ``l`` is the density-normalised B-spline,
``M_j(t) = l / (xi[j+l] - xi[j]) * B_j(t)``, and the I-spline is its
integral, written as a tail sum of order ``l + 1`` B-splines on the same
interior knots::

    I_j(t) = sum_{k > j} B^{l+1}_k(t)

All evaluators accept a scalar (returning a length-``p`` vector) or an
array of times (returning an ``(n, p)`` matrix). The last knot span is
closed on the right so that ``t = tau`` is evaluated like any other point.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigurationError, DomainError

__all__ = [
    "KnotSequence",
    "build_knots",
    "eval_b",
    "eval_m",
    "eval_i",
    "integrate_b",
    "integer_cube_root",
]


def _clamped(interior: np.ndarray, order: int, tau: float) -> np.ndarray:
    return np.concatenate([np.zeros(order), interior, np.full(order, tau)])


def _basis_matrix(full: np.ndarray, order: int, x: np.ndarray) -> np.ndarray:
    """Evaluate every B-spline of ``order`` on knot vector ``full`` at ``x``.

    Vectorised form of the triangular Cox-de Boor scheme: only the
    ``order`` non-zero functions on each point's knot span are computed and
    then scattered into the dense result.
    """
    n_basis = len(full) - order
    degree = order - 1
    span = np.searchsorted(full, x, side="right") - 1
    span = np.clip(span, degree, n_basis - 1)

    m = x.shape[0]
    vals = np.zeros((m, order))
    vals[:, 0] = 1.0
    left = np.empty((m, order))
    right = np.empty((m, order))
    for r in range(1, order):
        left[:, r] = x - full[span + 1 - r]
        right[:, r] = full[span + r] - x
        saved = np.zeros(m)
        for s in range(r):
            temp = vals[:, s] / (right[:, s + 1] + left[:, r - s])
            vals[:, s] = saved + right[:, s + 1] * temp
            saved = left[:, r - s] * temp
        vals[:, r] = saved

    out = np.zeros((m, n_basis))
    cols = span[:, None] - degree + np.arange(order)[None, :]
    np.put_along_axis(out, cols, vals, axis=1)
    return out


@dataclass(frozen=True)
class KnotSequence:
    """Clamped knot vector of a given order on ``[0, tau]``.

    Parameters
    ----------
    order : int
        Spline order ``l`` (degree ``l - 1``).
    tau : float
        Right boundary of the support.
    interior : tuple of float
        Strictly increasing interior knots inside ``(0, tau)``.
    """

    order: int
    tau: float
    interior: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.order < 1:
            raise ConfigurationError(f"spline order must be >= 1, got {self.order}")
        if not self.tau > 0:
            raise ConfigurationError(f"tau must be positive, got {self.tau}")
        inner = np.asarray(self.interior, dtype=float)
        if inner.size and (inner[0] <= 0 or inner[-1] >= self.tau):
            raise ConfigurationError("interior knots must lie strictly inside (0, tau)")
        if np.any(np.diff(inner) <= 0):
            raise ConfigurationError("interior knots must be strictly increasing")
        object.__setattr__(self, "interior", tuple(float(k) for k in inner))
        object.__setattr__(self, "tau", float(self.tau))

    @property
    def p(self) -> int:
        """Number of basis functions."""
        return self.order + len(self.interior)

    @cached_property
    def full(self) -> np.ndarray:
        """The full knot vector ``xi_1 .. xi_{p+l}``."""
        return _clamped(np.asarray(self.interior), self.order, self.tau)

    @cached_property
    def spans(self) -> np.ndarray:
        """``xi[j+l] - xi[j]`` for each basis function ``j``."""
        full = self.full
        return full[self.order : self.order + self.p] - full[: self.p]

    @cached_property
    def _full_up(self) -> np.ndarray:
        return _clamped(np.asarray(self.interior), self.order + 1, self.tau)

    def _check(self, t) -> tuple[np.ndarray, bool]:
        arr = np.asarray(t, dtype=float)
        scalar = arr.ndim == 0
        arr = np.atleast_1d(arr).ravel()
        if not np.all((arr >= 0.0) & (arr <= self.tau)):
            bad = arr[~((arr >= 0.0) & (arr <= self.tau))][0]
            raise DomainError(f"time {bad!r} outside [0, {self.tau}]")
        return arr, scalar

    def basis_b(self, t) -> np.ndarray:
        arr, scalar = self._check(t)
        out = _basis_matrix(self.full, self.order, arr)
        return out[0] if scalar else out

    def basis_m(self, t) -> np.ndarray:
        return self.basis_b(t) * (self.order / self.spans)

    def basis_i(self, t) -> np.ndarray:
        arr, scalar = self._check(t)
        b_up = _basis_matrix(self._full_up, self.order + 1, arr)
        # I_j = sum of the order-(l+1) functions strictly to the right of j;
        # above 1/2 use 1 - (sum to the left) so both plateaus are exact
        tail = np.cumsum(b_up[:, ::-1], axis=1)[:, ::-1][:, 1:]
        head = np.cumsum(b_up, axis=1)[:, :-1]
        out = np.clip(np.where(tail <= 0.5, tail, 1.0 - head), 0.0, 1.0)
        return out[0] if scalar else out


def eval_b(ks: KnotSequence, t) -> np.ndarray:
    """B-spline basis values ``B_j(t)``."""
    return ks.basis_b(t)


def eval_m(ks: KnotSequence, t) -> np.ndarray:
    """M-spline basis values ``M_j(t) = l / span_j * B_j(t)``."""
    return ks.basis_m(t)


def eval_i(ks: KnotSequence, t) -> np.ndarray:
    """I-spline basis values ``I_j(t) = int_0^t M_j``."""
    return ks.basis_i(t)


def integrate_b(ks: KnotSequence, j: int, a: float, b: float) -> float:
    """Exact integral of ``B_j`` over ``[a, b]``.

    Uses ``int_a^b B_j = span_j / l * (I_j(b) - I_j(a))``.
    """
    if a > b:
        raise DomainError(f"integration bounds reversed: a={a} > b={b}")
    if not 0 <= j < ks.p:
        raise IndexError(f"basis index {j} out of range for p={ks.p}")
    ia, ib = ks.basis_i(np.array([a, b]))[:, j]
    return float(ks.spans[j] / ks.order * (ib - ia))


def integer_cube_root(n: int) -> int:
    """Largest integer ``k`` with ``k**3 <= n``."""
    if n < 0:
        raise ValueError("n must be non-negative")
    k = int(round(n ** (1.0 / 3.0)))
    while k**3 > n:
        k -= 1
    while (k + 1) ** 3 <= n:
        k += 1
    return k


def build_knots(times, n_distinct: int | None = None, order: int = 3, tau: float = 1.0) -> KnotSequence:
    """Place interior knots at equally spaced quantiles of observed times.

    The basis count is ``p = max(floor(n_distinct ** (1/3)), order + 1)`` and
    ``p - order`` interior knots sit at the ``k / (p - order + 1)`` quantiles
    of the distinct values of ``times`` lying strictly inside ``(0, tau)``.
    Tied quantiles are merged and the basis size is restored by splitting
    the widest gaps at their midpoints.

    Parameters
    ----------
    times : array_like
        Observation times in ``[0, tau]``; boundary values are ignored.
    n_distinct : int, optional
        Distinct-observation count driving the basis size. Defaults to the
        number of distinct usable ``times``.
    order : int
        Spline order (3 gives quadratic B-/M-splines and cubic I-splines).
    tau : float
        Right boundary.
    """
    if not tau > 0:
        raise ConfigurationError(f"tau must be positive, got {tau}")
    if order < 2:
        raise ConfigurationError(f"order must be >= 2, got {order}")
    arr = np.asarray(times, dtype=float).ravel()
    if np.any(~np.isfinite(arr)) or np.any((arr < 0) | (arr > tau)):
        raise DomainError(f"knot source times must lie in [0, {tau}]")
    distinct = np.unique(arr[(arr > 0) & (arr < tau)])
    if distinct.size == 0:
        raise ConfigurationError("no usable times strictly inside (0, tau) for knot placement")
    if n_distinct is None:
        n_distinct = distinct.size

    p = max(integer_cube_root(int(n_distinct)), order + 1)
    n_int = p - order
    probs = np.arange(1, n_int + 1) / (n_int + 1)
    knots = np.unique(np.quantile(distinct, probs))
    knots = knots[(knots > 0) & (knots < tau)]
    while knots.size < n_int:
        edges = np.concatenate([[0.0], knots, [tau]])
        widest = int(np.argmax(np.diff(edges)))
        mid = 0.5 * (edges[widest] + edges[widest + 1])
        knots = np.sort(np.append(knots, mid))
    return KnotSequence(order=order, tau=tau, interior=tuple(knots))
