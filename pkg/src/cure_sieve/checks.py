"""Self-check oracles run by ``cure-sieve check``.

Each oracle compares a production code path with an independent
computation (quadrature, finite differences, the B-spline form of the
likelihood, or the target rates of each simulation design) and returns a
:class:`CheckResult`. Functions are looked up through their modules at call
time so that tests can substitute a deliberately broken implementation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import likelihood, simulate, splines
from .likelihood import Dataset, Params, Status
from .splines import KnotSequence

__all__ = [
    "CheckResult",
    "random_dataset",
    "random_knots",
    "gauss_legendre_integral",
    "finite_difference_grad",
    "check_splines",
    "check_likelihood_forms",
    "check_gradient",
    "check_rates",
    "run_all",
]


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}"


def random_knots(rng: np.random.Generator, order: int = 3, tau: float = 4.0, n_interior: int | None = None) -> KnotSequence:
    if n_interior is None:
        n_interior = int(rng.integers(1, 6))
    while True:
        inner = np.sort(rng.uniform(0.05 * tau, 0.95 * tau, n_interior))
        if n_interior == 0 or np.min(np.diff(np.concatenate([[0.0], inner, [tau]]))) > 0.02 * tau:
            return KnotSequence(order=order, tau=tau, interior=tuple(inner))


def random_dataset(rng: np.random.Generator, n: int = 30, d: int = 2, tau: float = 4.0, min_width: float = 0.1) -> Dataset:
    """Mixed exact/interval/right data with every class present (n >= 3)."""
    status = rng.integers(0, 3, n)
    status[:3] = [Status.EXACT, Status.INTERVAL, Status.RIGHT]
    q = np.where(rng.random(n) < 0.3, 0.0, rng.uniform(0.0, 0.4 * tau, n))
    t = np.full(n, np.nan)
    u = np.full(n, np.nan)
    v = np.full(n, np.nan)
    ex = status == Status.EXACT
    t[ex] = rng.uniform(q[ex] + 0.01, tau)
    it = status == Status.INTERVAL
    u[it] = rng.uniform(q[it], tau - min_width)
    v[it] = rng.uniform(u[it] + min_width, tau)
    rt = status == Status.RIGHT
    v[rt] = np.where(rng.random(rt.sum()) < 0.3, tau, rng.uniform(q[rt], tau))
    z = rng.normal(size=(n, d))
    return Dataset(q, status, t, u, v, z, tau)


def random_params(rng: np.random.Generator, d: int, p: int, boundary: bool = False) -> Params:
    eta = rng.uniform(0.05, 1.0, p)
    if boundary:
        eta[rng.integers(0, p)] = 1e-4
    return Params(rng.normal(0.0, 0.5, d), eta)


def gauss_legendre_integral(ks: KnotSequence, fn, a: float, b: float, points: int = 64) -> float:
    """Integrate ``fn`` over ``[a, b]`` with Gauss-Legendre on each knot span."""
    nodes, weights = np.polynomial.legendre.leggauss(points)
    edges = np.unique(np.concatenate([[a, b], ks.full[(ks.full > a) & (ks.full < b)]]))
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        total += half * np.sum(weights * fn(mid + half * nodes))
    return float(total)


def finite_difference_grad(fn, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    g = np.empty_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (fn(x + e) - fn(x - e)) / (2 * h)
    return g


def check_splines(seed: int = 0) -> CheckResult:
    """Partition of unity, ``M = dI/dt``, boundary values, exact integrals."""
    rng = np.random.default_rng(seed)
    worst = {"unity": 0.0, "derivative": 0.0, "boundary": 0.0, "integral": 0.0}
    for order in (2, 3, 4):
        ks = random_knots(rng, order=order)
        grid = np.linspace(0.0, ks.tau, 1000)
        worst["unity"] = max(worst["unity"], float(np.max(np.abs(splines.eval_b(ks, grid).sum(axis=1) - 1.0))))

        pts = rng.uniform(0.01, ks.tau - 0.01, 20)
        pts = pts[np.min(np.abs(pts[:, None] - ks.full[None, :]), axis=1) > 1e-4]
        h = 1e-5
        fd = (splines.eval_i(ks, pts + h) - splines.eval_i(ks, pts - h)) / (2 * h)
        worst["derivative"] = max(worst["derivative"], float(np.max(np.abs(fd - splines.eval_m(ks, pts)))))

        ends = splines.eval_i(ks, np.array([0.0, ks.tau]))
        worst["boundary"] = max(worst["boundary"], float(np.max(np.abs(ends - [[0.0], [1.0]]))))

        for _ in range(5):
            a, b = np.sort(rng.uniform(0.0, ks.tau, 2))
            j = int(rng.integers(0, ks.p))
            exact = splines.integrate_b(ks, j, a, b)
            quad = gauss_legendre_integral(ks, lambda x: splines.eval_b(ks, x)[:, j], a, b)
            worst["integral"] = max(worst["integral"], abs(exact - quad))
    passed = (
        worst["unity"] < 1e-12 and worst["derivative"] < 1e-6 and worst["boundary"] < 1e-12 and worst["integral"] < 1e-10
    )
    return CheckResult("spline identities", passed, worst)


def check_likelihood_forms(n_points: int = 100, seed: int = 1, tol: float = 1e-10) -> CheckResult:
    """I-spline likelihood against the B-spline integral form."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    worst_case = None
    for _ in range(n_points):
        data = random_dataset(rng, n=int(rng.integers(3, 51)), d=int(rng.integers(1, 4)))
        ks = random_knots(rng)
        params = random_params(rng, data.d, ks.p)
        a = likelihood.loglik(params, data, ks)
        b = likelihood.loglik_bform(params.beta, params.alpha(ks), data, ks)
        err = abs(a - b)
        if not err <= worst:
            worst = err
            worst_case = {"beta": params.beta.tolist(), "eta": params.eta.tolist(), "interior": list(ks.interior),
                          "n": data.n, "iform": a, "bform": b}
    return CheckResult("likelihood B-form vs I-form", worst <= tol, {"max_abs_diff": worst, "worst_case": worst_case})


def check_gradient(n_points: int = 20, seed: int = 2, rtol: float = 1e-5) -> CheckResult:
    """Analytic gradient against central finite differences (step 1e-6)."""
    rng = np.random.default_rng(seed)
    data = random_dataset(rng, n=30, d=2)
    ks = random_knots(rng, n_interior=3)
    worst = 0.0
    worst_case = None
    for k in range(n_points):
        params = random_params(rng, data.d, ks.p, boundary=k % 4 == 0)
        gb, ge = likelihood.grad_loglik(params, data, ks)
        analytic = np.concatenate([gb, ge])

        def f(x):
            return likelihood.loglik(Params.from_vector(x, data.d), data, ks)

        fd = finite_difference_grad(f, params.to_vector())
        err = float(np.max(np.abs(analytic - fd) / np.maximum(np.abs(analytic), 1.0)))
        if not err <= worst:
            worst = err
            worst_case = {"beta": params.beta.tolist(), "eta": params.eta.tolist(),
                          "analytic": analytic.tolist(), "finite_difference": fd.tolist()}
    return CheckResult("gradient vs finite differences", worst <= rtol, {"max_rel_err": worst, "worst_case": worst_case})


def check_rates(n_draws: int = 1_000_000, seed: int = 3, rate_tol: float = 0.01, cure_tol: float = 0.005) -> CheckResult:
    """Simulated truncation, censoring and cure rates against the design targets."""
    rows = {}
    passed = True
    for k, ((hid, mode), (tr, ce, cu)) in enumerate(simulate.DESIGN_RATES.items()):
        sc = simulate.Scenario(hid, mode)
        got = simulate.dgp_rates(sc, n_draws, np.random.default_rng([seed, k]))
        ok = (
            abs(got["truncation"] - tr) <= rate_tol
            and abs(got["censoring"] - ce) <= rate_tol
            and abs(got["cure"] - cu) <= cure_tol
        )
        passed &= ok
        rows[f"{hid}/{mode}"] = {
            "truncation": [round(got["truncation"], 4), tr],
            "censoring": [round(got["censoring"], 4), ce],
            "cure": [round(got["cure"], 4), cu],
            "ok": ok,
        }
    return CheckResult("simulation design rates", bool(passed), rows)


def run_all(n_draws: int = 1_000_000, seed: int = 0) -> list[CheckResult]:
    return [
        check_splines(seed),
        check_likelihood_forms(seed=seed + 1),
        check_gradient(seed=seed + 2),
        check_rates(n_draws, seed=seed + 3),
    ]
