"""Simulation designs and the Monte Carlo study driver.

Event times follow the cure model with baseline cumulative hazard
``Lambda_0(t) = C (1 - exp(-t)) / (1 - exp(-4))`` on ``[0, 4]`` (constant
afterwards), for scale ``C`` in ``{e^1.2, 1, e^-1.2}``. Covariates are
``Z1 ~ N(0, 1)`` and ``Z2 ~ Bernoulli(0.5)`` with ``beta_0 = (0.7, -0.5)``.

Two truncation/censoring designs are provided:

light
    ``Q ~ U[0, 1]``; ``U, V`` are the order statistics of two ``U[1, 4.5]`` draws.
heavy
    ``Q ~ U[0, 4]``; ``U, V`` are the order statistics of two ``U[Q, 4.5]`` draws.

In both, ``U`` and ``V`` are capped at 4 and ``U`` is lowered to ``V - 0.005``
when the window is narrower than that (then raised back to ``Q`` if needed).
Subjects with ``T <= Q`` are truncated and never observed.
"""

from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.stats import norm

from .errors import ConfigurationError, CureSieveError, McError
from .inference import cumhaz_increment, observed_information, score_matrix
from .likelihood import Constraints, Dataset, Status, Subject, hazard
from .optimizer import FitConfig, fit
from .splines import build_knots

__all__ = [
    "Scenario",
    "McRow",
    "McSummary",
    "draw_batch",
    "draw_subject",
    "gen_dataset",
    "dgp_rates",
    "run_replications",
    "run_mc",
    "hazard_curve",
    "summarize",
    "DESIGN_RATES",
]

logger = logging.getLogger(__name__)

TAU = 4.0
_NORM = 1.0 - math.exp(-4.0)
_SCALES = {"h1": math.exp(1.2), "h2": 1.0, "h3": math.exp(-1.2)}
_MIN_WIDTH = 0.005
INCREMENT_Q = 1.0
INCREMENT_T = (1.5, 2.5, 3.5)

# truncation rate among uncured, censoring rate among retained uncured, cure rate
DESIGN_RATES = {
    ("h1", "light"): (0.654, 0.108, 0.135),
    ("h2", "light"): (0.501, 0.163, 0.448),
    ("h3", "light"): (0.421, 0.195, 0.755),
    ("h1", "heavy"): (0.894, 0.258, 0.135),
    ("h2", "heavy"): (0.831, 0.323, 0.448),
    ("h3", "heavy"): (0.794, 0.359, 0.755),
}


@dataclass(frozen=True)
class Scenario:
    hazard_id: str = "h1"
    trunc_mode: str = "light"
    n: int = 500
    beta0: tuple[float, ...] = (0.7, -0.5)
    tau: float = TAU

    def __post_init__(self) -> None:
        object.__setattr__(self, "hazard_id", self.hazard_id.lower())
        object.__setattr__(self, "trunc_mode", self.trunc_mode.lower())
        if self.hazard_id not in _SCALES:
            raise ConfigurationError(f"unknown hazard {self.hazard_id!r}; expected one of h1, h2, h3")
        if self.trunc_mode not in ("light", "heavy"):
            raise ConfigurationError(f"unknown truncation mode {self.trunc_mode!r}; expected light or heavy")
        if self.n < 1:
            raise ConfigurationError("n must be positive")
        if len(self.beta0) != 2:
            raise ConfigurationError("beta0 must have two entries (Z1, Z2)")

    @property
    def scale(self) -> float:
        return _SCALES[self.hazard_id]

    def cum_hazard(self, t):
        t = np.minimum(np.asarray(t, dtype=float), self.tau)
        return self.scale * -np.expm1(-t) / _NORM

    def hazard(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t <= self.tau, self.scale * np.exp(-t) / _NORM, 0.0)

    def inverse_cum_hazard(self, s):
        """Event time with ``Lambda_0(T) = s`` for ``0 <= s <= Lambda_0(tau)``."""
        s = np.asarray(s, dtype=float)
        return -np.log1p(-s * _NORM / self.scale)

    def increment_truth(self, q: float, t: float) -> float:
        return float(self.cum_hazard(t) - self.cum_hazard(q))


def draw_batch(sc: Scenario, rng: np.random.Generator, size: int) -> dict[str, np.ndarray]:
    """Draw ``size`` candidate subjects, including truncated ones.

    Returns arrays ``z, event, q, u, v, cured, truncated, status`` where ``status``
    is ``-1`` for truncated draws.
    """
    z1 = rng.standard_normal(size)
    z2 = rng.binomial(1, 0.5, size).astype(float)
    z = np.column_stack([z1, z2])
    w = rng.random(size)
    target = -np.log(w) * np.exp(-(z @ np.asarray(sc.beta0)))
    cured = target > sc.scale
    event = np.full(size, np.inf)
    event[~cured] = sc.inverse_cum_hazard(target[~cured])

    if sc.trunc_mode == "light":
        q = rng.uniform(0.0, 1.0, size)
        lo = 1.0
    else:
        q = rng.uniform(0.0, sc.tau, size)
        lo = q
    a = rng.uniform(lo, 4.5, size)
    b = rng.uniform(lo, 4.5, size)
    u = np.minimum(np.minimum(a, b), sc.tau)
    v = np.minimum(np.maximum(a, b), sc.tau)
    narrow = v - u < _MIN_WIDTH
    u = np.where(narrow, v - _MIN_WIDTH, u)
    u = np.maximum(u, q)

    truncated = event <= q
    status = np.where(event <= u, Status.EXACT, np.where(event <= v, Status.INTERVAL, Status.RIGHT)).astype(int)
    status[truncated] = -1
    return {"z": z, "event": event, "q": q, "u": u, "v": v, "cured": cured, "truncated": truncated, "status": status}


def _subject_from_batch(batch, i) -> Subject:
    z = tuple(batch["z"][i])
    q = float(batch["q"][i])
    st = batch["status"][i]
    if st == Status.EXACT:
        return Subject.exact(q, batch["event"][i], z)
    if st == Status.INTERVAL:
        return Subject.interval(q, batch["u"][i], batch["v"][i], z)
    return Subject.right(q, batch["v"][i], z)


def draw_subject(sc: Scenario, rng: np.random.Generator) -> Subject | None:
    """Draw one subject; ``None`` means it was truncated (``T <= Q``)."""
    batch = draw_batch(sc, rng, 1)
    if batch["truncated"][0]:
        return None
    return _subject_from_batch(batch, 0)


def gen_dataset(sc: Scenario, rng: np.random.Generator) -> Dataset:
    """Draw until ``sc.n`` untruncated subjects are retained."""
    chunks = []
    kept = 0
    batch_size = 4 * sc.n + 64
    while kept < sc.n:
        batch = draw_batch(sc, rng, batch_size)
        keep = ~batch["truncated"]
        chunks.append({k: val[keep] for k, val in batch.items()})
        kept += int(keep.sum())
    cols = {k: np.concatenate([c[k] for c in chunks])[: sc.n] for k in chunks[0]}
    st = cols["status"]
    nan = np.full(sc.n, np.nan)
    return Dataset(
        q=cols["q"],
        status=st,
        t=np.where(st == Status.EXACT, cols["event"], nan),
        u=np.where(st == Status.INTERVAL, cols["u"], nan),
        v=np.where(st == Status.EXACT, nan, cols["v"]),
        z=cols["z"],
        tau=sc.tau,
    )


def dgp_rates(sc: Scenario, n_draws: int, rng: np.random.Generator, chunk: int = 250_000) -> dict[str, float]:
    """Monte Carlo truncation, censoring and cure rates of a design.

    truncation
        share of uncured draws with ``T <= Q``.
    censoring
        share of retained uncured subjects whose event is not exactly observed
        (interval- or right-censored).
    cure
        share of all draws that are cured.
    """
    uncured = trunc = kept_uncured = censored = cured = 0
    left = n_draws
    while left > 0:
        m = min(chunk, left)
        b = draw_batch(sc, rng, m)
        unc = ~b["cured"]
        kept = unc & ~b["truncated"]
        uncured += int(unc.sum())
        trunc += int((unc & b["truncated"]).sum())
        kept_uncured += int(kept.sum())
        censored += int((kept & (b["status"] != Status.EXACT)).sum())
        cured += int(b["cured"].sum())
        left -= m
    return {
        "truncation": trunc / uncured,
        "censoring": censored / kept_uncured,
        "cure": cured / n_draws,
    }


@dataclass
class ReplicationResult:
    index: int
    ok: bool
    converged: bool = False
    beta: np.ndarray | None = None
    beta_se: np.ndarray | None = None
    incr: np.ndarray | None = None
    incr_se: np.ndarray | None = None
    curve: np.ndarray | None = None
    error: str = ""


def _replication_seeds(seed: int, index: int) -> tuple[np.random.Generator, int]:
    ss = np.random.SeedSequence([int(seed), int(index)])
    return np.random.default_rng(ss), int(ss.generate_state(1)[0])


def replicate(
    sc: Scenario,
    seed: int,
    index: int,
    fit_cfg: FitConfig,
    grid: Sequence[float] = (),
    order: int = 3,
) -> ReplicationResult:
    """One replication: simulate, place knots, fit, and compute standard errors."""
    rng, fit_seed = _replication_seeds(seed, index)
    data = gen_dataset(sc, rng)
    times = data.knot_times()
    try:
        ks = build_knots(times, times.size, order, sc.tau)
        cons = Constraints.default(data, ks)
        res = fit(data, ks, cons, replace(fit_cfg, seed=fit_seed), warn=False)
        blocks = observed_information(score_matrix(res, data))
        cov = np.linalg.inv(blocks.o_hat) / blocks.n
        beta_se = np.sqrt(np.diag(cov))
        incr = []
        for t in INCREMENT_T:
            incr.append(cumhaz_increment(res, blocks, INCREMENT_Q, t))
        incr = np.array(incr)
        curve = hazard(res.params, ks, np.asarray(grid, dtype=float)) if len(grid) else np.empty(0)
    except CureSieveError as exc:
        return ReplicationResult(index=index, ok=False, error=f"{type(exc).__name__}: {exc}")
    except np.linalg.LinAlgError as exc:
        return ReplicationResult(index=index, ok=False, error=f"LinAlgError: {exc}")
    return ReplicationResult(
        index=index,
        ok=True,
        converged=res.converged,
        beta=res.params.beta.copy(),
        beta_se=beta_se,
        incr=incr[:, 0],
        incr_se=incr[:, 1],
        curve=curve,
    )


def _worker_count() -> int:
    env = os.environ.get("CURE_SIEVE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigurationError(f"CURE_SIEVE_THREADS must be an integer, got {env!r}") from exc
    return os.cpu_count() or 1


def _replicate_star(args):
    return replicate(*args)


def run_replications(
    sc: Scenario,
    reps: int,
    seed: int,
    fit_cfg: FitConfig | None = None,
    grid: Sequence[float] = (),
    workers: int | None = None,
) -> list[ReplicationResult]:
    """Run ``reps`` independent replications, returned in index order.

    Each replication draws from its own stream seeded by ``(seed, index)``, so
    the output does not depend on the number of worker processes.
    """
    if reps < 1:
        raise ConfigurationError("reps must be >= 1")
    fit_cfg = fit_cfg or FitConfig()
    workers = workers or _worker_count()
    jobs = [(sc, seed, i, fit_cfg, tuple(grid)) for i in range(reps)]
    if workers <= 1 or reps == 1:
        return [_replicate_star(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, reps)) as pool:
        return list(pool.map(_replicate_star, jobs, chunksize=max(1, reps // (4 * workers))))


@dataclass
class McRow:
    target: str
    truth: float
    mean: float
    sd: float
    mean_se: float
    coverage: float


@dataclass
class McSummary:
    scenario: Scenario
    rows: list[McRow]
    n_reps: int
    n_converged: int
    failures: list[str] = field(default_factory=list)

    def row(self, target: str) -> McRow:
        for r in self.rows:
            if r.target == target:
                return r
        raise KeyError(target)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["target", "truth", "mean", "sd", "mean_se", "coverage", "n_reps", "n_converged"])
            for r in self.rows:
                w.writerow(
                    [r.target, _fmt(r.truth), _fmt(r.mean), _fmt(r.sd), _fmt(r.mean_se), _fmt(r.coverage),
                     self.n_reps, self.n_converged]
                )

    def format_table(self) -> str:
        head = f"{'target':<22}{'truth':>9}{'mean':>9}{'sd':>9}{'mean_se':>9}{'cover':>8}"
        lines = [
            f"scenario {self.scenario.hazard_id}/{self.scenario.trunc_mode} n={self.scenario.n}: "
            f"{self.n_converged}/{self.n_reps} replications converged",
            head,
        ]
        for r in self.rows:
            lines.append(
                f"{r.target:<22}{r.truth:>9.3f}{r.mean:>9.3f}{r.sd:>9.3f}{r.mean_se:>9.3f}{100 * r.coverage:>7.1f}%"
            )
        return "\n".join(lines)


def _fmt(x: float) -> str:
    return repr(float(x))


def _sd(x: np.ndarray) -> float:
    return float(np.std(x, ddof=1)) if x.size > 1 else 0.0


def summarize(sc: Scenario, results: list[ReplicationResult], level: float = 0.95) -> McSummary:
    """Aggregate replications into bias/SD/SE/coverage rows.

    Raises :class:`McError` when more than 20% of replications failed or did
    not converge.
    """
    reps = len(results)
    good = [r for r in results if r.ok and r.converged]
    failures = [f"rep {r.index}: {r.error or 'did not converge'}" for r in results if not (r.ok and r.converged)]
    if reps - len(good) > 0.2 * reps:
        raise McError(f"{reps - len(good)} of {reps} replications failed or did not converge")
    zq = norm.ppf(0.5 + level / 2)
    rows = []
    est = np.array([r.beta for r in good])
    se = np.array([r.beta_se for r in good])
    for k, truth in enumerate(sc.beta0):
        rows.append(_row(f"beta{k + 1}", truth, est[:, k], se[:, k], zq))
    est = np.array([r.incr for r in good])
    se = np.array([r.incr_se for r in good])
    for k, t in enumerate(INCREMENT_T):
        name = f"Lambda({t:g})-Lambda({INCREMENT_Q:g})"
        rows.append(_row(name, sc.increment_truth(INCREMENT_Q, t), est[:, k], se[:, k], zq))
    return McSummary(scenario=sc, rows=rows, n_reps=reps, n_converged=len(good), failures=failures)


def _row(name, truth, est, se, zq) -> McRow:
    cover = np.abs(est - truth) <= zq * se
    return McRow(
        target=name,
        truth=float(truth),
        mean=float(np.mean(est)),
        sd=_sd(est),
        mean_se=float(np.mean(se)),
        coverage=float(np.mean(cover)),
    )


def run_mc(sc: Scenario, reps: int, seed: int, fit_cfg: FitConfig | None = None, workers: int | None = None) -> McSummary:
    """Monte Carlo study of one scenario."""
    return summarize(sc, run_replications(sc, reps, seed, fit_cfg, workers=workers))


DEFAULT_GRID = tuple(np.round(np.linspace(0.0, 3.9, 40), 10))


def curve_table(sc: Scenario, results: list[ReplicationResult], grid: Sequence[float]) -> list[tuple[float, float, float]]:
    good = [r for r in results if r.ok and r.converged]
    if not good:
        raise McError("no converged replications to average")
    mean_curve = np.mean(np.array([r.curve for r in good]), axis=0)
    truth = sc.hazard(np.asarray(grid, dtype=float))
    return [(float(t), float(h0), float(h)) for t, h0, h in zip(grid, truth, mean_curve)]


def hazard_curve(
    sc: Scenario,
    reps: int,
    grid: Sequence[float] = DEFAULT_GRID,
    seed: int = 0,
    fit_cfg: FitConfig | None = None,
    workers: int | None = None,
) -> list[tuple[float, float, float]]:
    """Mean fitted baseline hazard on ``grid`` next to the true hazard.

    Rows are ``(t, true_hazard, mean_fitted_hazard)`` in the order of ``grid``.
    """
    grid = [float(t) for t in grid]
    if any(not 0.0 <= t <= 3.9 for t in grid):
        raise ConfigurationError("hazard curve grid must lie within [0, 3.9]")
    results = run_replications(sc, reps, seed, fit_cfg, grid=grid, workers=workers)
    summarize(sc, results)
    return curve_table(sc, results, grid)


def write_curve_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "true_hazard", "mean_fitted_hazard"])
        for t, h0, h in rows:
            w.writerow([_fmt(t), _fmt(h0), _fmt(h)])
