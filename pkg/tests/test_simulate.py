import numpy as np
import pytest
from scipy.integrate import quad

from cure_sieve.errors import ConfigurationError, McError
from cure_sieve.likelihood import Status
from cure_sieve.optimizer import FitConfig
from cure_sieve.simulate import (
    DESIGN_RATES,
    ReplicationResult,
    Scenario,
    curve_table,
    dgp_rates,
    draw_batch,
    draw_subject,
    gen_dataset,
    hazard_curve,
    run_replications,
    summarize,
)


class TestScenario:
    @pytest.mark.parametrize("hid", ["h1", "h2", "h3"])
    def test_inverse_cum_hazard(self, hid):
        sc = Scenario(hid, "light")
        t = np.linspace(0.0, 4.0, 101)
        np.testing.assert_allclose(sc.inverse_cum_hazard(sc.cum_hazard(t)), t, atol=1e-12)

    @pytest.mark.parametrize(
        "hid, expected",
        [("h1", (0.490, 0.967, 1.142)), ("h3", (0.044, 0.088, 0.104))],
    )
    def test_increment_truths(self, hid, expected):
        sc = Scenario(hid, "heavy")
        got = [sc.increment_truth(1.0, t) for t in (1.5, 2.5, 3.5)]
        np.testing.assert_allclose(got, expected, atol=5e-4)

    def test_h2_hazard_at_origin(self):
        assert Scenario("h2").hazard(0.0) == pytest.approx(1 / (1 - np.exp(-4)), rel=1e-14)
        assert float(Scenario("h2").hazard(0.0)) == pytest.approx(1.0187, abs=1e-4)

    def test_hazard_integrates(self):
        sc = Scenario("h1")
        assert quad(sc.hazard, 0, 2.7)[0] == pytest.approx(sc.cum_hazard(2.7), rel=1e-10)
        assert float(sc.hazard(4.5)) == 0.0

    @pytest.mark.parametrize("kw", [dict(hazard_id="h4"), dict(trunc_mode="medium"), dict(n=0), dict(beta0=(1.0,))])
    def test_invalid(self, kw):
        with pytest.raises(ConfigurationError):
            Scenario(**kw)


class TestDraws:
    @pytest.mark.parametrize("mode", ["light", "heavy"])
    def test_batch_structure(self, mode, rng):
        sc = Scenario("h2", mode)
        b = draw_batch(sc, rng, 20000)
        assert not np.any(b["truncated"] & b["cured"])
        kept = ~b["truncated"]
        assert np.all(b["status"][b["cured"]] == Status.RIGHT)
        assert np.all(b["status"][~kept] == -1)
        assert np.all(b["v"] <= 4.0) and np.all(b["u"] >= b["q"])
        assert np.all(b["v"][kept] - b["u"][kept] > 0)
        assert np.all(b["event"][b["status"] == Status.EXACT] > b["q"][b["status"] == Status.EXACT])

    def test_light_window_starts_at_one(self, rng):
        b = draw_batch(Scenario("h1", "light"), rng, 5000)
        assert np.all(b["u"] >= 1.0 - 0.005)

    def test_draw_subject(self, rng):
        sc = Scenario("h1", "heavy")
        subjects = [draw_subject(sc, rng) for _ in range(300)]
        kept = [s for s in subjects if s is not None]
        assert 0 < len(kept) < 300
        assert all(s.q <= 4.0 for s in kept)

    def test_gen_dataset_deterministic(self):
        sc = Scenario("h3", "heavy", 150)
        a = gen_dataset(sc, np.random.default_rng(4))
        b = gen_dataset(sc, np.random.default_rng(4))
        assert a.n == 150
        for name in ("q", "status", "t", "u", "v", "z"):
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))

    def test_rates_small_sample(self):
        sc = Scenario("h2", "light")
        got = dgp_rates(sc, 200_000, np.random.default_rng(0))
        tr, ce, cu = DESIGN_RATES[("h2", "light")]
        assert got["truncation"] == pytest.approx(tr, abs=0.01)
        assert got["censoring"] == pytest.approx(ce, abs=0.01)
        assert got["cure"] == pytest.approx(cu, abs=0.005)


class TestReplications:
    def test_single_rep_coverage_binary(self):
        sc = Scenario("h1", "light", 200)
        summary = summarize(sc, run_replications(sc, 1, 0, workers=1))
        assert all(r.coverage in (0.0, 1.0) for r in summary.rows)
        assert all(r.sd == 0.0 for r in summary.rows)

    def test_grid_permutation(self):
        sc = Scenario("h3", "light", 150)
        grid = [0.1, 1.0, 2.0, 3.0]
        a = hazard_curve(sc, 2, grid, seed=3, workers=1)
        b = hazard_curve(sc, 2, grid[::-1], seed=3, workers=1)
        assert a == b[::-1]

    def test_grid_range(self):
        with pytest.raises(ConfigurationError):
            hazard_curve(Scenario(), 1, [0.5, 3.95])

    def test_workers_do_not_change_results(self):
        sc = Scenario("h2", "heavy", 120)
        a = run_replications(sc, 4, 9, workers=1)
        b = run_replications(sc, 4, 9, workers=2)
        for ra, rb in zip(a, b):
            assert ra.index == rb.index
            np.testing.assert_array_equal(ra.beta, rb.beta)
            np.testing.assert_array_equal(ra.incr_se, rb.incr_se)

    def test_too_many_failures(self):
        results = [ReplicationResult(index=i, ok=False, error="boom") for i in range(3)]
        results.append(ReplicationResult(index=3, ok=True, converged=True))
        with pytest.raises(McError):
            summarize(Scenario(), results)
        with pytest.raises(McError):
            curve_table(Scenario(), results[:3], [0.0])

    def test_reps_validation(self):
        with pytest.raises(ConfigurationError):
            run_replications(Scenario(), 0, 0)

    def test_summary_csv(self, tmp_path):
        sc = Scenario("h1", "light", 150)
        summary = summarize(sc, run_replications(sc, 2, 1, FitConfig(), workers=1))
        path = tmp_path / "mc.csv"
        summary.to_csv(path)
        lines = path.read_bytes().split(b"\n")
        assert lines[0] == b"target,truth,mean,sd,mean_se,coverage,n_reps,n_converged"
        assert len([ln for ln in lines if ln]) == 6
        assert b"\r" not in path.read_bytes()
