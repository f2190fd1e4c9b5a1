import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.interpolate import BSpline

from cure_sieve.checks import gauss_legendre_integral
from cure_sieve.errors import ConfigurationError, DomainError
from cure_sieve.splines import (
    KnotSequence,
    build_knots,
    eval_b,
    eval_i,
    eval_m,
    integer_cube_root,
    integrate_b,
)


def cox_de_boor(full, j, order, t):
    """Textbook recursion for one basis function, right-closed on the last span."""
    if order == 1:
        last = full[-1]
        if full[j] <= t < full[j + 1]:
            return 1.0
        if t == last and full[j] < full[j + 1] == last:
            return 1.0
        return 0.0
    out = 0.0
    den = full[j + order - 1] - full[j]
    if den > 0:
        out += (t - full[j]) / den * cox_de_boor(full, j, order - 1, t)
    den = full[j + order] - full[j + 1]
    if den > 0:
        out += (full[j + order] - t) / den * cox_de_boor(full, j + 1, order - 1, t)
    return out


knot_sets = st.lists(st.floats(0.05, 3.95), min_size=1, max_size=6, unique=True).filter(
    lambda ks: np.min(np.diff(np.sort([0.0, *ks, 4.0]))) > 1e-3
)


class TestKnotSequence:
    def test_full_vector(self, ks3):
        np.testing.assert_array_equal(ks3.full, [0, 0, 0, 0.7, 1.6, 2.9, 4, 4, 4])
        assert ks3.p == 6

    def test_spans_sum(self, ks3):
        assert ks3.spans.sum() == pytest.approx(ks3.order * ks3.tau)

    @pytest.mark.parametrize("interior", [(1.0, 1.0), (0.0, 1.0), (1.0, 4.0), (2.0, 1.0)])
    def test_rejects_bad_interior(self, interior):
        with pytest.raises(ConfigurationError):
            KnotSequence(order=3, tau=4.0, interior=interior)

    def test_rejects_bad_tau(self):
        with pytest.raises(ConfigurationError):
            KnotSequence(order=3, tau=0.0, interior=())


class TestBuildKnots:
    def test_tiny_data_fallback(self):
        ks = build_knots([1, 2, 3], 3, 3, 4.0)
        assert ks.p == 4
        assert ks.interior == (2.0,)

    def test_basis_count_from_cube_root(self):
        times = np.linspace(0.001, 3.999, 1000)
        ks = build_knots(times, 1000, 3, 4.0)
        assert ks.p == 10
        assert len(ks.interior) == 7

    @pytest.mark.parametrize("n,k", [(0, 0), (1, 1), (7, 1), (8, 2), (26, 2), (27, 3), (999, 9), (1000, 10), (1001, 10)])
    def test_integer_cube_root(self, n, k):
        assert integer_cube_root(n) == k

    def test_uniform_quantiles(self):
        times = np.random.default_rng(0).uniform(0, 4, 100_000)
        ks = build_knots(times, 1000, 3, 4.0)
        n_int = ks.p - ks.order
        expected = 4.0 * np.arange(1, n_int + 1) / (n_int + 1)
        np.testing.assert_allclose(ks.interior, expected, atol=0.05)

    def test_duplicate_quantiles_are_padded(self):
        times = [1.0] * 50 + [3.0]
        ks = build_knots(times, 1000, 3, 4.0)
        assert ks.p == 10
        assert len(ks.interior) == 7
        assert np.all(np.diff(ks.interior) > 0)

    def test_boundary_times_ignored(self):
        ks = build_knots([0.0, 1.0, 4.0], None, 3, 4.0)
        assert ks.interior == (1.0,)

    def test_empty_after_filter(self):
        with pytest.raises(ConfigurationError):
            build_knots([0.0, 4.0], None, 3, 4.0)

    def test_bad_tau(self):
        with pytest.raises(ConfigurationError):
            build_knots([1.0], None, 3, -1.0)

    def test_out_of_range_times(self):
        with pytest.raises(DomainError):
            build_knots([1.0, 5.0], None, 3, 4.0)


class TestEvalB:
    @pytest.mark.parametrize("order", [2, 3, 4])
    def test_partition_of_unity(self, order):
        ks = KnotSequence(order=order, tau=4.0, interior=(0.3, 1.1, 2.0, 3.7))
        grid = np.linspace(0, 4, 1000)
        b = eval_b(ks, grid)
        assert np.max(np.abs(b.sum(axis=1) - 1)) < 1e-12
        assert np.all(b >= 0)

    def test_hat_function_peak(self):
        ks = KnotSequence(order=2, tau=4.0, interior=(2.0,))
        np.testing.assert_array_equal(eval_b(ks, 2.0), [0.0, 1.0, 0.0])

    def test_right_endpoint(self, ks3):
        b = eval_b(ks3, 4.0)
        assert b[-1] == 1.0
        assert b.sum() == 1.0

    def test_matches_scipy_and_recursion(self, ks3, rng):
        pts = rng.uniform(0, 4, 50)
        ours = eval_b(ks3, pts)
        ref = BSpline(ks3.full, np.eye(ks3.p), ks3.order - 1)(pts)
        np.testing.assert_allclose(ours, ref, atol=1e-12)
        rec = np.array([[cox_de_boor(ks3.full, j, 3, t) for j in range(ks3.p)] for t in pts])
        np.testing.assert_allclose(ours, rec, atol=1e-12)

    @pytest.mark.parametrize("t", [-1e-9, 4.0 + 1e-9, np.nan])
    def test_domain(self, ks3, t):
        with pytest.raises(DomainError):
            eval_b(ks3, t)

    @settings(max_examples=40, deadline=None)
    @given(knot_sets, st.integers(2, 4))
    def test_unity_property(self, interior, order):
        ks = KnotSequence(order=order, tau=4.0, interior=tuple(sorted(interior)))
        grid = np.linspace(0, 4, 200)
        assert np.max(np.abs(eval_b(ks, grid).sum(axis=1) - 1)) < 1e-12


class TestEvalM:
    def test_integrates_to_one(self, ks3):
        for j in range(ks3.p):
            val = gauss_legendre_integral(ks3, lambda x: eval_m(ks3, x)[:, j], 0.0, 4.0)
            assert val == pytest.approx(1.0, abs=1e-12)

    def test_order_one_indicator(self):
        ks = KnotSequence(order=1, tau=4.0, interior=(1.0, 2.5))
        np.testing.assert_allclose(eval_m(ks, 0.5), [1.0, 0, 0])
        np.testing.assert_allclose(eval_m(ks, 1.7), [0, 1 / 1.5, 0])
        np.testing.assert_allclose(eval_m(ks, 3.0), [0, 0, 1 / 1.5])

    def test_derivative_of_i(self, ks3, rng):
        pts = rng.uniform(0.01, 3.99, 40)
        h = 1e-5
        fd = (eval_i(ks3, pts + h) - eval_i(ks3, pts - h)) / (2 * h)
        np.testing.assert_allclose(fd, eval_m(ks3, pts), atol=1e-6)


class TestEvalI:
    def test_boundaries(self, ks3):
        np.testing.assert_array_equal(eval_i(ks3, 0.0), np.zeros(ks3.p))
        np.testing.assert_array_equal(eval_i(ks3, 4.0), np.ones(ks3.p))

    def test_monotone_and_bounded(self, ks3):
        vals = eval_i(ks3, np.linspace(0, 4, 100))
        assert np.all(np.diff(vals, axis=0) >= 0)
        assert np.all((vals >= 0) & (vals <= 1))

    def test_matches_adaptive_quadrature(self, ks3, rng):
        for t in rng.uniform(0, 4, 20):
            j = int(rng.integers(ks3.p))
            pts = [k for k in ks3.interior if k < t]
            ref, _ = integrate.quad(lambda u: eval_m(ks3, u)[j], 0, t, points=pts or None, epsabs=1e-13, epsrel=1e-13)
            assert eval_i(ks3, t)[j] == pytest.approx(ref, abs=1e-8)


class TestIntegrateB:
    def test_full_range(self, ks3):
        for j in range(ks3.p):
            assert integrate_b(ks3, j, 0.0, 4.0) == pytest.approx(ks3.spans[j] / 3, abs=1e-14)

    def test_empty_range(self, ks3):
        assert integrate_b(ks3, 2, 1.3, 1.3) == 0.0

    def test_matches_gauss_legendre(self, ks3, rng):
        for _ in range(30):
            a, b = np.sort(rng.uniform(0, 4, 2))
            j = int(rng.integers(ks3.p))
            ref = gauss_legendre_integral(ks3, lambda x: eval_b(ks3, x)[:, j], a, b)
            assert integrate_b(ks3, j, a, b) == pytest.approx(ref, abs=1e-10)

    def test_reversed_bounds(self, ks3):
        with pytest.raises(DomainError):
            integrate_b(ks3, 0, 2.0, 1.0)
