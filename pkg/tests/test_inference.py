import numpy as np
import pytest
from scipy.stats import norm

from cure_sieve import checks
from cure_sieve.errors import DomainError, InferenceError
from cure_sieve.inference import (
    ScoreMatrix,
    beta_ci,
    beta_covariance,
    cumhaz_increment,
    observed_information,
    score_matrix,
)
from cure_sieve.likelihood import Params, loglik, subject_loglik, subject_scores
from cure_sieve.simulate import Scenario


@pytest.fixture(scope="module")
def blocks(sim_fit):
    data, res = sim_fit
    return observed_information(score_matrix(res, data))


class TestScores:
    def test_beta_scores_vanish_at_interior_optimum(self, sim_fit):
        data, res = sim_fit
        sm = score_matrix(res, data)
        assert np.max(np.abs(sm.beta_scores.mean(axis=0))) < 1e-5

    def test_scores_are_subject_derivatives(self, rng):
        data = checks.random_dataset(rng, 12)
        ks = checks.random_knots(rng, n_interior=2)
        params = checks.random_params(rng, data.d, ks.p)
        sb, se = subject_scores(params, data, ks)
        analytic = np.hstack([sb, se])
        x0 = params.to_vector()
        h = 1e-6
        for k in range(x0.size):
            e = np.zeros_like(x0)
            e[k] = h
            fd = (subject_loglik(Params.from_vector(x0 + e, data.d), data, ks)
                  - subject_loglik(Params.from_vector(x0 - e, data.d), data, ks)) / (2 * h)
            np.testing.assert_allclose(analytic[:, k], fd, rtol=1e-5, atol=1e-6)

    def test_alpha_scores_rescale(self, sim_fit):
        data, res = sim_fit
        eta = score_matrix(res, data, "eta")
        alpha = score_matrix(res, data, "alpha")
        ks = res.knots
        np.testing.assert_allclose(alpha.coef_scores, eta.coef_scores * ks.spans / ks.order, rtol=1e-15)
        np.testing.assert_array_equal(alpha.beta_scores, eta.beta_scores)

    def test_alpha_scores_match_bform_derivative(self, sim_fit):
        data, res = sim_fit
        ks = res.knots
        alpha = res.params.alpha(ks)
        sm = score_matrix(res, data, "alpha")
        sub = data.subset(np.arange(40))
        h = 1e-7
        for j in (0, ks.p - 1):
            e = np.zeros(ks.p)
            e[j] = h
            up = loglik(Params.from_alpha(res.params.beta, alpha + e, ks), sub, ks)
            dn = loglik(Params.from_alpha(res.params.beta, alpha - e, ks), sub, ks)
            assert sm.coef_scores[:40, j].sum() == pytest.approx((up - dn) / (2 * h), rel=1e-5)

    def test_unknown_parameterization(self, sim_fit):
        data, res = sim_fit
        with pytest.raises(ValueError):
            score_matrix(res, data, "log")


class TestInformation:
    def test_symmetric_psd(self, blocks):
        for mat in (blocks.o_hat, blocks.o_tilde):
            np.testing.assert_array_equal(mat, mat.T)
            assert np.linalg.eigvalsh(mat)[0] > 0

    def test_schur_complements(self, blocks):
        full = np.block([[blocks.a11, blocks.a12], [blocks.a12.T, blocks.a22 + blocks.ridge_used * np.eye(len(blocks.a22))]])
        inv = np.linalg.inv(full)
        d = blocks.a11.shape[0]
        np.testing.assert_allclose(np.linalg.inv(inv[:d, :d]), blocks.o_hat, rtol=1e-6, atol=1e-10)
        np.testing.assert_allclose(np.linalg.inv(inv[d:, d:]), blocks.o_tilde, rtol=1e-6, atol=1e-8)

    def test_scalar_case(self):
        sb = np.array([[1.0], [-1.0], [2.0], [0.0]])
        sc = np.array([[1.0], [0.0], [1.0], [-1.0]])
        b = observed_information(ScoreMatrix(sb, sc))
        a11, a12, a22 = 6 / 4, 3 / 4, 3 / 4
        assert b.o_hat[0, 0] == pytest.approx(a11 - a12**2 / a22)
        assert b.o_tilde[0, 0] == pytest.approx(a22 - a12**2 / a11)
        assert b.ridge_used == 0.0

    def test_ridge_on_singular_block(self):
        rng = np.random.default_rng(0)
        sb = rng.normal(size=(50, 1))
        col = rng.normal(size=(50, 1))
        b = observed_information(ScoreMatrix(sb, np.hstack([col, col])))
        assert b.ridge_used == pytest.approx(1e-8 * np.trace(b.a22) / 2)

    def test_zero_coefficient_scores(self):
        with pytest.raises(InferenceError):
            observed_information(ScoreMatrix(np.ones((5, 1)), np.zeros((5, 2))))

    def test_parameterization_invariance(self, sim_fit):
        data, res = sim_fit
        be = observed_information(score_matrix(res, data, "eta"))
        ba = observed_information(score_matrix(res, data, "alpha"))
        assert be.ridge_used == 0.0 and ba.ridge_used == 0.0
        np.testing.assert_allclose(be.o_hat, ba.o_hat, rtol=1e-8)
        for q, t in [(1.0, 1.5), (1.0, 3.5), (0.0, 4.0)]:
            est_e, se_e = cumhaz_increment(res, be, q, t)
            est_a, se_a = cumhaz_increment(res, ba, q, t)
            assert est_e == est_a
            assert se_e == pytest.approx(se_a, rel=1e-8)


class TestIntervals:
    def test_wald_multiplier(self, sim_fit, blocks):
        _, res = sim_fit
        for row in beta_ci(blocks, res):
            assert (row.upper - row.estimate) / row.se == pytest.approx(1.959964, abs=1e-6)
            assert row.p_value == pytest.approx(2 * norm.sf(abs(row.estimate / row.se)))

    def test_se_from_covariance(self, sim_fit, blocks):
        _, res = sim_fit
        se = np.sqrt(np.diag(np.linalg.inv(blocks.o_hat)) / blocks.n)
        np.testing.assert_allclose([r.se for r in beta_ci(blocks, res)], se, rtol=1e-10)
        np.testing.assert_allclose(beta_covariance(blocks), np.linalg.inv(blocks.o_hat) / blocks.n, rtol=1e-8)

    def test_estimates_near_truth(self, sim_fit, blocks):
        _, res = sim_fit
        for row, truth in zip(beta_ci(blocks, res), Scenario("h1", "light", 500).beta0):
            assert abs(row.estimate - truth) < 4 * row.se

    def test_bad_level(self, sim_fit, blocks):
        with pytest.raises(ValueError):
            beta_ci(blocks, sim_fit[1], level=1.0)


class TestIncrement:
    def test_equal_endpoints(self, sim_fit, blocks):
        assert cumhaz_increment(sim_fit[1], blocks, 2.0, 2.0) == (0.0, 0.0)

    def test_reversed(self, sim_fit, blocks):
        with pytest.raises(DomainError):
            cumhaz_increment(sim_fit[1], blocks, 2.0, 1.0)

    def test_additive_estimates(self, sim_fit, blocks):
        res = sim_fit[1]
        a, _ = cumhaz_increment(res, blocks, 1.0, 2.0)
        b, _ = cumhaz_increment(res, blocks, 2.0, 3.0)
        c, _ = cumhaz_increment(res, blocks, 1.0, 3.0)
        assert a + b == pytest.approx(c, rel=1e-12)

    def test_se_grows_with_width(self, sim_fit, blocks):
        res = sim_fit[1]
        ses = [cumhaz_increment(res, blocks, 1.0, t)[1] for t in (1.5, 2.5, 3.5)]
        assert ses[0] < ses[1] < ses[2]
