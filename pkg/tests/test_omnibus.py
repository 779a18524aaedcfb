import math

import numpy as np
import pytest
from scipy.stats import chi2

from gbjtest import crossing, gauss, omnibus, scores, setstats
from gbjtest.errors import DegenerateInputError, DomainError
from tests.conftest import exchangeable, rand_corr


class TestSkatLite:
    def test_identity_is_chisquare(self):
        q = chi2.isf(0.05, 3)
        assert omnibus.skat_pvalue_from_q(q, np.eye(3)) == pytest.approx(0.05, abs=1e-10)
        assert omnibus.skat_pvalue_from_q(7.81473, np.eye(3)) == pytest.approx(0.05, abs=1e-3)

    def test_rank_one_collapses_to_single_chisquare(self):
        d = 4
        Z = setstats.ZVector(np.array([2.0, 1.5, 1.8, 2.2]))
        q = omnibus.skat_statistic(Z)
        got = omnibus.skat_lite(Z, np.ones((d, d)))
        want = 2 * gauss.std_normal(math.sqrt(q / d)).sf
        assert got == pytest.approx(want, abs=1e-3)

    def test_monte_carlo_agreement(self, rng):
        d = 10
        Sigma = rand_corr(d, rng)
        L = np.linalg.cholesky(Sigma)
        n = 1_000_000
        draws = rng.standard_normal((n, d)) @ L.T
        qs = np.einsum("ij,ij->i", draws, draws)
        for q0 in (np.quantile(qs, 0.95), np.quantile(qs, 0.99)):
            mc = float(np.mean(qs > q0))
            se = math.sqrt(mc * (1 - mc) / n)
            got = omnibus.skat_pvalue_from_q(float(q0), Sigma)
            assert abs(got - mc) < 3 * se + 2e-4

    def test_threshold_round_trip(self, rng):
        Sigma = rand_corr(6, rng)
        for alpha in (0.05, 0.01):
            q = omnibus.skat_threshold(alpha, Sigma)
            assert omnibus.skat_pvalue_from_q(q, Sigma) == pytest.approx(alpha, rel=1e-8)

    def test_degenerate_rejected(self):
        Z = setstats.ZVector(np.array([1.0, 1.0]))
        with pytest.raises(DegenerateInputError):
            omnibus._liu_params(np.zeros(3))
        with pytest.raises(DomainError):
            omnibus.skat_lite(Z, np.eye(3))


class TestBootstrapCorr:
    def test_deterministic_bit_for_bit(self):
        Sigma = np.eye(20)
        R1, d1 = omnibus.bootstrap_corr(Sigma, B=100, seed=7)
        R2, d2 = omnibus.bootstrap_corr(Sigma, B=100, seed=7)
        assert d1 == d2
        assert np.array_equal(R1, R2)

    def test_valid_correlation_output(self, rng):
        Sigma = exchangeable(12, 0.3)
        R, dropped = omnibus.bootstrap_corr(Sigma, B=60, seed=3)
        assert R.shape == (4, 4)
        np.testing.assert_allclose(np.diag(R), 1.0)
        assert np.max(np.abs(R)) <= 1.0 + 1e-12
        assert np.linalg.eigvalsh(R)[0] > -1e-10
        assert dropped == 0

    def test_degenerate_single_coordinate_all_ones(self):
        R, _ = omnibus.bootstrap_corr(np.eye(1), B=40, seed=1)
        np.testing.assert_allclose(R, np.ones((4, 4)), atol=1e-12)

    def test_partially_degenerate_columns_stay_symmetric(self):
        X = np.column_stack([
            np.linspace(-1.0, 1.0, 30),
            np.full(30, 0.7),
            np.linspace(1.0, -1.0, 30),
            np.full(30, -0.2),
        ])
        R = omnibus._correlate_columns(X)
        assert np.array_equal(R, R.T)
        assert R[1, 0] == 1.0 and R[3, 0] == 1.0
        assert R[2, 0] == pytest.approx(-1.0)
        np.testing.assert_allclose(np.diag(R), 1.0)

    def test_minimum_replicates(self):
        with pytest.raises(DomainError):
            omnibus.bootstrap_corr(np.eye(4), B=10, seed=0)

    def test_individual_mode_runs_and_is_deterministic(self, rng):
        n, d = 250, 6
        g = (rng.uniform(size=(n, d)) < 0.3).astype(float) + (rng.uniform(size=(n, d)) < 0.3)
        G = scores.GenotypeMatrix(values=g, ids=tuple(f"s{j}" for j in range(d)))
        X = np.ones((n, 1))
        y = rng.standard_normal(n)
        fit = scores.fit_null(y, X, "gaussian")
        R1, d1 = omnibus.bootstrap_corr_individual(fit, G, X, B=40, seed=11)
        R2, d2 = omnibus.bootstrap_corr_individual(fit, G, X, B=40, seed=11)
        assert np.array_equal(R1, R2)
        assert np.linalg.eigvalsh(R1)[0] > -1e-10
        # the four tests on the same data correlate positively
        iu = np.triu_indices(4, 1)
        assert np.mean(R1[iu]) > 0.2

    def test_individual_mode_binomial(self, rng):
        n, d = 220, 4
        g = (rng.uniform(size=(n, d)) < 0.3).astype(float) + (rng.uniform(size=(n, d)) < 0.3)
        G = scores.GenotypeMatrix(values=g, ids=tuple("abcd"))
        X = np.ones((n, 1))
        y = (rng.uniform(size=n) < 0.4).astype(float)
        fit = scores.fit_null(y, X, "binomial")
        R, dropped = omnibus.bootstrap_corr_individual(fit, G, X, B=30, seed=5)
        assert R.shape == (4, 4) and dropped < 15


class TestOmniPvalue:
    def test_independence_closed_form(self):
        pv = {"GBJ": 0.05, "GHC": 0.4, "SKAT": 0.6, "MinP": 0.2}
        res = omnibus.omni_pvalue(pv, np.eye(4))
        assert res.omni_stat == 0.05
        assert res.p_omni == pytest.approx(1 - 0.95 ** 4, abs=1e-5)

    def test_perfect_dependence_closed_form(self):
        pv = {"GBJ": 0.03, "GHC": 0.2, "SKAT": 0.4, "MinP": 0.09}
        res = omnibus.omni_pvalue(pv, np.ones((4, 4)))
        assert res.p_omni == pytest.approx(0.03, abs=1e-5)

    def test_monotone_in_minimum(self, rng):
        R = omnibus.repair_correlation(0.5 * np.ones((4, 4)) + 0.5 * np.eye(4))
        last = 0.0
        for omni in (0.001, 0.01, 0.05, 0.2, 0.5):
            pv = {c: omni for c in omnibus.OMNI_COMPONENTS}
            p = omnibus.omni_pvalue(pv, R).p_omni
            assert p >= last
            last = p

    def test_envelope(self, rng):
        for _ in range(15):
            R = rand_corr(4, rng)
            # inter-test correlations are positive in practice
            R = np.abs(R)
            np.fill_diagonal(R, 1.0)
            R = omnibus.repair_correlation(R)
            omni = float(rng.uniform(0.001, 0.4))
            pv = dict(zip(omnibus.OMNI_COMPONENTS, [omni, omni * 2, omni * 3, omni * 1.5]))
            p = omnibus.omni_pvalue(pv, R).p_omni
            assert omni - 1e-6 <= p <= 1 - (1 - omni) ** 4 + 1e-6

    def test_pairwise_half_against_monte_carlo(self, rng):
        R = 0.5 * np.ones((4, 4)) + 0.5 * np.eye(4)
        omni = 0.01
        res = omnibus.omni_pvalue({c: omni for c in omnibus.OMNI_COMPONENTS}, R)
        L = np.linalg.cholesky(R)
        n = 1_000_000
        draws = rng.standard_normal((n, 4)) @ L.T
        thresh = gauss.std_normal_inv(1 - omni)
        mc = float(np.mean(np.any(draws > thresh, axis=1)))
        se = math.sqrt(mc * (1 - mc) / n)
        assert abs(res.p_omni - mc) < 3 * se + 1e-5

    def test_missing_component_rejected(self):
        with pytest.raises(DomainError):
            omnibus.omni_pvalue({"GBJ": 0.1}, np.eye(4))


class TestOmnibusPipeline:
    def test_component_pvalues_d1_collapse(self):
        Z = setstats.ZVector(np.array([2.3]))
        pv = omnibus.component_pvalues(Z, np.eye(1))
        want = 2 * gauss.std_normal(2.3).sf
        for c in omnibus.OMNI_COMPONENTS:
            assert pv[c] == pytest.approx(want, rel=1e-12)

    def test_full_pipeline(self, rng):
        d = 10
        Sigma = exchangeable(d, 0.2)
        z = rng.multivariate_normal(np.zeros(d), Sigma) + 0.9
        res = omnibus.omnibus_test(setstats.ZVector(z), Sigma, B=40, seed=2)
        assert res.omni_stat == min(res.component_pvalues.values())
        assert 0.0 <= res.p_omni <= 1.0
        assert res.bootstrap_reps == 40

    def test_null_calibration_identity_d20(self, rng):
        # empirical size of the copula-combined test at alpha = 0.05;
        # conservative behavior is expected, hence the slack lower bound
        d, alpha, reps = 20, 0.05, 10_000
        Sigma = np.eye(d)
        R_hat, _ = omnibus.bootstrap_corr(Sigma, B=100, seed=31)
        c_star = omnibus.omni_threshold(alpha, R_hat)
        bounds = {m: crossing.rejection_region(m, c_star, d, Sigma).b
                  for m in ("GBJ", "GHC", "MinP")}
        q_cut = omnibus.skat_threshold(c_star, Sigma)
        draws = rng.standard_normal((reps, d))
        sortz = np.sort(np.abs(draws), axis=1)
        rej = np.zeros(reps, dtype=bool)
        for b in bounds.values():
            rej |= np.any(sortz > b[None, :], axis=1)
        rej |= np.einsum("ij,ij->i", draws, draws) > q_cut
        size = rej.mean()
        assert 0.03 <= size <= 0.06
