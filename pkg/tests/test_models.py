"""Model targets: estimator unbiasedness vs closed forms, exact samplers."""

import itertools
import math

import numpy as np
import pytest
import scipy.stats as st

from unbiasedmc.models import (
    BETA_CRITICAL,
    BetaBernoulliModel,
    BinomialSSM,
    LinearGaussianSSM,
    bootstrap_pf_log_lik,
    enumerate_suff_stats,
    ising_cftp_sample,
    kalman_log_lik,
    simulate_lgssm,
    suff_stat,
    toy_log_lik_hat,
    unnorm_log_density,
)
from unbiasedmc.models.ising import _sandwich_sweeps
from unbiasedmc.rng import RngStream

MU = np.array([1.0, 2.0])


class TestToy:
    def test_zero_noise_is_exact(self):
        theta = np.array([0.3, -0.7])
        d = theta - MU
        want = -0.5 * float(d @ d) - math.log(2 * math.pi)
        got = toy_log_lik_hat(theta, MU, 0.0, RngStream(0, 0))
        assert got == pytest.approx(want, rel=1e-14)

    def test_mode_value(self):
        got = toy_log_lik_hat(MU, MU, 0.0, RngStream(0, 0))
        assert got == pytest.approx(-math.log(2 * math.pi), rel=1e-14)

    def test_unit_mean_noise(self):
        # E[exp(estimate)] / pi(theta) = 1 by the log-normal moment formula
        theta = np.array([0.5, 1.5])
        exact = toy_log_lik_hat(theta, MU, 0.0, RngStream(0, 0))
        stream = RngStream(1, 0)
        ratios = np.exp(
            [toy_log_lik_hat(theta, MU, 1.0, stream) - exact for _ in range(10**5)]
        )
        se = ratios.std(ddof=1) / math.sqrt(ratios.size)
        assert abs(ratios.mean() - 1.0) < 3 * se


class TestBetaBernoulli:
    def test_exact_at_zero_tilt(self):
        y = np.array([1, 0, 0, 1, 0])
        model = BetaBernoulliModel(y, alpha=1.0, eps=0.0, n_particles=7)
        b = 2.0
        got = model.log_lik_hat(np.array([b]), RngStream(0, 0))
        assert got == pytest.approx(model.exact_log_marginal(b), rel=1e-12)

    def test_single_success_closed_form(self):
        # alpha/(alpha+beta) = 1/3 for alpha=1, beta=2
        model = BetaBernoulliModel(np.array([1]), alpha=1.0, eps=0.0, n_particles=3)
        got = model.log_lik_hat(np.array([2.0]), RngStream(0, 0))
        assert got == pytest.approx(math.log(1.0 / 3.0), rel=1e-12)

    def test_estimator_unbiased(self):
        y = BetaBernoulliModel.simulate(1.0, 2.0, 5, RngStream(10, 0))
        model = BetaBernoulliModel(y, alpha=1.0, eps=0.125, n_particles=10)
        b = np.array([2.0])
        exact = model.exact_log_marginal(2.0)
        stream = RngStream(11, 0)
        ratios = np.exp([model.log_lik_hat(b, stream) - exact for _ in range(10**5)])
        se = ratios.std(ddof=1) / math.sqrt(ratios.size)
        assert abs(ratios.mean() - 1.0) < 3 * se

    def test_block_estimator_unbiased_and_deterministic(self):
        y = BetaBernoulliModel.simulate(1.0, 2.0, 6, RngStream(12, 0))
        model = BetaBernoulliModel(y, alpha=1.0, eps=0.125, n_particles=8)
        b = np.array([1.7])
        exact = model.exact_log_marginal(1.7)
        stream = RngStream(13, 0)
        vals = []
        for _ in range(2 * 10**4):
            aux = model.sample_aux(stream)
            pol = model.per_obs_log_lik(b, aux)
            # deterministic in (theta, aux)
            np.testing.assert_array_equal(pol, model.per_obs_log_lik(b, aux))
            vals.append(float(np.sum(pol)))
        ratios = np.exp(np.array(vals) - exact)
        se = ratios.std(ddof=1) / math.sqrt(ratios.size)
        assert abs(ratios.mean() - 1.0) < 3 * se

    def test_weight_ratio_one_at_zero_tilt(self):
        model = BetaBernoulliModel(np.array([1, 0]), alpha=1.3, eps=0.0, n_particles=2)
        xs = np.linspace(1e-6, 1 - 1e-6, 200)
        for y, p in ((1, 1.3 / (1.3 + 2.0)), (0, 2.0 / (1.3 + 2.0))):
            ratio = np.exp(model.log_weight(xs, y, 2.0)) / p
            np.testing.assert_allclose(ratio, 1.0, atol=1e-12)

    def test_weight_ratio_increasing_and_unbounded(self):
        model = BetaBernoulliModel(np.array([1]), alpha=1.0, eps=0.5, n_particles=2)
        beta = 2.0
        xs = np.linspace(0.01, 1 - 1e-12, 300)
        p1 = 1.0 / 3.0
        ratios = np.exp(model.log_weight(xs, 1, beta)) / p1
        assert np.all(np.diff(ratios) > 0)
        assert ratios[-1] > 1e3 * ratios[0]

    def test_simulate_frequency(self):
        # P(Y=1) = alpha/(alpha+beta) = 1/3
        y = BetaBernoulliModel.simulate(1.0, 2.0, 10**5, RngStream(14, 0))
        assert abs(y.mean() - 1.0 / 3.0) < 3 * math.sqrt(2.0 / 9.0 / 10**5)


def _dense_gaussian_log_lik(a, sigma_x, y):
    """Joint-covariance oracle: y ~ N(0, Sigma_X + I) with AR(1)-propagated X."""
    T = len(y)
    var_x = np.empty(T + 1)
    var_x[0] = 1.0
    for t in range(1, T + 1):
        var_x[t] = a * a * var_x[t - 1] + sigma_x**2
    cov = np.empty((T, T))
    for s in range(1, T + 1):
        for t in range(s, T + 1):
            cov[s - 1, t - 1] = cov[t - 1, s - 1] = var_x[s] * a ** (t - s)
    return st.multivariate_normal(np.zeros(T), cov + np.eye(T)).logpdf(y)


class TestKalman:
    def test_single_observation_closed_form(self):
        a, sx, y1 = 0.8, 0.6, 1.3
        want = st.norm(0.0, math.sqrt(a * a + sx * sx + 1.0)).logpdf(y1)
        assert kalman_log_lik(a, sx, np.array([y1])) == pytest.approx(want, rel=1e-12)

    @pytest.mark.parametrize("T", [4, 6])
    def test_matches_dense_gaussian(self, T):
        stream = RngStream(20, T)
        _, y = simulate_lgssm(0.7, 0.9, T, stream)
        got = kalman_log_lik(0.7, 0.9, y)
        want = _dense_gaussian_log_lik(0.7, 0.9, y)
        assert got == pytest.approx(want, rel=1e-10)

    def test_degenerate_state_limit(self):
        y = np.array([0.4, -1.1, 2.0])
        got = kalman_log_lik(0.0, 1e-9, y)
        want = st.norm(0, 1).logpdf(y).sum()
        assert got == pytest.approx(want, rel=1e-8)


class TestBootstrapPf:
    def test_unbiased_against_kalman(self):
        _, y = simulate_lgssm(0.5, 1.0, 5, RngStream(30, 0))
        ssm = LinearGaussianSSM(y)
        theta = np.array([0.5, 1.0])
        exact = kalman_log_lik(0.5, 1.0, y)
        stream = RngStream(31, 0)
        ratios = np.exp(
            [bootstrap_pf_log_lik(ssm, theta, 64, stream) - exact for _ in range(10**4)]
        )
        se = ratios.std(ddof=1) / math.sqrt(ratios.size)
        assert abs(ratios.mean() - 1.0) < 3 * se

    def test_variance_decreasing_in_particles(self):
        _, y = simulate_lgssm(0.5, 1.0, 5, RngStream(32, 0))
        ssm = LinearGaussianSSM(y)
        theta = np.array([0.5, 1.0])
        stream = RngStream(33, 0)
        variances = []
        for n in (2**6, 2**8, 2**10, 2**12, 2**14):
            vals = [bootstrap_pf_log_lik(ssm, theta, n, stream) for _ in range(200)]
            variances.append(np.var(vals, ddof=1))
        # strictly decreasing across the grid = rank correlation -1 with N
        assert np.all(np.diff(variances) < 0), f"variances not monotone: {variances}"

    def test_flat_observation_density_gives_zero(self):
        class FlatSSM:
            T = 7

            def pf_init(self, theta, n, stream):
                return stream.gen.standard_normal(n)

            def pf_propagate(self, x, theta, stream):
                return x + stream.gen.standard_normal(x.shape[0])

            def pf_obs_log_density(self, t, x, theta):
                return np.zeros(x.shape[0])

        got = bootstrap_pf_log_lik(FlatSSM(), np.zeros(2), 32, RngStream(34, 0))
        assert got == 0.0

    def test_all_zero_weights_return_minus_inf(self):
        class DoomedSSM:
            T = 3

            def pf_init(self, theta, n, stream):
                return stream.gen.standard_normal(n)

            def pf_propagate(self, x, theta, stream):
                return x

            def pf_obs_log_density(self, t, x, theta):
                return np.full(x.shape[0], -math.inf)

        got = bootstrap_pf_log_lik(DoomedSSM(), np.zeros(2), 16, RngStream(35, 0))
        assert got == -math.inf


class TestBinomialSSM:
    def test_observation_logpmf_matches_scipy(self):
        y = np.array([0, 25, 50])
        model = BinomialSSM(y, m_trials=50)
        x = np.array([-2.0, 0.3, 4.0])
        for t in range(3):
            p = 1.0 / (1.0 + math.exp(-x[t]))
            want = st.binom(50, p).logpmf(y[t])
            got = model.pf_obs_log_density(t, np.array([x[t]]), None)[0]
            assert got == pytest.approx(want, rel=1e-10)

    def test_prior_matches_scipy(self):
        model = BinomialSSM(np.array([10]), m_trials=50)
        for a, s2 in ((0.3, 0.5), (0.9, 2.0)):
            want = st.invgamma(1.0, scale=0.1).logpdf(s2)  # a-component is U[0,1]
            assert model.log_prior(np.array([a, s2])) == pytest.approx(want, rel=1e-10)
        assert model.log_prior(np.array([1.2, 1.0])) == -math.inf
        assert model.log_prior(np.array([0.5, -1.0])) == -math.inf

    def test_simulate_range(self):
        _, y = BinomialSSM.simulate(0.9, 1.0, 500, 50, RngStream(40, 0))
        assert y.min() >= 0 and y.max() <= 50
        assert len(y) == 500


def _brute_force_suff_stats(L):
    stats = []
    for spins in itertools.product((-1, 1), repeat=L * L):
        grid = np.array(spins).reshape(L, L)
        s = 0
        for i in range(L):
            for j in range(L):
                if i + 1 < L:
                    s += grid[i, j] * grid[i + 1, j]
                if j + 1 < L:
                    s += grid[i, j] * grid[i, j + 1]
        stats.append(s)
    return np.array(stats)


class TestIsingDensity:
    def test_all_plus_two_by_two(self):
        spins = np.ones((2, 2), dtype=int)
        assert suff_stat(spins) == 4
        assert unnorm_log_density(spins, 0.7) == pytest.approx(2.8)

    def test_checkerboard_two_by_two(self):
        spins = np.array([[1, -1], [-1, 1]])
        assert unnorm_log_density(spins, 0.7) == pytest.approx(-2.8)

    def test_beta_zero_is_flat(self):
        spins = np.array([[1, -1, 1], [1, 1, -1], [-1, -1, -1]])
        assert unnorm_log_density(spins, 0.0) == 0.0

    @pytest.mark.parametrize("L", [2, 3])
    def test_enumeration_matches_brute_force(self, L):
        got = np.sort(enumerate_suff_stats(L))
        want = np.sort(_brute_force_suff_stats(L))
        np.testing.assert_array_equal(got, want)


class TestCftp:
    def test_beta_zero_is_iid_uniform(self):
        L, n = 3, 10**4
        stream = RngStream(50, 0)
        mags = np.empty(n)
        corr = np.empty(n)
        for i in range(n):
            spins = ising_cftp_sample(0.0, L, stream)
            mags[i] = spins.mean()
            corr[i] = suff_stat(spins) / 12.0  # 12 edges on the 3x3 free grid
        # spins iid uniform: per-site variance 1, 9 sites
        assert abs(mags.mean()) < 3.0 / math.sqrt(9 * n)
        assert abs(corr.mean()) < 3 * corr.std(ddof=1) / math.sqrt(n)

    def test_matches_enumeration_chi_square(self):
        L, beta, n = 3, 0.3, 2 * 10**4
        all_stats = enumerate_suff_stats(L)
        values = np.unique(all_stats)
        weights = np.array(
            [np.exp(beta * all_stats[all_stats == v]).sum() for v in values]
        )
        probs = weights / weights.sum()
        stream = RngStream(51, 0)
        draws = np.array([suff_stat(ising_cftp_sample(beta, L, stream)) for _ in range(n)])
        observed = np.array([(draws == v).sum() for v in values])
        expected = probs * n
        keep = expected >= 5
        chi2 = (((observed - expected) ** 2 / expected)[keep]).sum()
        p = st.chi2.sf(chi2, keep.sum() - 1)
        assert p > 1e-4, f"chi-square p={p:.2e}"

    def test_sandwich_keeps_monotone_order(self):
        L = 4
        stream = RngStream(52, 0)
        for _ in range(50):
            upper = np.ones((L, L), dtype=np.int8)
            lower = -np.ones((L, L), dtype=np.int8)
            blocks = stream.gen.random((3, L, L))
            _sandwich_sweeps(upper, lower, blocks, 2.0 * 0.4)
            assert np.all(upper >= lower)

    def test_schedule_independent_sample(self):
        for seed in range(20):
            a = ising_cftp_sample(0.35, 4, RngStream(53, seed), t_start=2)
            b = ising_cftp_sample(0.35, 4, RngStream(53, seed), t_start=13)
            np.testing.assert_array_equal(a, b)

    def test_sweep_cap_failure(self):
        from unbiasedmc.models import CftpFailureError

        with pytest.raises(CftpFailureError):
            # supercritical coupling on a large lattice cannot coalesce in 4 sweeps
            ising_cftp_sample(2.0, 24, RngStream(54, 0), sweep_cap=4)
