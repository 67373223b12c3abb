"""Tail fits, asymptotic variance, inefficiency arithmetic."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hst

from unbiasedmc.diagnostics import (
    TailFit,
    auto_n_min,
    empirical_survival,
    fit_polynomial_bound,
    inefficiency_report,
    spectrum_variance,
)


class TestEmpiricalSurvival:
    def test_counting_example(self):
        surv = empirical_survival([1, 2, 2, 5])
        assert surv[0, 1] == 1.0
        assert surv[2, 1] == 0.25  # P(tau > 2) = 1/4
        assert surv[5, 1] == 0.0

    def test_all_ones(self):
        surv = empirical_survival([1, 1, 1], n_max=4)
        np.testing.assert_array_equal(surv[1:, 1], 0.0)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            empirical_survival([])

    def test_non_increasing(self):
        rng = np.random.default_rng(0)
        taus = rng.geometric(0.2, size=500)
        surv = empirical_survival(taus)
        assert np.all(np.diff(surv[:, 1]) <= 0)

    @given(hst.lists(hst.integers(1, 200), min_size=1, max_size=300))
    @settings(max_examples=200, deadline=None)
    def test_tail_sum_equals_mean(self, taus):
        # sum_{n>=0} P(tau > n) = E[tau] exactly (discrete tail-sum identity)
        surv = empirical_survival(taus)
        assert abs(surv[:, 1].sum() - np.mean(taus)) < 1e-12


class TestPolynomialBoundFit:
    def test_exact_power_law(self):
        ns = np.arange(0, 201)
        p = np.ones_like(ns, dtype=float)
        p[1:] = ns[1:].astype(float) ** -2.0
        fit = fit_polynomial_bound(np.column_stack([ns, p]), n_min=20)
        assert fit.fit_kappa == pytest.approx(2.0, abs=1e-6)
        assert fit.fit_C == pytest.approx(1.0, rel=1e-6)
        assert not fit.superpolynomial

    def test_geometric_decay_flagged(self):
        ns = np.arange(0, 61)
        p = 0.5 ** ns.astype(float)
        fit = fit_polynomial_bound(np.column_stack([ns, p]), n_min=5)
        assert fit.superpolynomial

    def test_bound_dominates_window(self):
        rng = np.random.default_rng(7)
        taus = rng.pareto(2.5, size=5000).astype(int) + 1
        surv = empirical_survival(taus)
        fit = fit_polynomial_bound(surv, n_min=3)
        window = fit.survival
        assert np.all(fit.bound(window[:, 0]) >= window[:, 1] - 1e-12)

    def test_too_few_points_rejected(self):
        surv = np.column_stack([np.arange(4), np.array([1.0, 0.5, 0.2, 0.0])])
        with pytest.raises(ValueError):
            fit_polynomial_bound(surv, n_min=1)

    def test_auto_n_min(self):
        assert auto_n_min([500] * 100) == 20  # long tails: fixed tail start
        assert auto_n_min([3, 4, 5]) == 1  # short tails: fit everything


class TestSpectrumVariance:
    def test_white_noise(self):
        rng = np.random.default_rng(1)
        v = spectrum_variance(rng.standard_normal(10**6))
        assert 0.95 < v < 1.05

    def test_ar1(self):
        # v_as = sigma^2 / (1 - phi)^2 = 4 for phi = 0.5, unit innovations
        rng = np.random.default_rng(2)
        n = 10**6
        x = np.empty(n)
        x[0] = rng.standard_normal()
        eps = rng.standard_normal(n)
        for t in range(1, n):
            x[t] = 0.5 * x[t - 1] + eps[t]
        v = spectrum_variance(x)
        assert 3.8 < v < 4.2

    def test_constant_trace(self):
        assert spectrum_variance(np.full(500, 3.3)) == 0.0

    def test_nonfinite_rejected(self):
        x = np.ones(200)
        x[3] = np.nan
        with pytest.raises(ValueError):
            spectrum_variance(x)

    def test_short_trace_rejected(self):
        with pytest.raises(ValueError):
            spectrum_variance(np.ones(50))

    def test_thinned_chain_approaches_plain_variance(self):
        rng = np.random.default_rng(3)
        n = 2 * 10**6
        x = np.empty(n)
        x[0] = 0.0
        eps = rng.standard_normal(n)
        for t in range(1, n):
            x[t] = 0.8 * x[t - 1] + eps[t]
        thinned = x[::50]  # autocorrelation 0.8^50 ~ 1e-5: effectively iid
        ratio = spectrum_variance(thinned) / thinned.var(ddof=1)
        assert 0.9 < ratio < 1.1


class TestInefficiencyReport:
    def _trace(self, n=2000):
        return np.random.default_rng(5).standard_normal(n)

    def test_zero_variance_estimates(self):
        rep = inefficiency_report(self._trace(), 100, [1.0, 1.0, 1.0], [5, 7, 9])
        assert rep.inefficiency_unbiased == 0.0

    def test_reported_product(self):
        # variance 1.4e-7 at mean cost 59860 gives about 8.4e-3
        values = np.array([0.0, 2 * math.sqrt(1.4e-7)])  # sample variance 2.8e-7
        values = values / math.sqrt(2.0)  # now exactly 1.4e-7
        rep = inefficiency_report(self._trace(), 100, values, [59860, 59860])
        assert rep.inefficiency_unbiased == pytest.approx(59860 * 1.4e-7, rel=1e-9)
        assert rep.inefficiency_unbiased == pytest.approx(8.4e-3, rel=0.01)

    def test_two_point_arithmetic(self):
        values = [0.0, 2.0]  # sample variance 2
        rep = inefficiency_report(self._trace(), 100, values, [10, 10])
        assert rep.inefficiency_unbiased == pytest.approx(20.0)

    def test_serial_side_identity(self):
        trace = self._trace(5000)
        rep = inefficiency_report(trace, 500, [0.0, 1.0], [10, 10])
        v = spectrum_variance(trace[500:])
        assert rep.inefficiency_serial == pytest.approx(5000 * v / 4500, rel=1e-12)
        assert rep.ratio == pytest.approx(rep.inefficiency_unbiased / rep.inefficiency_serial)

    def test_seconds_unit_requires_cost(self):
        with pytest.raises(ValueError):
            inefficiency_report(self._trace(), 10, [0.0, 1.0], [1, 1], cost_unit="seconds")
        rep = inefficiency_report(
            self._trace(), 10, [0.0, 1.0], [2.5, 3.5], cost_unit="seconds", serial_cost=100.0
        )
        assert rep.cost_unit == "seconds"
        assert rep.inefficiency_unbiased == pytest.approx(3.0 * 0.5)

    def test_empty_inputs_rejected(self):
        with pytest.raises(ValueError):
            inefficiency_report([], 0, [1.0], [1])
        with pytest.raises(ValueError):
            inefficiency_report(self._trace(), 10, [], [])
