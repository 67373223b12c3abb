"""Meeting-time tail analysis and inefficiency comparison.

Houses the empirical survival function of the meeting time, a deterministic
power-law bound fit on its tail, an autoregressive estimator of the
asymptotic variance of serial chains, and the serial-versus-unbiased
inefficiency report.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


def empirical_survival(taus: Sequence[int], n_max: Optional[int] = None) -> np.ndarray:
    """Empirical tail probabilities of the meeting time.

    Returns an array of rows (n, P(tau > n)) for n = 0..n_max, with the
    estimate #{tau_i > n} / R.  By construction the first entry is
    (0, 1.0) and sum_n P(tau > n) over the full support equals mean(tau).
    """
    taus = np.asarray(taus)
    if taus.size == 0:
        raise ValueError("no meeting times given")
    if np.any(taus < 1):
        raise ValueError("meeting times must be >= 1")
    if n_max is None:
        n_max = int(taus.max())
    ns = np.arange(n_max + 1)
    counts = np.bincount(np.minimum(taus, n_max + 1), minlength=n_max + 2)
    exceed = taus.size - np.cumsum(counts)[: n_max + 1]
    return np.column_stack([ns, exceed / taus.size])


@dataclass
class TailFit:
    """Fitted polynomial bound C n^(-kappa) dominating the survival tail."""

    survival: np.ndarray  # rows (n, P(tau > n)) over the fit window
    fit_C: float
    fit_kappa: float
    n_min: int
    superpolynomial: bool  # decay visibly faster than any power law

    def bound(self, n) -> np.ndarray:
        return self.fit_C * np.asarray(n, dtype=float) ** (-self.fit_kappa)


def _ls_slope(log_n: np.ndarray, log_p: np.ndarray) -> float:
    a = np.column_stack([np.ones_like(log_n), log_n])
    coef, *_ = np.linalg.lstsq(a, log_p, rcond=None)
    return float(coef[1])


def fit_polynomial_bound(survival: np.ndarray, n_min: int) -> TailFit:
    """Least-squares power-law fit of the survival tail, inflated to a bound.

    The slope of log P(tau > n) against log n over the window n >= n_min
    (positive survival only) gives the tail exponent; the constant is then
    raised to the smallest value making C n^(-kappa) an upper bound on the
    whole window.  A split-window slope comparison flags survival that
    decays faster than any polynomial (e.g. geometric tails).
    """
    survival = np.asarray(survival, dtype=float)
    n_min = max(int(n_min), 1)
    mask = (survival[:, 0] >= n_min) & (survival[:, 1] > 0)
    window = survival[mask]
    if window.shape[0] < 5:
        raise ValueError("need at least 5 positive survival points beyond n_min")
    log_n = np.log(window[:, 0])
    log_p = np.log(window[:, 1])
    kappa = -_ls_slope(log_n, log_p)
    c = float(np.max(window[:, 1] * window[:, 0] ** kappa))
    half = window.shape[0] // 2
    superpoly = False
    if half >= 3:
        k1 = -_ls_slope(log_n[:half], log_p[:half])
        k2 = -_ls_slope(log_n[half:], log_p[half:])
        superpoly = k2 > max(1.2 * k1, k1 + 0.5)
    return TailFit(
        survival=window, fit_C=c, fit_kappa=kappa, n_min=n_min, superpolynomial=superpoly
    )


def auto_n_min(taus: Sequence[int]) -> int:
    """Default fit-window start: inside the tail but clear of the body.

    Mirrors tail plots that drop the first decades: use n = 20 when the
    99.9% quantile extends well past it, otherwise a tenth of that quantile.
    """
    q999 = float(np.quantile(np.asarray(taus), 0.999))
    return max(1, min(20, math.ceil(0.1 * q999)))


def spectrum_variance(values: Sequence[float]) -> float:
    """Asymptotic variance of a scalar chain trace via an AR fit.

    Yule-Walker autoregressions of order 0..10*log10(n) are compared by
    AIC; the spectral density at frequency zero of the winner,
    innovation variance / (1 - sum of coefficients)^2, estimates the
    asymptotic variance of the trace mean (times the trace length).
    """
    x = np.asarray(values, dtype=float)
    if x.ndim != 1 or x.size < 100:
        raise ValueError("need a 1-d trace of length >= 100")
    if not np.all(np.isfinite(x)):
        raise ValueError("trace contains non-finite values")
    n = x.size
    scale = float(np.mean(x * x))
    x = x - x.mean()
    c0 = float(x @ x) / n
    if c0 <= 1e-28 * max(1.0, scale):  # constant trace up to rounding
        return 0.0
    order_max = min(n - 1, int(10.0 * math.log10(n)))
    acov = np.empty(order_max + 1)
    acov[0] = c0
    for k in range(1, order_max + 1):
        acov[k] = float(x[:-k] @ x[k:]) / n

    # Levinson-Durbin over all orders, keeping AIC per order
    best_order = 0
    best_aic = n * math.log(c0)
    best = (np.empty(0), c0)
    phi = np.empty(0)
    sigma2 = c0
    for p in range(1, order_max + 1):
        if sigma2 <= 0:
            break
        refl = (acov[p] - (phi @ acov[p - 1 : 0 : -1] if p > 1 else 0.0)) / sigma2
        new_phi = np.empty(p)
        new_phi[: p - 1] = phi - refl * phi[::-1]
        new_phi[p - 1] = refl
        sigma2 = sigma2 * (1.0 - refl * refl)
        phi = new_phi
        if sigma2 <= 0:
            break
        aic = n * math.log(sigma2) + 2.0 * p
        if aic < best_aic:
            best_aic = aic
            best_order = p
            best = (phi.copy(), sigma2)
    phi_best, sigma2_best = best
    # small-sample innovation-variance correction, as in standard AR fitters
    sigma2_best *= n / (n - (best_order + 1))
    denom = 1.0 - float(np.sum(phi_best))
    return sigma2_best / (denom * denom)


@dataclass
class VarianceReport:
    """Serial asymptotic variance and the two inefficiencies side by side."""

    v_as: float
    n_mcmc: int
    n_burnin: int
    inefficiency_serial: float
    inefficiency_unbiased: float
    cost_unit: str

    @property
    def ratio(self) -> float:
        if self.inefficiency_serial == 0.0:
            return math.inf
        return self.inefficiency_unbiased / self.inefficiency_serial


def inefficiency_report(
    trace: Sequence[float],
    n_burnin: int,
    estimate_values: Sequence[float],
    estimate_costs: Sequence[float],
    cost_unit: str = "kernel_calls",
    serial_cost: Optional[float] = None,
) -> VarianceReport:
    """Compare the serial chain and the unbiased replicates per unit compute.

    Serial side: (total serial cost) * v_as / (n_mcmc - n_burnin), with the
    asymptotic variance estimated on the post-burn-in trace.  Unbiased side:
    (mean replicate cost) * (sample variance of the estimates).  Costs are
    measured either in kernel calls (``serial_cost`` defaults to the trace
    length) or in seconds (``serial_cost`` required; replicate costs should
    then be wall-clock times).
    """
    trace = np.asarray(trace, dtype=float)
    values = np.asarray(estimate_values, dtype=float)
    costs = np.asarray(estimate_costs, dtype=float)
    if trace.size == 0 or values.size == 0:
        raise ValueError("both the serial trace and the estimates must be non-empty")
    if cost_unit not in ("kernel_calls", "seconds"):
        raise ValueError(f"unknown cost unit {cost_unit!r}")
    n_mcmc = trace.size
    if not 0 <= n_burnin < n_mcmc:
        raise ValueError("need 0 <= n_burnin < len(trace)")
    v_as = spectrum_variance(trace[n_burnin:])
    if cost_unit == "kernel_calls" and serial_cost is None:
        serial_cost = float(n_mcmc)
    if serial_cost is None:
        raise ValueError("serial_cost is required when cost_unit='seconds'")
    ineff_serial = serial_cost * v_as / (n_mcmc - n_burnin)
    var_unbiased = float(values.var(ddof=1)) if values.size > 1 else 0.0
    ineff_unbiased = float(costs.mean()) * var_unbiased
    return VarianceReport(
        v_as=v_as,
        n_mcmc=n_mcmc,
        n_burnin=n_burnin,
        inefficiency_serial=ineff_serial,
        inefficiency_unbiased=ineff_unbiased,
        cost_unit=cost_unit,
    )
