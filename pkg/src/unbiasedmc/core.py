"""Coupled-chain driver and the time-averaged unbiased estimator.

A pair of chains (Z_n) and (Z_tilde_n) is run so that Z_n and Z_tilde_{n-1}
eventually coincide at the meeting time

    tau = inf{n >= 1 : Z_n = Z_tilde_{n-1}},

after which the chains are identical forever (faithfulness).  The estimator
averages h over steps k..m and adds a weighted sum of coupled differences
that removes the burn-in bias:

    H = (m-k+1)^{-1} sum_{l=k}^{m} h(Z_l)
        + sum_{n=k+1}^{tau-1} min(1, (n-k)/(m-k+1)) (h(Z_n) - h(Z_tilde_{n-1})),

with an empty correction sum whenever tau - 1 < k + 1.  Its expectation is
the stationary mean of h for any 0 <= k <= m.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

DEFAULT_MEETING_CAP = 10**6

_Z95 = 1.959963984540054


class TrajectoryCensoredError(RuntimeError):
    """Raised when an estimator is requested from a censored trajectory."""


@dataclass
class CoupledTrajectory:
    """Record of one coupled run: h-evaluations of both chains plus bookkeeping.

    ``h_first[n] = h(Z_n)`` for n = 0..max(m, tau) and
    ``h_second[n] = h(Z_tilde_n)`` for n = 0..max(m, tau)-1.  Only the
    h-values are stored, not the states themselves; memory stays linear in
    max(m, tau) times the dimension of h.
    """

    k: int
    m: int
    tau: Optional[int]  # None iff censored
    h_first: np.ndarray
    h_second: np.ndarray
    pbar_calls: int
    p_calls: int
    censored: bool
    n_max: int
    states_first: Optional[list] = None  # populated only with record_states
    states_second: Optional[list] = None

    @property
    def kernel_units(self) -> int:
        """Kernel-call cost with one coupled call counting as two units."""
        return 2 * self.pbar_calls + self.p_calls


def run_coupled(
    pair_kernel,
    single_kernel,
    init,
    h: Callable,
    k: int,
    m: int,
    stream,
    n_max: int = DEFAULT_MEETING_CAP,
    record_states: bool = False,
) -> CoupledTrajectory:
    """Run the lag-one coupled pair and record h along both chains.

    Draws Z_0 and Z_tilde_0 independently from ``init``, advances the first
    chain once, then applies the coupled kernel until n = max(m, tau).  Once
    the chains have met only the first chain is advanced (the second is its
    shadow), which is what makes the two-units-per-coupled-call cost
    accounting exact.  If no meeting occurs within ``n_max`` iterations the
    trajectory is returned censored; it carries no estimate.

    Only h-evaluations are stored by default (memory stays small for large
    m); ``record_states`` additionally keeps every chain state, for
    debugging.
    """
    if not (0 <= k <= m):
        raise ValueError(f"need 0 <= k <= m, got k={k}, m={m}")
    z = init.sample(stream)
    zt = init.sample(stream)
    h_first = [h(z)]
    h_second = [h(zt)]
    states_first = [z] if record_states else None
    states_second = [zt] if record_states else None
    z = single_kernel.step(z, stream)
    p_calls = 1
    pbar_calls = 0
    h_first.append(h(z))
    if record_states:
        states_first.append(z)
    tau = 1 if pair_kernel.states_equal(z, zt) else None
    censored = False
    n = 1
    # Alg. loop: while n < max(m, tau), with tau = +inf until the meeting.
    while True:
        if tau is None:
            if n >= n_max:
                censored = True
                break
            z, zt = pair_kernel.coupled_step(z, zt, stream)
            pbar_calls += 1
            h_first.append(h(z))
            h_second.append(h(zt))
            if record_states:
                states_first.append(z)
                states_second.append(zt)
            if pair_kernel.states_equal(z, zt):
                tau = n + 1
        else:
            if n >= max(m, tau):
                break
            z = single_kernel.step(z, stream)
            p_calls += 1
            hz = h(z)
            h_first.append(hz)
            h_second.append(hz)
            if record_states:
                states_first.append(z)
                states_second.append(z)
        n += 1
    hf = np.asarray(h_first, dtype=float)
    hs = np.asarray(h_second, dtype=float)
    if hf.ndim == 1:
        hf = hf[:, None]
        hs = hs[:, None]
    return CoupledTrajectory(
        k=k,
        m=m,
        tau=tau,
        h_first=hf,
        h_second=hs,
        pbar_calls=pbar_calls,
        p_calls=p_calls,
        censored=censored,
        n_max=n_max,
        states_first=states_first,
        states_second=states_second,
    )


def cost(tau: int, m: int) -> int:
    """Kernel-call cost of one estimator: 2(tau-1) + max(1, m-tau+1) units."""
    if tau < 1:
        raise ValueError(f"tau must be >= 1, got {tau}")
    if m < 0:
        raise ValueError(f"m must be >= 0, got {m}")
    return 2 * (tau - 1) + max(1, m - tau + 1)


def estimate_parts(traj: CoupledTrajectory) -> tuple[np.ndarray, np.ndarray]:
    """(ergodic average over k..m, bias-correction term) for one trajectory."""
    if traj.censored:
        raise TrajectoryCensoredError(
            f"no meeting within n_max={traj.n_max}; trajectory carries no estimate"
        )
    k, m, tau = traj.k, traj.m, traj.tau
    mcmc = traj.h_first[k : m + 1].mean(axis=0)
    bc = np.zeros_like(mcmc)
    if tau - 1 >= k + 1:
        ns = np.arange(k + 1, tau)
        weights = np.minimum(1.0, (ns - k) / (m - k + 1.0))
        diffs = traj.h_first[k + 1 : tau] - traj.h_second[k : tau - 1]
        bc = weights @ diffs
    return mcmc, bc


def h_k_m(traj: CoupledTrajectory) -> np.ndarray:
    """The unbiased estimator value for one coupled trajectory."""
    mcmc, bc = estimate_parts(traj)
    return mcmc + bc


@dataclass
class UnbiasedEstimate:
    """One replicate's estimator value with its decomposition and cost."""

    value: np.ndarray
    tau: int
    cost: int
    mcmc_part: np.ndarray
    bc_part: np.ndarray
    replicate_id: int = 0
    wall_clock_seconds: float = 0.0


def make_estimate(
    traj: CoupledTrajectory, replicate_id: int = 0, wall_clock_seconds: float = 0.0
) -> UnbiasedEstimate:
    mcmc, bc = estimate_parts(traj)
    return UnbiasedEstimate(
        value=mcmc + bc,
        tau=traj.tau,
        cost=cost(traj.tau, traj.m),
        mcmc_part=mcmc,
        bc_part=bc,
        replicate_id=replicate_id,
        wall_clock_seconds=wall_clock_seconds,
    )


@dataclass
class Aggregate:
    """Cross-replicate summary of independent unbiased estimates."""

    n: int
    mean: np.ndarray
    variance: np.ndarray
    std_error: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    mean_cost: float
    inefficiency: np.ndarray


def aggregate(estimates: list[UnbiasedEstimate]) -> Aggregate:
    """Mean, sample variance, normal 95% CI, mean cost and inefficiency.

    The inefficiency is (mean cost) x (sample variance), the asymptotic
    variance per unit of compute; it is directly comparable with the serial
    figure produced by the diagnostics layer.
    """
    if len(estimates) < 2:
        raise ValueError("aggregate needs at least 2 estimates")
    values = np.stack([np.atleast_1d(e.value) for e in estimates])
    costs = np.array([e.cost for e in estimates], dtype=float)
    n = values.shape[0]
    mean = values.mean(axis=0)
    variance = values.var(axis=0, ddof=1)
    se = np.sqrt(variance / n)
    mean_cost = float(costs.mean())
    return Aggregate(
        n=n,
        mean=mean,
        variance=variance,
        std_error=se,
        ci_lower=mean - _Z95 * se,
        ci_upper=mean + _Z95 * se,
        mean_cost=mean_cost,
        inefficiency=mean_cost * variance,
    )
