"""Square-lattice Ising model with perfect sampling via coupling from the past.

Spins y_i in {-1,+1} on an L x L grid with free boundaries; the unnormalized
density is exp(beta * sum_{i~j} y_i y_j), each undirected neighbor pair
counted once.  The prior keeps beta below the infinite-lattice critical
value beta_c = log(1 + sqrt(2)) / 2.

Exact draws use the monotone sandwich construction: all-plus and all-minus
initial configurations are evolved from time -T to 0 by heat-bath sweeps
driven by shared uniforms, doubling T until the two configurations coalesce.
Uniform blocks are cached per time index, so doublings reuse the randomness
already attached to more recent times and the returned sample does not
depend on how the start times were scheduled.  Single-site heat-bath
updates are monotone in the configuration, hence coalescence of the two
extreme chains implies coalescence from every initial condition.
"""

from __future__ import annotations

import math

import numpy as np

from ..rng import RngStream, Uniform

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    def njit(*args, **kwargs):
        def wrap(f):
            return f

        return wrap


BETA_CRITICAL = 0.5 * math.log(1.0 + math.sqrt(2.0))

DEFAULT_SWEEP_CAP = 2**24


class CftpFailureError(RuntimeError):
    """Coalescence not reached within the sweep cap."""


def suff_stat(spins: np.ndarray) -> int:
    """Sum of products over undirected nearest-neighbor pairs, free boundary."""
    s = np.asarray(spins)
    horiz = np.sum(s[:, :-1] * s[:, 1:], dtype=np.int64)
    vert = np.sum(s[:-1, :] * s[1:, :], dtype=np.int64)
    return int(horiz + vert)


def unnorm_log_density(spins: np.ndarray, beta: float) -> float:
    return beta * suff_stat(spins)


@njit(cache=True)
def _sandwich_sweeps(upper, lower, u_blocks, two_beta):
    """Raster heat-bath sweeps of the two extreme chains with shared uniforms."""
    n_sweeps = u_blocks.shape[0]
    L = upper.shape[0]
    for t in range(n_sweeps):
        for i in range(L):
            for j in range(L):
                hu = 0.0
                hl = 0.0
                if i > 0:
                    hu += upper[i - 1, j]
                    hl += lower[i - 1, j]
                if i + 1 < L:
                    hu += upper[i + 1, j]
                    hl += lower[i + 1, j]
                if j > 0:
                    hu += upper[i, j - 1]
                    hl += lower[i, j - 1]
                if j + 1 < L:
                    hu += upper[i, j + 1]
                    hl += lower[i, j + 1]
                u = u_blocks[t, i, j]
                upper[i, j] = 1 if u < 1.0 / (1.0 + math.exp(-two_beta * hu)) else -1
                if hl == hu:
                    lower[i, j] = upper[i, j]
                else:
                    lower[i, j] = 1 if u < 1.0 / (1.0 + math.exp(-two_beta * hl)) else -1


def ising_cftp_sample(
    beta: float,
    L: int,
    stream: RngStream,
    t_start: int = 2,
    sweep_cap: int = DEFAULT_SWEEP_CAP,
) -> np.ndarray:
    """Exact draw from the Ising law at inverse temperature ``beta``.

    Valid for any beta >= 0 (monotone dynamics); raises
    :class:`CftpFailureError` if the doubling reaches ``sweep_cap`` sweeps
    into the past without coalescing.
    """
    if beta < 0:
        raise ValueError("beta must be >= 0")
    if L < 1:
        raise ValueError("L must be >= 1")
    blocks: list[np.ndarray] = []  # blocks[j] drives the sweep at time -(j+1)
    n_back = int(t_start)
    while True:
        if n_back > sweep_cap:
            raise CftpFailureError(
                f"no coalescence within {sweep_cap} sweeps at beta={beta}, L={L}"
            )
        while len(blocks) < n_back:
            blocks.append(stream.gen.random((L, L)))
        u_blocks = np.stack(blocks[n_back - 1 :: -1])  # oldest time first
        upper = np.ones((L, L), dtype=np.int8)
        lower = -np.ones((L, L), dtype=np.int8)
        _sandwich_sweeps(upper, lower, u_blocks, 2.0 * beta)
        if np.array_equal(upper, lower):
            return upper
        n_back *= 2


class IsingModel:
    """Exchange-kernel model view of the Ising law, data held fixed."""

    def __init__(self, spins: np.ndarray, sweep_cap: int = DEFAULT_SWEEP_CAP):
        spins = np.asarray(spins)
        if spins.ndim != 2 or spins.shape[0] != spins.shape[1]:
            raise ValueError("spins must be a square grid")
        if not np.all(np.abs(spins) == 1):
            raise ValueError("spins must be +-1")
        self.spins = spins.astype(np.int8)
        self.L = spins.shape[0]
        self.s_obs = suff_stat(self.spins)
        self.sweep_cap = sweep_cap
        self._log_prior_const = -math.log(BETA_CRITICAL)

    def log_prior(self, theta) -> float:
        b = float(theta[0])
        if 0.0 <= b <= BETA_CRITICAL:
            return self._log_prior_const
        return -math.inf

    def obs_log_f(self, theta) -> float:
        return float(theta[0]) * self.s_obs

    def log_f(self, y, theta) -> float:
        return float(theta[0]) * suff_stat(y)

    def sample_exact(self, theta, stream: RngStream) -> np.ndarray:
        return ising_cftp_sample(float(theta[0]), self.L, stream, sweep_cap=self.sweep_cap)

    def default_init(self) -> Uniform:
        return Uniform(np.array([0.0]), np.array([BETA_CRITICAL]))

    def default_proposal_sd(self) -> np.ndarray:
        return np.array([0.1])


def enumerate_suff_stats(L: int) -> np.ndarray:
    """Sufficient statistic of every spin configuration on the L x L grid.

    Intended for small lattices (used by exactness checks); the output has
    2^(L*L) entries.
    """
    n = L * L
    if n > 20:
        raise ValueError("enumeration limited to L*L <= 20 sites")
    codes = np.arange(2**n, dtype=np.int64)
    bits = (codes[:, None] >> np.arange(n)) & 1
    spins = (2 * bits - 1).reshape(-1, L, L)
    horiz = np.sum(spins[:, :, :-1] * spins[:, :, 1:], axis=(1, 2))
    vert = np.sum(spins[:, :-1, :] * spins[:, 1:, :], axis=(1, 2))
    return horiz + vert
