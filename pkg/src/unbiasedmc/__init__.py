"""Unbiased estimation of posterior expectations from coupled MCMC chains.

Pairs of lag-one coupled chains are run until they meet; a time-averaged
value plus a bias-correction term gives a finite-time unbiased estimator of
the stationary expectation, which independent replicates turn into
confidence intervals.  Kernels cover plain Metropolis--Hastings and the
intractable-likelihood samplers: pseudo-marginal, block pseudo-marginal,
and exchange.
"""

from .core import (
    Aggregate,
    CoupledTrajectory,
    TrajectoryCensoredError,
    UnbiasedEstimate,
    aggregate,
    cost,
    estimate_parts,
    h_k_m,
    make_estimate,
    run_coupled,
)
from .coupling import CoupledDraw, common_uniform_accept, maximal_coupling
from .rng import RngStream

__version__ = "0.1.0"
