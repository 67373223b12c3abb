"""Markov kernels and their couplings.

Four families, each as a single-chain kernel plus a coupled kernel over a
pair of chains:

* random-walk Metropolis--Hastings on an evaluable log target,
* pseudo-marginal MH, where likelihood evaluations are replaced by
  non-negative unbiased estimates carried in the chain state,
* block pseudo-marginal for factorized likelihoods, refreshing
  per-observation auxiliary variables one block at a time,
* the exchange kernel for densities known up to a parameter-dependent
  normalizing constant, cancelled with a synthetic dataset drawn at the
  proposed parameter.

All couplings follow the same recipe: proposals from a maximal coupling, a
common uniform for the two accept decisions, and shared auxiliary
randomness (likelihood estimate, block proposals, synthetic data) whenever
the proposals coincide.  Equal input states therefore map to equal output
states, so met chains never separate.

Acceptance ratios are computed as sums of log terms throughout; linear-
domain products underflow for long observation records.  All proposals are
symmetric Gaussian random walks, so proposal densities cancel from every
ratio.  Parameters proposed outside the prior support are rejected before
any likelihood estimate is computed.
"""

from __future__ import annotations

import math

import numpy as np

from .coupling import common_uniform_accept, maximal_coupling
from .rng import RngStream

_LOG_2PI = math.log(2.0 * math.pi)


class InvariantViolationError(RuntimeError):
    """Current chain state has zero target density or likelihood estimate."""


def _log_unif(u: float) -> float:
    return math.log(u) if u > 0.0 else -math.inf



# ---------------------------------------------------------------------------
# proposal machinery


class GaussianRandomWalk:
    """Symmetric Gaussian random-walk proposal with fixed (co)variance."""

    __slots__ = ("sd", "chol", "dim", "_log_norm")

    def __init__(self, sd=None, cov=None):
        if (sd is None) == (cov is None):
            raise ValueError("provide exactly one of sd or cov")
        if sd is not None:
            self.sd = np.atleast_1d(np.asarray(sd, dtype=float))
            if np.any(self.sd <= 0):
                raise ValueError("proposal sd must be positive")
            self.chol = None
            self.dim = self.sd.shape[0]
            self._log_norm = -0.5 * self.dim * _LOG_2PI - float(np.sum(np.log(self.sd)))
        else:
            cov = np.asarray(cov, dtype=float)
            self.chol = np.linalg.cholesky(cov)
            self.sd = None
            self.dim = cov.shape[0]
            self._log_norm = -0.5 * self.dim * _LOG_2PI - float(
                np.sum(np.log(np.diag(self.chol)))
            )

    def sample(self, center: np.ndarray, stream: RngStream) -> np.ndarray:
        z = stream.gen.standard_normal(self.dim)
        if self.chol is None:
            return center + self.sd * z
        return center + self.chol @ z

    def log_density(self, x: np.ndarray, center: np.ndarray) -> float:
        d = x - center
        if self.chol is None:
            z = d / self.sd
        else:
            z = np.linalg.solve(self.chol, d)
        return self._log_norm - 0.5 * float(z @ z)

    def at(self, center: np.ndarray) -> "_CenteredProposal":
        return _CenteredProposal(self, center)


class _CenteredProposal:
    """Distribution view of a random walk centered at a fixed point."""

    __slots__ = ("rw", "center")

    def __init__(self, rw: GaussianRandomWalk, center: np.ndarray):
        self.rw = rw
        self.center = center

    def sample(self, stream: RngStream) -> np.ndarray:
        return self.rw.sample(self.center, stream)

    def log_density(self, x) -> float:
        return self.rw.log_density(x, self.center)


# ---------------------------------------------------------------------------
# chain states


class PlainState:
    __slots__ = ("theta", "log_target")

    def __init__(self, theta: np.ndarray, log_target: float):
        self.theta = theta
        self.log_target = log_target


class PmState:
    """Parameter point with the log of its retained likelihood estimate."""

    __slots__ = ("theta", "log_prior", "log_lik_hat")

    def __init__(self, theta: np.ndarray, log_prior: float, log_lik_hat: float):
        self.theta = theta
        self.log_prior = log_prior
        self.log_lik_hat = log_lik_hat


class BlockPmState:
    """Parameter plus per-observation auxiliary blocks and their log-likelihoods."""

    __slots__ = ("theta", "log_prior", "per_obs_log_lik", "aux")

    def __init__(self, theta, log_prior, per_obs_log_lik, aux):
        self.theta = theta
        self.log_prior = log_prior
        self.per_obs_log_lik = per_obs_log_lik
        self.aux = aux


class ExchangeState:
    __slots__ = ("theta", "log_prior")

    def __init__(self, theta: np.ndarray, log_prior: float):
        self.theta = theta
        self.log_prior = log_prior


class StateInit:
    """Initial distribution over chain states: draw theta, then complete the state.

    With ``truncate_to_prior`` the theta draw is rejected and redrawn until it
    falls inside the prior support.
    """

    __slots__ = ("theta_dist", "kernel", "truncate_to_prior", "_max_redraws")

    def __init__(self, theta_dist, kernel, truncate_to_prior=False, max_redraws=10**6):
        self.theta_dist = theta_dist
        self.kernel = kernel
        self.truncate_to_prior = truncate_to_prior
        self._max_redraws = max_redraws

    def sample(self, stream: RngStream):
        theta = np.atleast_1d(np.asarray(self.theta_dist.sample(stream), dtype=float))
        if self.truncate_to_prior:
            for _ in range(self._max_redraws):
                if self.kernel.in_support(theta):
                    break
                theta = np.atleast_1d(np.asarray(self.theta_dist.sample(stream), dtype=float))
            else:
                raise RuntimeError("initial distribution never hit the prior support")
        return self.kernel.initial_state(theta, stream)


# ---------------------------------------------------------------------------
# Metropolis--Hastings


class MhKernel:
    """Random-walk MH on an evaluable log target, with maximal-coupling pairing."""

    def __init__(self, log_target, proposal: GaussianRandomWalk):
        self.log_target = log_target
        self.proposal = proposal

    def in_support(self, theta) -> bool:
        return self.log_target(theta) > -math.inf

    def initial_state(self, theta, stream) -> PlainState:
        return PlainState(theta, self.log_target(theta))

    def step(self, state: PlainState, stream: RngStream) -> PlainState:
        if state.log_target == -math.inf:
            raise InvariantViolationError("target density is zero at the current state")
        prop = self.proposal.sample(state.theta, stream)
        lt = self.log_target(prop)
        u = stream.gen.random()
        if _log_unif(u) < lt - state.log_target:
            return PlainState(prop, lt)
        return state

    def coupled_step(self, s1: PlainState, s2: PlainState, stream: RngStream):
        if s1.log_target == -math.inf or s2.log_target == -math.inf:
            raise InvariantViolationError("target density is zero at the current state")
        draw = maximal_coupling(
            self.proposal.at(s1.theta), self.proposal.at(s2.theta), stream
        )
        lt1 = self.log_target(draw.x)
        lt2 = lt1 if draw.coupled else self.log_target(draw.y)
        acc1, acc2 = common_uniform_accept(
            stream.gen.random(), lt1 - s1.log_target, lt2 - s2.log_target
        )
        out1 = PlainState(draw.x, lt1) if acc1 else s1
        out2 = PlainState(draw.y, lt2) if acc2 else s2
        return out1, out2

    def states_equal(self, s1: PlainState, s2: PlainState) -> bool:
        return np.array_equal(s1.theta, s2.theta)


# ---------------------------------------------------------------------------
# pseudo-marginal MH


class PmKernel:
    """Pseudo-marginal MH: the model supplies a prior log-density and a
    non-negative unbiased likelihood estimator drawn afresh at each proposal.

    The model contract is ``log_prior(theta) -> float`` and
    ``log_lik_hat(theta, stream) -> float`` (-inf allowed for an estimate of
    exactly zero, which auto-rejects the proposal).
    """

    def __init__(self, model, proposal: GaussianRandomWalk):
        self.model = model
        self.proposal = proposal

    def in_support(self, theta) -> bool:
        return self.model.log_prior(theta) > -math.inf

    def initial_state(self, theta, stream) -> PmState:
        lp = self.model.log_prior(theta)
        if lp == -math.inf:
            raise InvariantViolationError("initial parameter outside the prior support")
        return PmState(theta, lp, self.model.log_lik_hat(theta, stream))

    def step(self, state: PmState, stream: RngStream) -> PmState:
        if state.log_lik_hat == -math.inf:
            raise InvariantViolationError("likelihood estimate is zero at the current state")
        prop = self.proposal.sample(state.theta, stream)
        lp = self.model.log_prior(prop)
        # reject outside the prior before spending a likelihood estimate
        ll = self.model.log_lik_hat(prop, stream) if lp > -math.inf else -math.inf
        u = stream.gen.random()
        log_alpha = (ll + lp) - (state.log_lik_hat + state.log_prior)
        if _log_unif(u) < log_alpha:
            return PmState(prop, lp, ll)
        return state

    def coupled_step(self, s1: PmState, s2: PmState, stream: RngStream):
        if s1.log_lik_hat == -math.inf or s2.log_lik_hat == -math.inf:
            raise InvariantViolationError("likelihood estimate is zero at the current state")
        draw = maximal_coupling(
            self.proposal.at(s1.theta), self.proposal.at(s2.theta), stream
        )
        lp1 = self.model.log_prior(draw.x)
        lp2 = lp1 if draw.coupled else self.model.log_prior(draw.y)
        if draw.coupled:
            # a single shared estimate for the shared proposal
            ll1 = ll2 = (
                self.model.log_lik_hat(draw.x, stream) if lp1 > -math.inf else -math.inf
            )
        else:
            ll1 = self.model.log_lik_hat(draw.x, stream) if lp1 > -math.inf else -math.inf
            ll2 = self.model.log_lik_hat(draw.y, stream) if lp2 > -math.inf else -math.inf
        acc1, acc2 = common_uniform_accept(
            stream.gen.random(),
            (ll1 + lp1) - (s1.log_lik_hat + s1.log_prior),
            (ll2 + lp2) - (s2.log_lik_hat + s2.log_prior),
        )
        out1 = PmState(draw.x, lp1, ll1) if acc1 else s1
        out2 = PmState(draw.y, lp2, ll2) if acc2 else s2
        return out1, out2

    def states_equal(self, s1: PmState, s2: PmState) -> bool:
        return s1.log_lik_hat == s2.log_lik_hat and np.array_equal(s1.theta, s2.theta)


# ---------------------------------------------------------------------------
# block pseudo-marginal


class BlockPmKernel:
    """Block pseudo-marginal for likelihoods factorizing over observations.

    The model must satisfy:

    * ``n_obs`` -- number of observations T;
    * ``log_prior(theta) -> float``;
    * ``sample_aux(stream) -> aux`` -- fresh auxiliary blocks for all T
      observations, i.i.d. across blocks, independent of theta;
    * ``per_obs_log_lik(theta, aux) -> array (T,)`` -- a *deterministic*
      function of (theta, aux), so the estimate can be recomputed at a
      proposed theta with the current blocks held fixed.

    One step is a theta update with the acceptance ratio over the product of
    per-observation estimates, followed by an independent accept/reject
    refresh of each auxiliary block.
    """

    def __init__(self, model, proposal: GaussianRandomWalk):
        self.model = model
        self.proposal = proposal

    def in_support(self, theta) -> bool:
        return self.model.log_prior(theta) > -math.inf

    def initial_state(self, theta, stream) -> BlockPmState:
        lp = self.model.log_prior(theta)
        if lp == -math.inf:
            raise InvariantViolationError("initial parameter outside the prior support")
        aux = self.model.sample_aux(stream)
        return BlockPmState(theta, lp, self.model.per_obs_log_lik(theta, aux), aux)

    def _theta_update(self, state, prop, lp, log_u):
        if lp > -math.inf:
            pol = self.model.per_obs_log_lik(prop, state.aux)
            log_alpha = (lp + float(np.sum(pol))) - (
                state.log_prior + float(np.sum(state.per_obs_log_lik))
            )
            if log_u < log_alpha:
                return prop, lp, pol
        return state.theta, state.log_prior, state.per_obs_log_lik

    @staticmethod
    def _block_update(theta_pol, prop_pol, log_us, aux, aux_prop):
        accept = log_us < (prop_pol - theta_pol)
        new_aux = np.where(accept[:, None], aux_prop, aux)
        new_pol = np.where(accept, prop_pol, theta_pol)
        return new_pol, new_aux

    def step(self, state: BlockPmState, stream: RngStream) -> BlockPmState:
        prop = self.proposal.sample(state.theta, stream)
        lp = self.model.log_prior(prop)
        u = stream.gen.random()
        theta, lp_new, pol = self._theta_update(state, prop, lp, _log_unif(u))
        aux_prop = self.model.sample_aux(stream)
        prop_pol = self.model.per_obs_log_lik(theta, aux_prop)
        log_us = np.log(stream.gen.random(self.model.n_obs))
        new_pol, new_aux = self._block_update(pol, prop_pol, log_us, state.aux, aux_prop)
        return BlockPmState(theta, lp_new, new_pol, new_aux)

    def coupled_step(self, s1: BlockPmState, s2: BlockPmState, stream: RngStream):
        draw = maximal_coupling(
            self.proposal.at(s1.theta), self.proposal.at(s2.theta), stream
        )
        lp1 = self.model.log_prior(draw.x)
        lp2 = lp1 if draw.coupled else self.model.log_prior(draw.y)
        log_u = _log_unif(stream.gen.random())
        th1, lp1n, pol1 = self._theta_update(s1, draw.x, lp1, log_u)
        th2, lp2n, pol2 = self._theta_update(s2, draw.y, lp2, log_u)
        # one shared block proposal and one shared uniform per observation
        aux_prop = self.model.sample_aux(stream)
        log_us = np.log(stream.gen.random(self.model.n_obs))
        prop_pol1 = self.model.per_obs_log_lik(th1, aux_prop)
        prop_pol2 = (
            prop_pol1 if np.array_equal(th1, th2) else self.model.per_obs_log_lik(th2, aux_prop)
        )
        new_pol1, new_aux1 = self._block_update(pol1, prop_pol1, log_us, s1.aux, aux_prop)
        new_pol2, new_aux2 = self._block_update(pol2, prop_pol2, log_us, s2.aux, aux_prop)
        return (
            BlockPmState(th1, lp1n, new_pol1, new_aux1),
            BlockPmState(th2, lp2n, new_pol2, new_aux2),
        )

    def states_equal(self, s1: BlockPmState, s2: BlockPmState) -> bool:
        return (
            np.array_equal(s1.theta, s2.theta)
            and np.array_equal(s1.per_obs_log_lik, s2.per_obs_log_lik)
            and np.array_equal(s1.aux, s2.aux)
        )


# ---------------------------------------------------------------------------
# exchange


class ExchangeKernel:
    """Exchange kernel for unnormalized targets with an exact sampler.

    The model supplies ``log_prior(theta)``, ``obs_log_f(theta)`` (the
    unnormalized log-density of the observed data), ``log_f(y, theta)`` for
    synthetic data, and ``sample_exact(theta, stream)``.  The synthetic
    draw at the proposed parameter cancels the intractable normalizing
    constant from the acceptance ratio.
    """

    def __init__(self, model, proposal: GaussianRandomWalk):
        self.model = model
        self.proposal = proposal

    def in_support(self, theta) -> bool:
        return self.model.log_prior(theta) > -math.inf

    def initial_state(self, theta, stream) -> ExchangeState:
        lp = self.model.log_prior(theta)
        if lp == -math.inf:
            raise InvariantViolationError("initial parameter outside the prior support")
        return ExchangeState(theta, lp)

    def _log_alpha(self, state, prop, lp, y_synth):
        m = self.model
        return (
            m.obs_log_f(prop)
            + lp
            + m.log_f(y_synth, state.theta)
            - m.obs_log_f(state.theta)
            - state.log_prior
            - m.log_f(y_synth, prop)
        )

    def step(self, state: ExchangeState, stream: RngStream) -> ExchangeState:
        prop = self.proposal.sample(state.theta, stream)
        lp = self.model.log_prior(prop)
        if lp == -math.inf:
            log_alpha = -math.inf  # rejected before simulating synthetic data
        else:
            y_synth = self.model.sample_exact(prop, stream)
            log_alpha = self._log_alpha(state, prop, lp, y_synth)
        u = stream.gen.random()
        if _log_unif(u) < log_alpha:
            return ExchangeState(prop, lp)
        return state

    def coupled_step(self, s1: ExchangeState, s2: ExchangeState, stream: RngStream):
        draw = maximal_coupling(
            self.proposal.at(s1.theta), self.proposal.at(s2.theta), stream
        )
        lp1 = self.model.log_prior(draw.x)
        lp2 = lp1 if draw.coupled else self.model.log_prior(draw.y)
        if draw.coupled:
            if lp1 > -math.inf:
                y_synth = self.model.sample_exact(draw.x, stream)
                la1 = self._log_alpha(s1, draw.x, lp1, y_synth)
                la2 = self._log_alpha(s2, draw.y, lp2, y_synth)
            else:
                la1 = la2 = -math.inf
        else:
            if lp1 > -math.inf:
                y1 = self.model.sample_exact(draw.x, stream)
                la1 = self._log_alpha(s1, draw.x, lp1, y1)
            else:
                la1 = -math.inf
            if lp2 > -math.inf:
                y2 = self.model.sample_exact(draw.y, stream)
                la2 = self._log_alpha(s2, draw.y, lp2, y2)
            else:
                la2 = -math.inf
        acc1, acc2 = common_uniform_accept(stream.gen.random(), la1, la2)
        out1 = ExchangeState(draw.x, lp1) if acc1 else s1
        out2 = ExchangeState(draw.y, lp2) if acc2 else s2
        return out1, out2

    def states_equal(self, s1: ExchangeState, s2: ExchangeState) -> bool:
        return np.array_equal(s1.theta, s2.theta)
