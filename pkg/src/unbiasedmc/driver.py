"""Config-driven experiment runner.

Replicate r of an experiment is a pure function of (config, seed, r): it
owns the stream ``RngStream(seed, r)`` and nothing else, so the result set
is identical for any worker count and any scheduling.  Workers share
nothing but the result sink, and records are sorted by replicate id before
they are persisted.

Wall-clock behavior is injectable: passing a clock spec replaces real time
with a deterministic counter, which is how the budget logic is unit-tested
and how output files are made bit-reproducible in tests (measured seconds
are otherwise genuinely non-deterministic).
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .config import ConfigError, ExperimentConfig
from .core import cost as cost_formula
from .core import make_estimate, run_coupled
from .dataio import load_series, load_spins
from .kernels import (
    BlockPmKernel,
    ExchangeKernel,
    GaussianRandomWalk,
    MhKernel,
    PmKernel,
    StateInit,
)
from .models import (
    BetaBernoulliModel,
    BinomialSSM,
    CftpFailureError,
    IsingModel,
    LinearGaussianSSM,
    PfLikelihood,
    ToyNoisyNormal,
)
from .rng import MultivariateNormal, RngStream, Uniform

_MODEL_DIM = {"toy": 2, "beta_bernoulli": 1, "lgssm": 2, "binomial_ssm": 2, "ising": 1}


# ---------------------------------------------------------------------------
# clocks


def make_clock(spec) -> Callable[[], float]:
    """Build a clock from a picklable spec.

    ``None`` is the real wall clock; ``("zero",)`` always reads 0 (makes
    timing fields reproducible); ``("calls", dt)`` advances by dt per read,
    so one kernel step equals one time unit in budget tests.
    """
    if spec is None:
        return time.perf_counter
    if spec[0] == "zero":
        return lambda: 0.0
    if spec[0] == "calls":
        dt = float(spec[1])
        counter = [0]

        def tick() -> float:
            counter[0] += 1
            return counter[0] * dt

        return tick
    raise ValueError(f"unknown clock spec {spec!r}")


# ---------------------------------------------------------------------------
# experiment assembly


class _PointMass:
    __slots__ = ("value",)

    def __init__(self, value):
        self.value = np.atleast_1d(np.asarray(value, dtype=float))

    def sample(self, stream):
        return self.value.copy()


@dataclass
class Experiment:
    single: object
    pair: object
    init: object
    h: Callable
    h_dim: int
    model: object


def _h_function(name: str, dim: int):
    if name == "identity":
        return (lambda state: state.theta), dim
    if name == "quad_sum":
        return (lambda state: float(np.sum(state.theta + state.theta**2))), 1
    raise ConfigError(f"unknown h function {name!r}")


def _proposal(cfg: ExperimentConfig, model, dim: int) -> GaussianRandomWalk:
    if cfg.proposal_sd is None:
        sd = model.default_proposal_sd()
    else:
        sd = np.asarray(cfg.proposal_sd, dtype=float)
        if sd.size == 1 and dim > 1:
            sd = np.full(dim, sd[0])
    if sd.shape != (dim,):
        raise ConfigError(f"proposal_sd must have {dim} entries, got {sd.size}")
    return GaussianRandomWalk(sd=sd)


def _theta_init(cfg: ExperimentConfig, model, dim: int):
    name = cfg.init_name
    params = cfg.init_params
    if name == "default":
        return model.default_init()
    if name == "uniform":
        if "lo" not in params or "hi" not in params:
            raise ConfigError("uniform init needs lo and hi")
        return Uniform(np.asarray(params["lo"]), np.asarray(params["hi"]))
    if name == "normal":
        if "mean" not in params or "sd" not in params:
            raise ConfigError("normal init needs mean and sd")
        sd = np.asarray(params["sd"], dtype=float)
        if sd.size == 1 and dim > 1:
            sd = np.full(dim, sd[0])
        return MultivariateNormal(np.asarray(params["mean"]), sd**2)
    if name == "point":
        if "value" not in params:
            raise ConfigError("point init needs value")
        return _PointMass(params["value"])
    raise ConfigError(f"unknown init {name!r}")


def _require_data(cfg: ExperimentConfig) -> str:
    path = cfg.model_params.get("data")
    if not path:
        raise ConfigError(f"model {cfg.model!r} requires a data file ([model] data = path)")
    return str(path)


def build_experiment(cfg: ExperimentConfig) -> Experiment:
    """Construct kernels, initial distribution and test function from a config.

    Raises :class:`ConfigError` for any misconfiguration, before any
    replicate work starts.
    """
    cfg.validate()
    params = cfg.model_params
    dim = _MODEL_DIM[cfg.model]
    if cfg.model == "toy":
        mu = np.asarray(params.get("mu", (1.0, 2.0)), dtype=float)
        model = ToyNoisyNormal(mu=mu, sigma_noise=float(params.get("sigma", 1.0)))
        dim = mu.shape[0]
        exact_target = model.log_density_exact
    elif cfg.model == "beta_bernoulli":
        y = load_series(_require_data(cfg)).astype(int)
        model = BetaBernoulliModel(
            y,
            alpha=float(params.get("alpha", 1.0)),
            eps=float(params.get("eps", 0.125)),
            n_particles=int(params.get("particles", 10)),
            beta_lo=float(params.get("beta_lo", 0.1)),
            beta_hi=float(params.get("beta_hi", 10.0)),
        )

        def exact_target(theta, _model=model):
            lp = _model.log_prior(theta)
            return lp if lp == -math.inf else lp + _model.exact_log_marginal(float(theta[0]))

    elif cfg.model == "lgssm":
        ssm = LinearGaussianSSM(load_series(_require_data(cfg)))
        model = PfLikelihood(ssm, int(params.get("particles", 100)))
        exact_target = ssm.log_target_exact
    elif cfg.model == "binomial_ssm":
        ssm = BinomialSSM(
            load_series(_require_data(cfg)).astype(int),
            m_trials=int(params.get("m_trials", 50)),
        )
        model = PfLikelihood(ssm, int(params.get("particles", 128)))
        exact_target = None
    else:  # ising
        model = IsingModel(load_spins(_require_data(cfg)))
        exact_target = None

    try:
        proposal = _proposal(cfg, model, dim)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    if cfg.kernel == "mh":
        kernel = MhKernel(exact_target, proposal)
    elif cfg.kernel == "pm":
        kernel = PmKernel(model, proposal)
    elif cfg.kernel == "block_pm":
        kernel = BlockPmKernel(model, proposal)
    else:
        kernel = ExchangeKernel(model, proposal)

    init = StateInit(_theta_init(cfg, model, dim), kernel, cfg.truncate_to_prior)
    h, h_dim = _h_function(cfg.h, dim)
    return Experiment(single=kernel, pair=kernel, init=init, h=h, h_dim=h_dim, model=model)


# ---------------------------------------------------------------------------
# replicate records


@dataclass
class ReplicateRecord:
    replicate_id: int
    tau: Optional[int]
    cost: Optional[int]
    h_values: Optional[np.ndarray]
    wall_clock: float
    censored: bool
    worker_id: int = 0
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return not self.censored and self.error is None


def _run_one(
    exp: Experiment,
    cfg: ExperimentConfig,
    replicate_id: int,
    clock: Callable[[], float],
    record_h: bool,
    worker_id: int,
) -> ReplicateRecord:
    stream = RngStream(cfg.seed, replicate_id)
    t0 = clock()
    try:
        if record_h:
            traj = run_coupled(
                exp.pair, exp.single, exp.init, exp.h, cfg.k, cfg.m, stream, cfg.n_max
            )
            if traj.censored:
                return ReplicateRecord(
                    replicate_id, None, None, None, clock() - t0, True, worker_id
                )
            est = make_estimate(traj, replicate_id=replicate_id)
            return ReplicateRecord(
                replicate_id,
                traj.tau,
                est.cost,
                est.value,
                clock() - t0,
                False,
                worker_id,
            )
        tau = _run_meeting(exp, stream, cfg.n_max)
        if tau is None:
            return ReplicateRecord(replicate_id, None, None, None, clock() - t0, True, worker_id)
        return ReplicateRecord(
            replicate_id,
            tau,
            cost_formula(tau, cfg.m),
            None,
            clock() - t0,
            False,
            worker_id,
        )
    except CftpFailureError as exc:
        return ReplicateRecord(
            replicate_id, None, None, None, clock() - t0, True, worker_id, error=str(exc)
        )


def _run_meeting(exp: Experiment, stream: RngStream, n_max: int, budget_check=None):
    """Coupled pair run to the meeting only; returns tau, None if censored.

    ``budget_check`` is polled once per iteration; if it returns True the
    run is abandoned and the string ``"interrupted"`` is returned.
    """
    z = exp.init.sample(stream)
    zt = exp.init.sample(stream)
    z = exp.single.step(z, stream)
    if exp.pair.states_equal(z, zt):
        return 1
    n = 1
    while True:
        if n >= n_max:
            return None
        if budget_check is not None and budget_check():
            return "interrupted"
        z, zt = exp.pair.coupled_step(z, zt, stream)
        if exp.pair.states_equal(z, zt):
            return n + 1
        n += 1


def _chunk_task(args):
    cfg, ids, record_h, clock_spec, worker_id = args
    exp = build_experiment(cfg)
    clock = make_clock(clock_spec)
    return [_run_one(exp, cfg, i, clock, record_h, worker_id) for i in ids]


def run_replicates(
    cfg: ExperimentConfig,
    clock_spec=None,
    experiment: Optional[Experiment] = None,
    on_record: Optional[Callable[[ReplicateRecord], None]] = None,
    skip_ids=frozenset(),
    record_h: bool = True,
) -> list[ReplicateRecord]:
    """Produce one record per replicate id; output independent of worker count.

    Replicate r uses ``RngStream(cfg.seed, r)``.  With ``cfg.workers > 1``
    the ids are distributed over a process pool; the records returned (and
    fed to ``on_record``) are identical to the single-worker run up to
    wall-clock fields and arrival order, and are sorted by replicate id.
    """
    if cfg.replicates is None:
        raise ConfigError("run_replicates needs a replicate count (use budget mode otherwise)")
    ids = [r for r in range(cfg.replicates) if r not in skip_ids]
    records: list[ReplicateRecord] = []
    if cfg.workers == 1 or len(ids) <= 1:
        exp = experiment if experiment is not None else build_experiment(cfg)
        clock = make_clock(clock_spec)
        for r in ids:
            rec = _run_one(exp, cfg, r, clock, record_h, worker_id=0)
            records.append(rec)
            if on_record is not None:
                on_record(rec)
    else:
        build_experiment(cfg)  # reject misconfiguration before spawning workers
        n_chunks = min(len(ids), cfg.workers * 4)
        chunks = [list(c) for c in np.array_split(ids, n_chunks)]
        tasks = [
            (cfg, chunk, record_h, clock_spec, i % cfg.workers)
            for i, chunk in enumerate(chunks)
            if chunk
        ]
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            for chunk_records in pool.map(_chunk_task, tasks):
                for rec in chunk_records:
                    records.append(rec)
                    if on_record is not None:
                        on_record(rec)
    records.sort(key=lambda r: r.replicate_id)
    return records


# ---------------------------------------------------------------------------
# budget mode (meeting times under a wall-clock budget)


@dataclass
class WorkerSummary:
    worker_id: int
    n_completed: int
    discarded_seconds: float
    elapsed_seconds: float


def _budget_worker(args):
    cfg, worker_id, clock_spec, max_per_worker = args
    exp = build_experiment(cfg)
    return _budget_worker_loop(exp, cfg, worker_id, make_clock(clock_spec), max_per_worker)


def _budget_worker_loop(exp, cfg, worker_id, clock, max_per_worker=None):
    """One processor's replicate production under the time budget.

    Completed meetings are recorded until the budget expires.  If the budget
    expires with none completed, the in-flight replicate runs to completion
    (so every worker contributes at least one); otherwise the in-flight
    replicate is interrupted and only its spent time is reported.  Averages
    of functions of tau over each worker's records stay unbiased under this
    rule.
    """
    budget = cfg.budget_seconds
    t0 = clock()
    records: list[ReplicateRecord] = []
    discarded = 0.0
    j = 0
    while True:
        rep_id = (worker_id << 32) + j
        stream = RngStream(cfg.seed, rep_id)
        t_rep = clock()
        # the clock is polled once per iteration either way; expiry only
        # interrupts once this worker has completed at least one replicate
        interruptible = bool(records)

        def check(_interruptible=interruptible):
            return clock() - t0 >= budget and _interruptible

        try:
            outcome = _run_meeting(exp, stream, cfg.n_max, budget_check=check)
        except CftpFailureError as exc:
            records.append(
                ReplicateRecord(
                    rep_id, None, None, None, clock() - t_rep, True, worker_id, str(exc)
                )
            )
            break
        j += 1
        if outcome == "interrupted":
            discarded = clock() - t_rep
            break
        if outcome is None:  # censored: counts as produced, flagged
            records.append(
                ReplicateRecord(rep_id, None, None, None, clock() - t_rep, True, worker_id)
            )
            break
        records.append(
            ReplicateRecord(
                rep_id,
                outcome,
                cost_formula(outcome, cfg.m),
                None,
                clock() - t_rep,
                False,
                worker_id,
            )
        )
        if clock() - t0 >= budget:
            break
        if max_per_worker is not None and len(records) >= max_per_worker:
            break
    return records, WorkerSummary(worker_id, len(records), discarded, clock() - t0)


def run_budgeted_meetings(
    cfg: ExperimentConfig,
    clock_spec=None,
    experiment: Optional[Experiment] = None,
    max_per_worker: Optional[int] = None,
):
    """Meeting times from ``cfg.workers`` processors under a shared time budget.

    Returns (records, per-worker summaries).  Deterministic clock specs run
    the workers sequentially in process (that path is what the fake-clock
    tests drive); the real-clock path uses a process pool.
    """
    if cfg.budget_seconds is None:
        raise ConfigError("run_budgeted_meetings needs budget_seconds")
    all_records: list[ReplicateRecord] = []
    summaries: list[WorkerSummary] = []
    if clock_spec is not None or cfg.workers == 1 or experiment is not None:
        exp = experiment if experiment is not None else build_experiment(cfg)
        for w in range(cfg.workers):
            recs, summary = _budget_worker_loop(
                exp, cfg, w, make_clock(clock_spec), max_per_worker
            )
            all_records.extend(recs)
            summaries.append(summary)
    else:
        build_experiment(cfg)
        tasks = [(cfg, w, clock_spec, max_per_worker) for w in range(cfg.workers)]
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            for recs, summary in pool.map(_budget_worker, tasks):
                all_records.extend(recs)
                summaries.append(summary)
    all_records.sort(key=lambda r: r.replicate_id)
    return all_records, summaries


# ---------------------------------------------------------------------------
# serial chain (for inefficiency comparisons)


def run_serial(
    cfg: ExperimentConfig,
    n_iterations: int,
    stream_id: int = 0,
    experiment: Optional[Experiment] = None,
    clock_spec=None,
):
    """A single chain of the configured kernel; returns (h trace, seconds)."""
    exp = experiment if experiment is not None else build_experiment(cfg)
    clock = make_clock(clock_spec)
    stream = RngStream(cfg.seed, stream_id)
    t0 = clock()
    state = exp.init.sample(stream)
    trace = np.empty((n_iterations, exp.h_dim))
    for n in range(n_iterations):
        state = exp.single.step(state, stream)
        trace[n] = exp.h(state)
    return trace, clock() - t0
