"""Acceptance suite: one test per release criterion, at stated tolerances.

Each test prints a PASS/FAIL line (visible with ``pytest -s``).  Paper-scale
cluster experiments are represented by scaled-down quantitative checks with
explicit statistical tolerances; every expected value is computed here from
an independent oracle (closed forms, quadrature, enumeration, Kalman).
"""

import hashlib
import math

import numpy as np
import pytest

from unbiasedmc.config import ExperimentConfig
from unbiasedmc.core import aggregate, cost, h_k_m, make_estimate, run_coupled
from unbiasedmc.diagnostics import auto_n_min, empirical_survival, fit_polynomial_bound, spectrum_variance
from unbiasedmc.driver import Experiment, run_replicates, run_serial
from unbiasedmc.kernels import (
    BlockPmKernel,
    ExchangeKernel,
    GaussianRandomWalk,
    MhKernel,
    PmKernel,
    StateInit,
)
from unbiasedmc.models import (
    BETA_CRITICAL,
    BetaBernoulliModel,
    IsingModel,
    LinearGaussianSSM,
    PfLikelihood,
    ToyNoisyNormal,
    bootstrap_pf_log_lik,
    enumerate_suff_stats,
    ising_cftp_sample,
    kalman_log_lik,
    simulate_lgssm,
    suff_stat,
)
from unbiasedmc.rng import RngStream


def _report(name: str, ok: bool, detail: str = ""):
    print(f"[acceptance] {name}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, f"{name}: {detail}"


def _cfg(**kw) -> ExperimentConfig:
    base = dict(model="toy", kernel="pm", replicates=10, k=0, m=0, seed=1, workers=1)
    base.update(kw)
    return ExperimentConfig(**base)


def _toy_experiment(sigma: float) -> Experiment:
    model = ToyNoisyNormal(sigma_noise=sigma)
    kern = PmKernel(model, GaussianRandomWalk(sd=np.ones(2)))
    init = StateInit(model.default_init(), kern)
    return Experiment(kern, kern, init, lambda s: s.theta, 2, model)


# -- 1 -------------------------------------------------------------------------


def test_01_toy_unbiasedness():
    """Noisy-normal target: replicate mean within 4 SE of (1, 2) for each sigma."""
    details = []
    ok = True
    for sigma in (0.0, 0.5, 1.0):
        cfg = _cfg(replicates=10**4, k=50, m=500, seed=101)
        records = run_replicates(cfg, experiment=_toy_experiment(sigma))
        values = np.stack([r.h_values for r in records if r.ok])
        mean = values.mean(axis=0)
        se = values.std(axis=0, ddof=1) / math.sqrt(values.shape[0])
        err = np.abs(mean - np.array([1.0, 2.0]))
        ok = ok and bool(np.all(err < 4 * se))
        details.append(f"sigma={sigma}: mean={mean.round(4)}, err/se={(err / se).round(2)}")
    _report("toy unbiasedness (4 SE)", ok, "; ".join(details))


# -- 2 -------------------------------------------------------------------------


def test_02_mh_reduction_bitwise():
    """Zero-noise pseudo-marginal trajectories are bit-identical to plain MH."""
    model = ToyNoisyNormal(sigma_noise=0.0)
    pm = PmKernel(model, GaussianRandomWalk(sd=np.ones(2)))
    mh = MhKernel(model.log_density_exact, GaussianRandomWalk(sd=np.ones(2)))
    init_pm = StateInit(model.default_init(), pm)
    init_mh = StateInit(model.default_init(), mh)
    h = lambda s: s.theta
    same = True
    for r in range(200):
        t_pm = run_coupled(pm, pm, init_pm, h, 10, 60, RngStream(202, r))
        t_mh = run_coupled(mh, mh, init_mh, h, 10, 60, RngStream(202, r))
        same = (
            same
            and t_pm.tau == t_mh.tau
            and np.array_equal(t_pm.h_first, t_mh.h_first)
            and np.array_equal(t_pm.h_second, t_mh.h_second)
        )
    _report("exact-estimator reduction (bit-identical)", same, "200 coupled trajectories")


# -- 3 -------------------------------------------------------------------------


def test_03_tail_ordering_in_sigma():
    """Noisier estimators give heavier meeting-time tails."""
    taus = {}
    for sigma in (0.0, 1.0, 2.0):
        cfg = _cfg(replicates=10**4, seed=303)
        records = run_replicates(cfg, experiment=_toy_experiment(sigma), record_h=False)
        taus[sigma] = np.array([r.tau for r in records if r.ok])
        assert all(r.ok for r in records)
    n_star = int(np.quantile(taus[0.0], 0.90))
    survival = {s: float(np.mean(taus[s] > n_star)) for s in taus}
    ok = survival[0.0] < survival[1.0] < survival[2.0]
    _report(
        "tail ordering in sigma",
        ok,
        f"n*={n_star}, P(tau>n*): " + ", ".join(f"{s}: {p:.4f}" for s, p in survival.items()),
    )


# -- 4 -------------------------------------------------------------------------


def _bb_posterior_mean_quadrature(model: BetaBernoulliModel) -> float:
    t1 = int(model.y.sum())
    t0 = model.n_obs - t1
    grid = np.linspace(model.beta_lo, model.beta_hi, 200001)
    log_l = t1 * math.log(model.alpha) + t0 * np.log(grid) - model.n_obs * np.log(
        model.alpha + grid
    )
    w = np.exp(log_l - log_l.max())
    return float(np.trapezoid(grid * w, grid) / np.trapezoid(w, grid))


def test_04_beta_bernoulli_ground_truth():
    """Unbiased estimates recover the quadrature posterior mean; tail index below 9."""
    y = BetaBernoulliModel.simulate(1.0, 2.0, 100, RngStream(404, 0))
    model = BetaBernoulliModel(y, alpha=1.0, eps=0.125, n_particles=10)
    want = _bb_posterior_mean_quadrature(model)
    kern = PmKernel(model, GaussianRandomWalk(sd=np.array([2.0])))
    init = StateInit(model.default_init(), kern)
    exp = Experiment(kern, kern, init, lambda s: s.theta, 1, model)
    cfg = _cfg(replicates=5000, k=50, m=500, seed=404)
    records = run_replicates(cfg, experiment=exp)
    values = np.array([r.h_values[0] for r in records if r.ok])
    mean = values.mean()
    se = values.std(ddof=1) / math.sqrt(values.size)
    mean_ok = abs(mean - want) < 4 * se

    taus = np.array([r.tau for r in records if r.ok])
    fit = fit_polynomial_bound(empirical_survival(taus), auto_n_min(taus))
    kappa_ok = fit.fit_kappa < 9.0
    _report(
        "beta-bernoulli ground truth",
        mean_ok and kappa_ok,
        f"mean={mean:.4f} vs quadrature {want:.4f} (se={se:.4f}); kappa'={fit.fit_kappa:.2f} < 9",
    )


# -- 5 -------------------------------------------------------------------------


def test_05_particle_filter_unbiasedness():
    """exp(PF log-lik - Kalman log-lik) has unit mean for N in {32, 128}."""
    _, y = simulate_lgssm(0.5, 1.0, 10, RngStream(505, 0))
    ssm = LinearGaussianSSM(y)
    theta = np.array([0.5, 1.0])
    exact = kalman_log_lik(0.5, 1.0, y)
    ok = True
    details = []
    for n_particles in (32, 128):
        stream = RngStream(505, n_particles)
        ratios = np.exp(
            [
                bootstrap_pf_log_lik(ssm, theta, n_particles, stream) - exact
                for _ in range(10**4)
            ]
        )
        se = ratios.std(ddof=1) / math.sqrt(ratios.size)
        dev = abs(ratios.mean() - 1.0)
        ok = ok and dev < 3 * se
        details.append(f"N={n_particles}: mean={ratios.mean():.4f} (3se={3 * se:.4f})")
    _report("particle filter unbiasedness", ok, "; ".join(details))


# -- 6 -------------------------------------------------------------------------


def test_06_meeting_times_decrease_with_particles():
    """90th-percentile meeting time non-increasing in the particle count."""
    _, y = simulate_lgssm(0.5, 1.0, 50, RngStream(606, 0))
    ssm = LinearGaussianSSM(y)
    q90 = {}
    for n_particles in (25, 50, 100):
        model = PfLikelihood(ssm, n_particles)
        kern = PmKernel(model, GaussianRandomWalk(sd=np.array([0.2, 0.2])))
        init = StateInit(ssm.default_init(), kern)
        exp = Experiment(kern, kern, init, lambda s: s.theta, 2, model)
        cfg = _cfg(replicates=500, seed=606, n_max=10**5)
        records = run_replicates(cfg, experiment=exp, record_h=False)
        assert all(r.ok for r in records)
        q90[n_particles] = float(np.quantile([r.tau for r in records], 0.90))
    ok = q90[25] >= q90[50] >= q90[100]
    _report(
        "meeting times decrease with N",
        ok,
        "q90: " + ", ".join(f"N={n}: {q:.0f}" for n, q in q90.items()),
    )


# -- 7 -------------------------------------------------------------------------


def test_07_cftp_exactness():
    """Perfect draws match the 512-state enumeration; flat case has zero moments."""
    L, beta, n = 3, 0.3, 10**5
    all_stats = enumerate_suff_stats(L)
    values = np.unique(all_stats)
    weights = np.array([np.exp(beta * all_stats[all_stats == v]).sum() for v in values])
    probs = weights / weights.sum()
    stream = RngStream(707, 0)
    draws = np.array([suff_stat(ising_cftp_sample(beta, L, stream)) for _ in range(n)])
    observed = np.array([(draws == v).sum() for v in values])
    expected = probs * n
    keep = expected >= 5
    chi2 = (((observed - expected) ** 2 / expected)[keep]).sum()
    from scipy.stats import chi2 as chi2_dist

    p_value = float(chi2_dist.sf(chi2, int(keep.sum()) - 1))

    stream0 = RngStream(707, 1)
    mags = np.array([ising_cftp_sample(0.0, L, stream0).mean() for _ in range(10**4)])
    mag_se = 1.0 / math.sqrt(9 * mags.size)  # iid +-1 spins: site variance 1
    mag_ok = abs(mags.mean()) < 3 * mag_se
    ok = p_value > 1e-4 and mag_ok
    _report(
        "perfect sampling exactness",
        ok,
        f"chi2 p={p_value:.3f} (dof={int(keep.sum()) - 1}); beta=0 magnetization "
        f"{mags.mean():.5f} (3se={3 * mag_se:.5f})",
    )



# -- 8 -------------------------------------------------------------------------


@pytest.fixture(scope="module")
def ising_setup():
    L = 4
    data = ising_cftp_sample(0.25, L, RngStream(808, 0))
    model = IsingModel(data)
    # exact posterior on [0, beta_c] via the enumerated partition function
    stats = enumerate_suff_stats(L)
    values, counts = np.unique(stats, return_counts=True)
    grid = np.linspace(0.0, BETA_CRITICAL, 8001)
    log_z = np.array(
        [math.log(np.sum(counts * np.exp(b * values.astype(float)))) for b in grid]
    )
    log_post = grid * model.s_obs - log_z
    dens = np.exp(log_post - log_post.max())
    dens /= np.trapezoid(dens, grid)
    mean = float(np.trapezoid(grid * dens, grid))
    return model, grid, dens, mean


def _bin_probabilities(grid, dens, edges):
    cdf = np.concatenate([[0.0], np.cumsum((dens[1:] + dens[:-1]) / 2 * np.diff(grid))])
    cdf /= cdf[-1]
    idx = np.searchsorted(grid, edges, side="left").clip(0, grid.size - 1)
    return np.diff(cdf[idx])


def test_08_exchange_correctness(ising_setup):
    """Serial exchange matches the enumerated posterior; coupled estimate unbiased."""
    model, grid, dens, want_mean = ising_setup
    kern = ExchangeKernel(model, GaussianRandomWalk(sd=np.array([0.1])))
    init = StateInit(model.default_init(), kern)
    exp = Experiment(kern, kern, init, lambda s: s.theta, 1, model)

    cfg = _cfg(model="ising", kernel="exchange", replicates=1, seed=808)
    trace, _ = run_serial(cfg, 10**6, experiment=exp, clock_spec=("zero",))
    edges = np.linspace(0.0, BETA_CRITICAL, 51)
    hist, _ = np.histogram(trace[:, 0], bins=edges)
    p_hat = hist / hist.sum()
    p_exact = _bin_probabilities(grid, dens, edges)
    tv = 0.5 * float(np.abs(p_hat - p_exact).sum())
    tv_ok = tv < 0.02

    cfg2 = _cfg(model="ising", kernel="exchange", replicates=2000, k=100, m=1000, seed=809)
    records = run_replicates(cfg2, experiment=exp)
    values = np.array([r.h_values[0] for r in records if r.ok])
    se = values.std(ddof=1) / math.sqrt(values.size)
    mean_ok = abs(values.mean() - want_mean) < 4 * se
    _report(
        "exchange correctness",
        tv_ok and mean_ok,
        f"TV={tv:.4f} < 0.02; E[beta|y]={values.mean():.5f} vs oracle {want_mean:.5f} "
        f"(se={se:.5f})",
    )


# -- 9 -------------------------------------------------------------------------


def test_09_estimator_identity_suite():
    """Decomposition, early-meeting, constant-h and cost identities, all to 1e-12."""
    exp = _toy_experiment(0.5)
    exp_const = Experiment(exp.single, exp.pair, exp.init, lambda s: 1.25, 1, exp.model)
    ok = True
    details = []
    for r in range(300):
        k, m = (r % 7), (r % 7) + (r % 23)
        traj = run_coupled(exp.pair, exp.single, exp.init, exp.h, k, m, RngStream(909, r))
        est = make_estimate(traj)
        if not np.all(np.abs(est.value - (est.mcmc_part + est.bc_part)) <= 1e-12):
            ok = False
            details.append(f"decomposition r={r}")
        if traj.tau <= k + 1:
            erg = traj.h_first[k : m + 1].mean(axis=0)
            if not np.all(np.abs(est.value - erg) <= 1e-12):
                ok = False
                details.append(f"ergodic-average r={r}")
        if traj.kernel_units != cost(traj.tau, m):
            ok = False
            details.append(f"cost r={r}")
        traj_c = run_coupled(
            exp_const.pair, exp_const.single, exp_const.init, exp_const.h, k, m,
            RngStream(910, r),
        )
        if abs(h_k_m(traj_c)[0] - 1.25) > 1e-12:
            ok = False
            details.append(f"constant-h r={r}")
    _report("estimator identity suite", ok, details[0] if details else "300 trajectories")


# -- 10 ------------------------------------------------------------------------


def test_10_faithfulness_suite():
    """Equal states map to equal states (1e4 draws/family); met chains stay met."""
    families = {}

    model_toy = ToyNoisyNormal(sigma_noise=1.0)
    pm = PmKernel(model_toy, GaussianRandomWalk(sd=np.ones(2)))
    families["pm"] = (pm, lambda st: pm.initial_state(st.gen.normal(size=2) * 2, st))

    mh = MhKernel(model_toy.log_density_exact, GaussianRandomWalk(sd=np.ones(2)))
    families["mh"] = (mh, lambda st: mh.initial_state(st.gen.normal(size=2) * 2, st))

    y_bb = BetaBernoulliModel.simulate(1.0, 2.0, 100, RngStream(111, 0))
    bb = BetaBernoulliModel(y_bb, alpha=1.0, eps=0.125, n_particles=10)
    bpm = BlockPmKernel(bb, GaussianRandomWalk(sd=np.array([2.0])))
    families["block_pm"] = (
        bpm,
        lambda st: bpm.initial_state(np.array([0.1 + 9.9 * st.gen.random()]), st),
    )

    spins = ising_cftp_sample(0.25, 3, RngStream(112, 0))
    ising = IsingModel(spins)
    ex = ExchangeKernel(ising, GaussianRandomWalk(sd=np.array([0.1])))
    families["exchange"] = (
        ex,
        lambda st: ex.initial_state(np.array([st.gen.random() * BETA_CRITICAL]), st),
    )

    ok = True
    details = []
    for name, (kern, make_state) in families.items():
        equal = True
        for r in range(10**4):
            stream = RngStream(hash(name) % 2**32, r)
            s = make_state(stream)
            o1, o2 = kern.coupled_step(s, s, stream)
            if not kern.states_equal(o1, o2):
                equal = False
                break
        stream = RngStream(113, 0)
        s1 = s2 = make_state(stream)
        stayed = True
        for _ in range(10**3):
            s1, s2 = kern.coupled_step(s1, s2, stream)
            if not kern.states_equal(s1, s2):
                stayed = False
                break
        ok = ok and equal and stayed
        details.append(f"{name}: equal={equal}, stay-met={stayed}")
    _report("faithfulness suite", ok, "; ".join(details))


# -- 11 ------------------------------------------------------------------------


def test_11_spectrum_variance_calibration():
    rng = np.random.default_rng(1111)
    white = spectrum_variance(rng.standard_normal(10**6))
    n = 10**6
    x = np.empty(n)
    x[0] = 0.0
    eps = rng.standard_normal(n)
    for t in range(1, n):
        x[t] = 0.5 * x[t - 1] + eps[t]
    ar1 = spectrum_variance(x)
    ok = 0.95 < white < 1.05 and 3.8 < ar1 < 4.2
    _report(
        "asymptotic variance calibration",
        ok,
        f"white noise: {white:.4f} in [0.95, 1.05]; AR(1): {ar1:.3f} in [3.8, 4.2]",
    )


# -- 12 ------------------------------------------------------------------------


def test_12_determinism_across_worker_counts(tmp_path):
    """Rerunning with different worker counts yields identical output files."""
    from unbiasedmc.outputs import write_estimates_csv, write_taus_csv

    hashes = []
    for workers in (1, 3):
        cfg = _cfg(
            model="toy",
            model_params={"sigma": 0.5},
            replicates=300,
            k=10,
            m=60,
            seed=1212,
            workers=workers,
        )
        cfg.validate()
        records = run_replicates(cfg, clock_spec=("zero",))
        taus = tmp_path / f"taus_{workers}.csv"
        ests = tmp_path / f"estimates_{workers}.csv"
        write_taus_csv(str(taus), records)
        write_estimates_csv(str(ests), records, 2)
        hashes.append(
            (
                hashlib.sha256(taus.read_bytes()).hexdigest(),
                hashlib.sha256(ests.read_bytes()).hexdigest(),
            )
        )
    ok = hashes[0] == hashes[1]
    _report("determinism across worker counts", ok, f"sha256 pairs equal: {ok}")
