"""Command-line interface.

Subcommands: ``simulate-data``, ``meetings``, ``estimate``, ``survival``,
``inefficiency``, ``ising-cftp-check``.  Experiment subcommands read a
key = value config file plus flag overrides, and write delimited outputs,
a JSON report, rendered figures and a manifest into the output directory.

Exit codes: 0 on success, 2 on configuration errors, 3 when replicates were
censored (no meeting within the iteration cap, or a perfect-sampler
failure).
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys

import numpy as np

from .config import ConfigError, ExperimentConfig, config_hash, load_config
from .core import aggregate
from .dataio import save_series, save_spins
from .diagnostics import (
    auto_n_min,
    empirical_survival,
    fit_polynomial_bound,
    inefficiency_report,
    spectrum_variance,
)
from .driver import (
    ReplicateRecord,
    build_experiment,
    run_budgeted_meetings,
    run_replicates,
    run_serial,
)
from .models import (
    BetaBernoulliModel,
    BinomialSSM,
    enumerate_suff_stats,
    ising_cftp_sample,
    simulate_lgssm,
    suff_stat,
)
from .outputs import (
    PartialSink,
    write_estimates_csv,
    write_manifest,
    write_params_csv,
    write_report_json,
    write_survival_csv,
    write_taus_csv,
)
from .rng import RngStream


def _add_override_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="experiment config file (key = value sections)")
    p.add_argument("--sigma", type=float, help="toy model: noise level")
    p.add_argument("--alpha", type=float, help="beta_bernoulli: fixed shape")
    p.add_argument("--eps", type=float, help="beta_bernoulli: proposal tilt")
    p.add_argument("--particles", type=int, help="likelihood estimator particle count")
    p.add_argument("--data", help="model data file")
    p.add_argument("--k", type=int, help="burn-in parameter k")
    p.add_argument("--m", type=int, help="horizon parameter m")
    p.add_argument("--replicates", type=int, help="number of replicates")
    p.add_argument("--budget-seconds", type=float, help="per-worker time budget")
    p.add_argument("--seed", type=int, help="experiment seed")
    p.add_argument("--workers", type=int, help="worker process count")
    p.add_argument("--n-max", type=int, help="meeting-time censoring cap")
    p.add_argument("--proposal-sd", help="comma-separated proposal standard deviations")
    p.add_argument("--h", help="test function: identity or quad_sum")
    p.add_argument("--output", help="output directory")
    p.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="raw config override, repeatable",
    )


_FLAG_MAP = {
    "sigma": ("model", "sigma"),
    "alpha": ("model", "alpha"),
    "eps": ("model", "eps"),
    "particles": ("model", "particles"),
    "data": ("model", "data"),
    "k": ("run", "k"),
    "m": ("run", "m"),
    "replicates": ("run", "replicates"),
    "budget_seconds": ("run", "budget_seconds"),
    "seed": ("run", "seed"),
    "workers": ("run", "workers"),
    "n_max": ("run", "n_max"),
    "proposal_sd": ("kernel", "proposal_sd"),
    "h": ("run", "h"),
    "output": ("output", "directory"),
}


def _collect_overrides(args, forced=None) -> dict:
    overrides: dict = {}
    for flag, (section, key) in _FLAG_MAP.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides.setdefault(section, {})[key] = str(value)
    for entry in args.set:
        if "=" not in entry or "." not in entry.split("=", 1)[0]:
            raise ConfigError(f"--set expects SECTION.KEY=VALUE, got {entry!r}")
        dotted, value = entry.split("=", 1)
        section, key = dotted.split(".", 1)
        overrides.setdefault(section.strip(), {})[key.strip()] = value.strip()
    run = overrides.get("run", {})
    # a mode flag on the command line displaces the other mode from the file
    if "budget_seconds" in run and "replicates" not in run:
        run["replicates"] = "none"
    if "replicates" in run and "budget_seconds" not in run:
        run["budget_seconds"] = "none"
    for section, items in (forced or {}).items():
        overrides.setdefault(section, {}).update(items)
    return overrides


def _load_cfg(args, forced=None) -> ExperimentConfig:
    return load_config(args.config, _collect_overrides(args, forced))


def _prepare_outdir(cfg_or_dir) -> str:
    out = cfg_or_dir if isinstance(cfg_or_dir, str) else cfg_or_dir.output_dir
    os.makedirs(out, exist_ok=True)
    return out


def _tau_summary(records: list[ReplicateRecord]) -> dict:
    taus = np.array([r.tau for r in records if r.ok])
    censored = sum(1 for r in records if not r.ok)
    summary = {"replicates": len(records), "censored": censored}
    if taus.size:
        summary.update(
            {
                "tau_mean": float(taus.mean()),
                "tau_quantiles": {
                    q: float(np.quantile(taus, q)) for q in (0.5, 0.9, 0.99)
                },
                "tau_max": int(taus.max()),
                "mean_cost": float(np.mean([r.cost for r in records if r.ok])),
                "total_seconds": float(np.sum([r.wall_clock for r in records])),
            }
        )
    return summary


def _exit_code(records: list[ReplicateRecord]) -> int:
    return 3 if any(not r.ok for r in records) else 0


# ---------------------------------------------------------------------------
# subcommands


def _cmd_meetings(args) -> int:
    from . import plots

    cfg = _load_cfg(args, forced={"run": {"k": "0", "m": "0"}})
    out = _prepare_outdir(cfg)
    if cfg.budget_seconds is not None:
        records, summaries = run_budgeted_meetings(cfg)
        budget_info = [
            {
                "worker_id": s.worker_id,
                "n_completed": s.n_completed,
                "discarded_seconds": s.discarded_seconds,
                "elapsed_seconds": s.elapsed_seconds,
            }
            for s in summaries
        ]
    else:
        records = run_replicates(cfg, record_h=False)
        budget_info = None
    taus_path = os.path.join(out, "taus.csv")
    write_taus_csv(taus_path, records)
    report = _tau_summary(records)
    if budget_info is not None:
        report["budget_workers"] = budget_info
        report["per_worker_tau"] = {
            str(s.worker_id): [r.tau for r in records if r.worker_id == s.worker_id and r.ok]
            for s in summaries
        }
    report_path = os.path.join(out, "report.json")
    write_report_json(report_path, report)
    fig_path = os.path.join(out, "meetings.png")
    taus = [r.tau for r in records if r.ok]
    outputs = [taus_path, report_path]
    if taus:
        plots.meetings_histogram(fig_path, taus, title=f"{cfg.model} meeting times")
        outputs.append(fig_path)
    write_manifest(
        os.path.join(out, "manifest.json"),
        cfg.to_canonical_dict(),
        "meetings",
        outputs,
        seed=cfg.seed,
    )
    return _exit_code(records)


def _cmd_estimate(args) -> int:
    from . import plots

    cfg = _load_cfg(args)
    if cfg.replicates is None:
        raise ConfigError("estimate requires a replicate count")
    out = _prepare_outdir(cfg)
    exp = build_experiment(cfg)
    sink = PartialSink(os.path.join(out, "records.partial.csv"), cfg)
    resumed = [r for r in sink.resume_records() if r.replicate_id < cfg.replicates]
    sink.open(append=bool(resumed))
    try:
        fresh = run_replicates(
            cfg,
            on_record=sink.write,
            skip_ids=frozenset(r.replicate_id for r in resumed),
        )
    finally:
        sink.close()
    records = sorted(resumed + fresh, key=lambda r: r.replicate_id)
    taus_path = os.path.join(out, "taus.csv")
    estimates_path = os.path.join(out, "estimates.csv")
    write_taus_csv(taus_path, records)
    write_estimates_csv(estimates_path, records, exp.h_dim)
    ok = [r for r in records if r.ok]
    report = _tau_summary(records)
    if len(ok) >= 2:
        from .core import UnbiasedEstimate

        agg = aggregate(
            [
                UnbiasedEstimate(r.h_values, r.tau, r.cost, r.h_values, 0.0 * r.h_values, r.replicate_id)
                for r in ok
            ]
        )
        report["estimate"] = {
            "mean": agg.mean,
            "variance": agg.variance,
            "std_error": agg.std_error,
            "ci95_lower": agg.ci_lower,
            "ci95_upper": agg.ci_upper,
            "mean_cost": agg.mean_cost,
            "inefficiency": agg.inefficiency,
        }
    report_path = os.path.join(out, "report.json")
    write_report_json(report_path, report)
    outputs = [taus_path, estimates_path, report_path]
    if ok:
        fig_path = os.path.join(out, "estimates.png")
        plots.estimates_histogram(
            fig_path, np.stack([r.h_values for r in ok]), title=f"{cfg.model} H estimates"
        )
        outputs.append(fig_path)
    write_manifest(
        os.path.join(out, "manifest.json"),
        cfg.to_canonical_dict(),
        "estimate",
        outputs,
        seed=cfg.seed,
    )
    sink.close(remove=True)
    return _exit_code(records)


def _read_taus_csv(path: str) -> np.ndarray:
    taus = []
    with open(path) as fh:
        for row in csv.DictReader(fh):
            if row["tau"]:
                taus.append(int(row["tau"]))
    if not taus:
        raise ConfigError(f"{path}: no completed meeting times")
    return np.asarray(taus)


def _cmd_survival(args) -> int:
    from . import plots

    taus = _read_taus_csv(args.input)
    if args.nmin == "auto":
        n_min = auto_n_min(taus)
    else:
        n_min = int(args.nmin)
    out = _prepare_outdir(args.output or "out")
    survival = empirical_survival(taus)
    q999 = int(math.ceil(float(np.quantile(taus, 0.999))))
    window = survival[survival[:, 0] <= q999]
    fit = None
    fit_error = None
    try:
        fit = fit_polynomial_bound(window, n_min)
    except ValueError as exc:
        fit_error = str(exc)
    survival_path = os.path.join(out, "survival.csv")
    write_survival_csv(survival_path, survival, fit)
    report = {
        "replicates": int(taus.size),
        "tau_mean": float(taus.mean()),
        "n_min": n_min,
        "window_end": q999,
    }
    if fit is not None:
        report["fit"] = {
            "C": fit.fit_C,
            "kappa": fit.fit_kappa,
            "superpolynomial": fit.superpolynomial,
        }
    else:
        report["fit_error"] = fit_error
    report_path = os.path.join(out, "report.json")
    write_report_json(report_path, report)
    params_path = os.path.join(out, "report.csv")
    write_params_csv(params_path, report)
    fig_path = os.path.join(out, "survival.png")
    plots.survival_plot(fig_path, window, fit, title="meeting-time survival")
    write_manifest(
        os.path.join(out, "manifest.json"),
        {"input": os.path.abspath(args.input), "n_min": n_min},
        "survival",
        [survival_path, report_path, params_path, fig_path],
    )
    return 0


def _read_estimates_csv(path: str, component: int):
    ids, values, costs = [], [], []
    with open(path) as fh:
        reader = csv.DictReader(fh)
        col = f"h{component}"
        if col not in (reader.fieldnames or []):
            raise ConfigError(f"{path}: no column {col}")
        for row in reader:
            ids.append(int(row["replicate_id"]))
            values.append(float(row[col]))
            costs.append(float(row["cost"]))
    return np.asarray(ids), np.asarray(values), np.asarray(costs)


def _cmd_inefficiency(args) -> int:
    from . import plots

    cfg = _load_cfg(args)
    out = _prepare_outdir(args.output or cfg.output_dir)
    ids, values, costs = _read_estimates_csv(args.estimates, args.component)
    if args.cost_unit == "seconds":
        seconds = {}
        with open(args.taus) as fh:
            for row in csv.DictReader(fh):
                if row["seconds"]:
                    seconds[int(row["replicate_id"])] = float(row["seconds"])
        costs = np.asarray([seconds[i] for i in ids])
    trace, serial_seconds = run_serial(cfg, args.n_mcmc, stream_id=args.serial_stream_id)
    component_trace = trace[:, min(args.component - 1, trace.shape[1] - 1)]
    report = inefficiency_report(
        component_trace,
        args.burnin,
        values,
        costs,
        cost_unit="kernel_calls" if args.cost_unit == "calls" else "seconds",
        serial_cost=serial_seconds if args.cost_unit == "seconds" else None,
    )
    payload = {
        "v_as": report.v_as,
        "n_mcmc": report.n_mcmc,
        "n_burnin": report.n_burnin,
        "inefficiency_serial": report.inefficiency_serial,
        "inefficiency_unbiased": report.inefficiency_unbiased,
        "ratio": report.ratio,
        "cost_unit": report.cost_unit,
        "serial_seconds": serial_seconds,
        "replicates": int(values.size),
    }
    report_path = os.path.join(out, "report.json")
    write_report_json(report_path, payload)
    params_path = os.path.join(out, "report.csv")
    write_params_csv(params_path, payload)
    fig_path = os.path.join(out, "inefficiency.png")
    plots.inefficiency_bars(
        fig_path, report.inefficiency_serial, report.inefficiency_unbiased, report.cost_unit
    )
    write_manifest(
        os.path.join(out, "manifest.json"),
        {**cfg.to_canonical_dict(), "n_mcmc": args.n_mcmc, "burnin": args.burnin},
        "inefficiency",
        [report_path, params_path, fig_path],
        seed=cfg.seed,
    )
    return 0


def _cmd_simulate_data(args) -> int:
    stream = RngStream(args.seed, 0)
    if args.model == "lgssm":
        _, y = simulate_lgssm(args.a, args.sigma_x, args.T, stream)
        save_series(args.output, y)
    elif args.model == "binomial_ssm":
        _, y = BinomialSSM.simulate(args.a, args.sigma2, args.T, args.m_trials, stream)
        save_series(args.output, y)
    elif args.model == "beta_bernoulli":
        y = BetaBernoulliModel.simulate(args.alpha, args.beta_true, args.T, stream)
        save_series(args.output, y)
    elif args.model == "ising":
        spins = ising_cftp_sample(args.beta, args.L, stream)
        save_spins(args.output, spins)
    else:
        raise ConfigError(f"unknown model {args.model!r}")
    write_manifest(
        args.output + ".manifest.json",
        {k: v for k, v in vars(args).items() if k not in ("func", "set")},
        "simulate-data",
        [args.output],
        seed=args.seed,
    )
    return 0


def _cmd_ising_cftp_check(args) -> int:
    from . import plots

    out = _prepare_outdir(args.output or "out")
    stream = RngStream(args.seed, 0)
    stats = np.empty(args.samples, dtype=np.int64)
    magnet = np.empty(args.samples)
    for i in range(args.samples):
        spins = ising_cftp_sample(args.beta, args.L, stream)
        stats[i] = suff_stat(spins)
        magnet[i] = spins.mean()
    payload = {
        "L": args.L,
        "beta": args.beta,
        "samples": args.samples,
        "magnetization_mean": float(magnet.mean()),
        "magnetization_se": float(magnet.std(ddof=1) / math.sqrt(args.samples)),
        "suff_stat_mean": float(stats.mean()),
    }
    ok = True
    if args.L * args.L <= 20:
        all_stats = enumerate_suff_stats(args.L)
        log_w = args.beta * all_stats.astype(float)
        log_w -= log_w.max()
        w = np.exp(log_w)
        values, counts_exact = np.unique(all_stats, return_counts=True)
        probs = np.array(
            [w[all_stats == v].sum() for v in values]
        )
        probs /= probs.sum()
        observed = np.array([(stats == v).sum() for v in values])
        expected = probs * args.samples
        keep = expected >= 5
        chi2 = float(((observed[keep] - expected[keep]) ** 2 / expected[keep]).sum())
        dof = int(keep.sum() - 1)
        from scipy.stats import chi2 as chi2_dist

        p_value = float(chi2_dist.sf(chi2, dof))
        payload["chi2"] = {"stat": chi2, "dof": dof, "p_value": p_value}
        ok = p_value > args.significance
        fig_path = os.path.join(out, "cftp_check.png")
        plots.magnetization_plot(
            fig_path,
            observed,
            probs,
            values,
            title=f"Ising L={args.L} beta={args.beta}: perfect draws vs enumeration",
        )
    else:
        fig_path = os.path.join(out, "cftp_check.png")
        values, observed = np.unique(stats, return_counts=True)
        plots.magnetization_plot(
            fig_path, observed, observed / observed.sum(), values,
            title=f"Ising L={args.L} beta={args.beta}",
        )
    payload["pass"] = bool(ok)
    report_path = os.path.join(out, "report.json")
    write_report_json(report_path, payload)
    write_manifest(
        os.path.join(out, "manifest.json"),
        {"L": args.L, "beta": args.beta, "samples": args.samples, "seed": args.seed},
        "ising-cftp-check",
        [report_path, fig_path],
        seed=args.seed,
    )
    if not ok:
        print(f"cftp-check FAILED: chi-square p={payload['chi2']['p_value']:.2e}", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="unbiasedmc",
        description="Unbiased posterior expectations from coupled MCMC chains",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("meetings", help="produce meeting times (replicate or budget mode)")
    _add_override_flags(p)
    p.set_defaults(func=_cmd_meetings)

    p = sub.add_parser("estimate", help="produce unbiased estimates H over replicates")
    _add_override_flags(p)
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("survival", help="tail probabilities and polynomial bound fit")
    p.add_argument("--input", required=True, help="taus.csv from a meetings/estimate run")
    p.add_argument("--nmin", default="auto", help="fit window start (integer or 'auto')")
    p.add_argument("--output", help="output directory")
    p.set_defaults(func=_cmd_survival)

    p = sub.add_parser("inefficiency", help="serial vs unbiased inefficiency comparison")
    _add_override_flags(p)
    p.add_argument("--estimates", required=True, help="estimates.csv from an estimate run")
    p.add_argument("--taus", help="taus.csv (needed for cost-unit seconds)")
    p.add_argument("--n-mcmc", type=int, required=True, help="serial chain length")
    p.add_argument("--burnin", type=int, required=True, help="serial burn-in to discard")
    p.add_argument("--component", type=int, default=1, help="h component (1-based)")
    p.add_argument("--cost-unit", choices=("calls", "seconds"), default="calls")
    p.add_argument("--serial-stream-id", type=int, default=10**9)
    p.set_defaults(func=_cmd_inefficiency)

    p = sub.add_parser("simulate-data", help="draw a synthetic dataset from a model")
    p.add_argument("--model", required=True,
                   choices=("lgssm", "binomial_ssm", "beta_bernoulli", "ising"))
    p.add_argument("--output", required=True)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--T", type=int, default=100)
    p.add_argument("--a", type=float, default=0.5)
    p.add_argument("--sigma-x", type=float, default=1.0)
    p.add_argument("--sigma2", type=float, default=1.5)
    p.add_argument("--m-trials", type=int, default=50)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta-true", type=float, default=2.0)
    p.add_argument("--L", type=int, default=4)
    p.add_argument("--beta", type=float, default=0.25)
    p.set_defaults(func=_cmd_simulate_data)

    p = sub.add_parser("ising-cftp-check", help="verify perfect sampling against enumeration")
    p.add_argument("--L", type=int, default=3)
    p.add_argument("--beta", type=float, default=0.3)
    p.add_argument("--samples", type=int, default=20000)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--significance", type=float, default=1e-4)
    p.add_argument("--output", help="output directory")
    p.set_defaults(func=_cmd_ising_cftp_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
