"""Result persistence: versioned CSV schemas, JSON reports, run manifests.

Schemas are fixed so that figures can always be regenerated from the files:

* ``taus.csv``       -- replicate_id, tau, cost, seconds
* ``estimates.csv``  -- replicate_id, h1..hD, tau, cost
* ``survival.csv``   -- n, p, fit
* ``report.json``    -- aggregate payload of the subcommand
* ``manifest.json``  -- config hash, seed, schema and package versions

Files are written to a temporary sibling and atomically renamed into place.
During a run, records are appended (with flush) to ``records.partial.csv``
headed by the config hash; a rerun with the same config resumes from the
replicate ids already present, and a completed run removes the partial.
"""

from __future__ import annotations

import csv
import json
import os
from typing import Iterable, Optional

import numpy as np

from . import __version__
from .config import ExperimentConfig, config_hash
from .diagnostics import TailFit
from .driver import ReplicateRecord

SCHEMA_VERSION = 1


def _atomic_write(path: str, text: str):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_taus_csv(path: str, records: Iterable[ReplicateRecord]):
    lines = ["replicate_id,tau,cost,seconds"]
    for r in records:
        lines.append(f"{r.replicate_id},{_fmt(r.tau)},{_fmt(r.cost)},{_fmt(r.wall_clock)}")
    _atomic_write(path, "\n".join(lines) + "\n")


def write_estimates_csv(path: str, records: Iterable[ReplicateRecord], h_dim: int):
    header = ["replicate_id"] + [f"h{i + 1}" for i in range(h_dim)] + ["tau", "cost"]
    lines = [",".join(header)]
    for r in records:
        if r.h_values is None:
            continue
        vals = [repr(float(v)) for v in np.atleast_1d(r.h_values)]
        lines.append(",".join([str(r.replicate_id)] + vals + [_fmt(r.tau), _fmt(r.cost)]))
    _atomic_write(path, "\n".join(lines) + "\n")


def write_survival_csv(path: str, survival: np.ndarray, fit: Optional[TailFit] = None):
    lines = ["n,p,fit"]
    for n, p in survival:
        bound = ""
        if fit is not None and n >= 1:
            bound = repr(float(fit.fit_C * n ** (-fit.fit_kappa)))
        lines.append(f"{int(n)},{repr(float(p))},{bound}")
    _atomic_write(path, "\n".join(lines) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


def write_report_json(path: str, payload: dict):
    _atomic_write(path, json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def write_params_csv(path: str, payload: dict):
    """Flattened (param, value) rows of a report, for plotting pipelines."""

    def walk(prefix, obj):
        if isinstance(obj, dict):
            for key in sorted(obj):
                yield from walk(f"{prefix}.{key}" if prefix else str(key), obj[key])
        elif isinstance(obj, (list, tuple)):
            for i, item in enumerate(obj):
                yield from walk(f"{prefix}[{i}]", item)
        else:
            yield prefix, obj

    lines = ["param,value"]
    for name, value in walk("", _jsonable(payload)):
        lines.append(f"{name},{_fmt(value)}")
    _atomic_write(path, "\n".join(lines) + "\n")


def write_manifest(path: str, config: dict, command: str, outputs: list[str], seed=None):
    """Run provenance: canonical config, its hash, seeds and library versions."""
    import hashlib

    import numpy
    import scipy

    config = _jsonable(config)
    digest = hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()
    payload = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": config,
        "config_hash": digest,
        "seed": seed,
        "versions": {
            "unbiasedmc": __version__,
            "numpy": numpy.__version__,
            "scipy": scipy.__version__,
        },
        "outputs": sorted(outputs),
    }
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


class PartialSink:
    """Crash-safe per-record sink, guarded by the config hash.

    Each completed record is appended and flushed immediately.  On start-up
    :meth:`resume_ids` reports the replicate ids a previous interrupted run
    already finished, provided the stored hash matches the current config.
    """

    def __init__(self, path: str, cfg: ExperimentConfig):
        self.path = path
        self.hash = config_hash(cfg)
        self._fh = None

    def resume_records(self) -> list[ReplicateRecord]:
        if not os.path.exists(self.path):
            return []
        records = []
        with open(self.path) as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if not header or not header[0].startswith("#hash="):
                return []
            if header[0][len("#hash=") :] != self.hash:
                return []  # different config: ignore stale partials
            for row in reader:
                rid, tau, cost, seconds, censored, error, *h_vals = row
                records.append(
                    ReplicateRecord(
                        replicate_id=int(rid),
                        tau=int(tau) if tau else None,
                        cost=int(cost) if cost else None,
                        h_values=np.array([float(v) for v in h_vals]) if h_vals else None,
                        wall_clock=float(seconds),
                        censored=censored == "1",
                        error=error or None,
                    )
                )
        return records

    def open(self, append: bool):
        mode = "a" if append and os.path.exists(self.path) else "w"
        self._fh = open(self.path, mode)
        if mode == "w":
            self._fh.write(f"#hash={self.hash}\n")
            self._fh.flush()

    def write(self, record: ReplicateRecord):
        h_part = (
            "," + ",".join(repr(float(v)) for v in np.atleast_1d(record.h_values))
            if record.h_values is not None
            else ""
        )
        self._fh.write(
            f"{record.replicate_id},{_fmt(record.tau)},{_fmt(record.cost)},"
            f"{_fmt(record.wall_clock)},{int(record.censored)},{record.error or ''}{h_part}\n"
        )
        self._fh.flush()

    def close(self, remove: bool = False):
        if self._fh is not None:
            self._fh.close()
            self._fh = None
        if remove and os.path.exists(self.path):
            os.remove(self.path)
