"""Plain-text data files: one observation per line; spin grids as +-1 rows."""

from __future__ import annotations

import numpy as np


def load_series(path: str) -> np.ndarray:
    data = np.loadtxt(path, ndmin=1)
    if data.ndim != 1:
        raise ValueError(f"{path}: expected one observation per line")
    return data


def save_series(path: str, values) -> None:
    np.savetxt(path, np.asarray(values).reshape(-1), fmt="%.17g")


def load_spins(path: str) -> np.ndarray:
    spins = np.loadtxt(path, dtype=int, ndmin=2)
    if spins.ndim != 2 or spins.shape[0] != spins.shape[1]:
        raise ValueError(f"{path}: expected a square +-1 grid, one row per line")
    if not np.all(np.abs(spins) == 1):
        raise ValueError(f"{path}: spins must be +-1")
    return spins


def save_spins(path: str, spins) -> None:
    np.savetxt(path, np.asarray(spins, dtype=int), fmt="%d")
