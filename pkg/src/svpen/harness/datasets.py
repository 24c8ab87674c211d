"""Synthetic spectra datasets on disk: states.csv, observations.csv, normalization.csv."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..netzoo import PretrainDataset
from ..spectro import SpectralGrid, SpectroModel

STATE_NAMES = ("T", "X")


@dataclass(frozen=True)
class DatasetSpec:
    n_samples: int = 2000
    T_range: tuple = (600.0, 2000.0)
    X_range: tuple = (0.05, 0.07)
    grid: SpectralGrid = SpectralGrid(2375.0, 2395.0, 0.1)
    split: tuple = (0.7, 0.15, 0.15)
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        for lo, hi in (self.T_range, self.X_range):
            if not hi > lo:
                raise ValueError("state ranges need positive width")

    @property
    def state_lower(self):
        return np.array([self.T_range[0], self.X_range[0]])

    @property
    def state_upper(self):
        return np.array([self.T_range[1], self.X_range[1]])


def sample_states(spec):
    rng = np.random.default_rng(spec.seed)
    T = rng.uniform(*spec.T_range, spec.n_samples)
    X = rng.uniform(*spec.X_range, spec.n_samples)
    return np.column_stack([T, X])


def simulate_many(model, states):
    return np.stack([model(s) for s in states])


def observation_records(model, states):
    """Per-coordinate min/max of ``model`` evaluated at ``states``."""
    obs = simulate_many(model, states)
    return obs.min(axis=0), obs.max(axis=0)


def _fmt(v):
    return repr(float(v))


def gen_dataset(spec, model, out_dir):
    """Simulate ``spec.n_samples`` spectra with ``model`` (its grid is replaced by ``spec.grid``) and write three CSVs."""
    model = model.with_grid(spec.grid) if isinstance(model, SpectroModel) else model
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    states = sample_states(spec)
    obs = simulate_many(model, states)
    v = spec.grid.wavenumbers
    with open(out / "states.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STATE_NAMES)
        w.writerows([[_fmt(a) for a in row] for row in states])
    with open(out / "observations.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"{x:.4f}" for x in v])
        w.writerows([[_fmt(a) for a in row] for row in obs])
    with open(out / "normalization.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["group", "name", "lower", "upper"])
        for name, lo, hi in zip(STATE_NAMES, spec.state_lower, spec.state_upper):
            w.writerow(["state", name, _fmt(lo), _fmt(hi)])
        for x, lo, hi in zip(v, obs.min(axis=0), obs.max(axis=0)):
            w.writerow(["observation", f"{x:.4f}", _fmt(lo), _fmt(hi)])
    return load_dataset(out)


def load_dataset(path):
    """Read the three CSVs back into a PretrainDataset."""
    path = Path(path)
    for name in ("states.csv", "observations.csv", "normalization.csv"):
        if not (path / name).exists():
            raise FileNotFoundError(f"dataset file {path / name} missing")
    states = np.loadtxt(path / "states.csv", delimiter=",", skiprows=1, ndmin=2)
    obs = np.loadtxt(path / "observations.csv", delimiter=",", skiprows=1, ndmin=2)
    s_lo, s_hi, o_lo, o_hi = [], [], [], []
    with open(path / "normalization.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            lo, hi = float(row["lower"]), float(row["upper"])
            if row["group"] == "state":
                s_lo.append(lo)
                s_hi.append(hi)
            else:
                o_lo.append(lo)
                o_hi.append(hi)
    return PretrainDataset(obs, states, np.array(o_lo), np.array(o_hi), np.array(s_lo), np.array(s_hi))


def dataset_wavenumbers(path):
    with open(Path(path) / "observations.csv", newline="") as fh:
        return np.array([float(v) for v in next(csv.reader(fh))])
