"""The four reproduction commands as plain functions returning data (the CLI only wraps them)."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import netzoo as nz
from ..engine import MasEvaluation, TurbofanEvaluation, run_svpen
from ..errorkit import CAC_NAMES
from ..turbofan import load_engine_config
from . import scenarios as sc
from .config import ConfigError, RunConfig
from .datasets import DatasetSpec, gen_dataset, load_dataset, observation_records

log = logging.getLogger(__name__)

EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED = 0, 1, 2


def _out_dir(config, default="svpen_out"):
    out = config.path("out_dir", default)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ----------------------------------------------------------------- gen-dataset


def gen_dataset_cmd(config):
    p = config.pretrain
    spec = DatasetSpec(n_samples=int(p.get("n_samples", 2000)), seed=config.seed)
    db = sc.load_line_db(config.path("line_db"))
    out = config.path("dataset_dir") or _out_dir(config) / "dataset"
    ds = gen_dataset(spec, sc.desk_model(db, spec.grid), out)
    return {"dataset_dir": str(out), "n_samples": len(ds), "obs_dim": ds.observations.shape[1]}


# -------------------------------------------------------------------- pretrain


@dataclass
class PretrainReport:
    split_sizes: tuple
    best_val_mse: float
    test_mse: float
    best_epoch: int
    test_T_rel_error: float  # mean |T_hat / T - 1| on the test split
    test_X_rel_error: float
    history: list = field(default_factory=list)

    def as_dict(self):
        d = dict(self.__dict__)
        d["split_sizes"] = list(self.split_sizes)
        return d


def state_estimator_spec(config, obs_dim=200):
    p = config.pretrain
    return nz.StateEstimatorSpec("spectral-cnn", obs_dim, 2, float(p.get("channel_scale", 0.25)), seed=config.seed)


def pretrain_on(dataset, spec, epochs=50, batch_size=64, seed=0, split=(0.7, 0.15, 0.15)):
    g1 = nz.build_state_estimator(spec)
    res = nz.pretrain_state_estimator(g1, dataset, epochs=epochs, batch_size=batch_size, seed=seed, split=split)
    tr, va, te = nz.split_indices(len(dataset), split, seed)
    te = te if len(te) else va
    pred = dataset.denorm_state(g1(dataset.norm_obs(dataset.observations[te])).data)
    rel = np.abs(pred / dataset.states[te] - 1.0).mean(axis=0)
    report = PretrainReport((len(tr), len(va), len(te)), res.best_val_loss, res.test_loss, res.best_epoch,
                            float(rel[0]), float(rel[1]), res.history)
    return g1, report


def pretrain_cmd(config):
    ds_dir = config.path("dataset_dir")
    if ds_dir is None or not (ds_dir / "states.csv").exists():
        raise ConfigError("pretrain needs an existing dataset ([files] dataset_dir)")
    dataset = load_dataset(ds_dir)
    p = config.pretrain
    spec = state_estimator_spec(config, dataset.observations.shape[1])
    g1, report = pretrain_on(dataset, spec, int(p.get("epochs", 50)), int(p.get("batch_size", 64)), config.seed)
    ckpt = config.path("checkpoint") or _out_dir(config) / "g1.npz"
    nz.save_checkpoint(ckpt, g1, spec, {"dataset_dir": str(ds_dir)})
    metrics = _out_dir(config) / "pretrain_metrics.json"
    metrics.write_text(json.dumps(report.as_dict(), indent=2))
    return {"checkpoint": str(ckpt), "metrics": str(metrics), **report.as_dict()}


# -------------------------------------------------------------------- run-case


def scenario_from_config(config):
    try:
        scen = sc.get_scenario(config.problem, config.scenario)
    except KeyError as exc:
        raise ConfigError(str(exc)) from None
    o = config.overrides
    if config.problem == "mas" and ("truth_T" in o or "truth_X" in o):
        from dataclasses import replace
        scen = replace(scen, truth=(float(o.get("truth_T", scen.truth[0])), float(o.get("truth_X", scen.truth[1]))))
    return scen


def build_mas_problem(scen, db, dataset):
    """(physical evaluation module, normalized measured spectrum) for one spectroscopy case."""
    model = sc.desk_model(db, scen.grid, scen.mode)
    same_as_dataset = scen.mode == "absorption" and scen.grid == sc.BAND_A
    if same_as_dataset and dataset.observations.shape[1] == scen.grid.size:
        lo, hi = dataset.obs_lower, dataset.obs_upper
    else:
        # new band or mode: records from the dataset's own states, no retraining
        lo, hi = observation_records(model, dataset.states)
    state_norm = sc.MAS_STATE_NORM
    pem = MasEvaluation(model, lo, hi, state_norm, scen.domain)
    source = model if scen.observation_model == "desk" else sc.reference_model(db, scen.grid, scen.mode)
    y = pem.normalize_obs(source(scen.truth))
    return pem, y


def build_turbofan_problem(scen, config=None):
    fixed = env = None
    path = config.path("engine_config") if config else None
    if path is not None:
        fixed, env = load_engine_config(path)
    return TurbofanEvaluation(sc.TURBOFAN_DOMAIN, scen.case, sc.F_REQ, sc.TSFC_REQ, fixed, env)


@dataclass
class CaseSummary:
    problem: str
    scenario: str
    state: list
    state_names: list
    error: float
    accepted: bool
    mode: str
    iterations: int
    best_epoch: int
    forward_calls: int
    terms: dict
    truth: list | None = None
    performance: dict | None = None

    def exit_code(self):
        return EXIT_OK if self.accepted else EXIT_NOT_CONVERGED


def run_case(config, g1=None):
    """Run one scenario; writes trace.csv and summary.json under out_dir and returns the summary."""
    scen = scenario_from_config(config)
    out = _out_dir(config)
    if config.problem == "mas":
        ckpt = config.path("checkpoint")
        if g1 is None:
            if ckpt is None or not ckpt.exists():
                raise ConfigError("spectroscopy cases need a pretrained state estimator ([files] checkpoint)")
            g1, _ = nz.load_checkpoint(ckpt)
        ds_dir = config.path("dataset_dir")
        if ds_dir is None:
            raise ConfigError("spectroscopy cases need [files] dataset_dir for normalization records")
        dataset = load_dataset(ds_dir)
        db = sc.load_line_db(config.path("line_db"))
        pem, y = build_mas_problem(scen, db, dataset)
        g2 = nz.build_error_estimator(nz.ErrorEstimatorSpec("spectral", 2, len(y), seed=config.seed + 100,
                                                            channel_scale=g1.spec.channel_scale))
        names = ("T", "X")
        truth = list(scen.truth)
    else:
        pem = build_turbofan_problem(scen, config)
        y = np.array([float(v) for v in config.overrides.get("g1_input", "1,1").split(",")])
        g1 = g1 or nz.build_state_estimator(nz.StateEstimatorSpec("mlp", len(y), 11, 1.0, seed=config.seed))
        g2 = nz.build_error_estimator(nz.ErrorEstimatorSpec("mlp", 11, len(y), seed=config.seed + 100))
        names = CAC_NAMES
        truth = None
    svcfg = config.svpen_config(clamp_states=pem.clamp_states, **({} if "epsilon" in config.svpen
                                                                     else {"epsilon": scen.epsilon}))
    result = run_svpen(g1, g2, pem, y, svcfg, names)
    result.trace.save(out / "trace.csv")
    performance = None
    if config.problem == "turbofan":
        pem.evaluate(result.state_norm, y)
        perf = pem.last_performance
        performance = None if perf is None else {"F_kN": perf.F, "TSFC": perf.TSFC, "m_fuel": perf.m_fuel}
    summary = CaseSummary(config.problem, scen.name, [float(v) for v in result.state], list(names), float(result.e),
                          bool(result.accepted), result.mode, int(result.iterations), int(result.trace.best_epoch),
                          int(result.forward_calls), {k: float(v) for k, v in result.breakdown.terms.items()},
                          truth, performance)
    (out / "summary.json").write_text(json.dumps(summary.__dict__, indent=2, sort_keys=True))
    return summary, result


# ---------------------------------------------------------------------- report


class TraceParseError(ValueError):
    pass


def read_trace(path):
    """Returns (header, rows as float arrays); malformed rows raise with their line number."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            return [], np.empty((0, 0))
        if not header or header[0] != "epoch":
            raise TraceParseError(f"{path}:1: trace header must start with 'epoch'")
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise TraceParseError(f"{path}:{line_no}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise TraceParseError(f"{path}:{line_no}: {exc}") from None
    return header, np.array(rows).reshape(len(rows), len(header))


def render_table(header, rows, every=1):
    lines = [" ".join(f"{h:>12s}" for h in header)]
    for r in rows[::every]:
        lines.append(" ".join(f"{v:12.6g}" for v in r))
    return "\n".join(lines) + "\n"


def report_cmd(trace_paths, out_dir=None, every=1):
    """Plain-text rendering of each trace; returns {path: {rows, best_e, best_epoch, text}}."""
    reports = {}
    for path in trace_paths:
        header, rows = read_trace(path)
        text = render_table(header, rows, every) if header else ""
        info = {"rows": int(len(rows)), "text": text}
        if len(rows):
            best = rows[:, header.index("best_e")]
            info["best_e"] = float(best[-1])
            info["best_epoch"] = int(rows[int(np.argmin(rows[:, header.index("e")])), 0])
            info["best_monotone"] = bool(np.all(np.diff(best) <= 0))
        reports[str(path)] = info
        if out_dir is not None:
            out = Path(out_dir)
            out.mkdir(parents=True, exist_ok=True)
            (out / (Path(path).stem + "_report.txt")).write_text(text)
    return reports
