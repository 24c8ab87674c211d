"""The self-validated estimation loop.

A pretrained (or blank) state estimator proposes a state; the physical
evaluation module runs the forward model and scores it. If the score misses
the threshold, the loop alternates between fitting the error estimator to
errors the physics actually produced and nudging the state estimator downhill
on the error estimator's surface. Acceptance only ever uses physics errors.
"""
from __future__ import annotations

import csv
import io
import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import errorkit as ek
from . import gradcore as gc
from .turbofan import CacParameters, InfeasibleCycleError, simulate_turbofan

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SvpenConfig:
    epsilon: float = 0.15
    max_iters: int = 1000
    g2_delay: int = 5
    g2_gate: float = 1e-4
    n_in_situ: int = 8
    n_random_walk: int = 8
    n_seed: int = 16
    noise_sigma: float = 0.05
    buffer_capacity: int = 1000
    seed: int = 0
    clamp_states: bool = False
    report_best: bool = True
    g1_schedule: gc.LrSchedule = gc.LrSchedule()
    g2_schedule: gc.LrSchedule = gc.LrSchedule()

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.n_seed < self.n_in_situ + self.n_random_walk:
            raise ValueError("random-walk seeding must cover a full epoch-1 batch")
        if self.noise_sigma < 0 or self.buffer_capacity < self.n_seed:
            raise ValueError("invalid noise or buffer capacity")

    @property
    def batch_size(self):
        return self.n_in_situ + self.n_random_walk + 1


class ReplayBuffer:
    """Ring buffer of (normalized state, physics error) pairs."""

    def __init__(self, kind, capacity=1000):
        if kind not in ("in_situ", "random_walk"):
            raise ValueError(f"unknown buffer kind {kind!r}")
        self.kind = kind
        self.capacity = capacity
        self._states = deque(maxlen=capacity)
        self._errors = deque(maxlen=capacity)

    def __len__(self):
        return len(self._states)

    def append(self, state, error):
        self._states.append(np.array(state, dtype=float))
        self._errors.append(float(error))

    def sample(self, n, rng):
        """``n`` distinct entries drawn uniformly; returns (states [n, d], errors [n])."""
        if n > len(self):
            raise ValueError(f"asked for {n} samples from a {self.kind} buffer of {len(self)}")
        if n == 0:
            return np.empty((0, 0)), np.empty(0)
        idx = rng.choice(len(self), size=n, replace=False)
        return np.stack([self._states[i] for i in idx]), np.array([self._errors[i] for i in idx])

    def states(self):
        return np.stack(self._states) if self._states else np.empty((0, 0))

    def errors(self):
        return np.array(self._errors)


# ----------------------------------------------------------- evaluation modules


@dataclass
class Evaluation:
    e: float
    breakdown: ek.ErrorBreakdown
    y_hat: np.ndarray
    state: np.ndarray  # physical units actually fed to the forward model


class PhysicalEvaluationModule:
    """Denormalize, run the forward model, score. Subclasses supply ``_score``."""

    def __init__(self, state_norm, domain, clamp_states=False):
        self.state_norm = state_norm
        self.domain = domain
        self.clamp_states = clamp_states
        self.calls = 0

    @property
    def state_dim(self):
        return len(self.state_norm)

    def feasible_box_norm(self):
        """Feasible domain in the estimator's normalized coordinates."""
        return self.domain.renormalize(self.state_norm)

    def to_physical(self, x_norm):
        x = np.asarray(x_norm, float)
        if self.clamp_states:
            box = self.feasible_box_norm()
            x = np.clip(x, box.lo, box.hi)
        return self.state_norm.denormalize(x)

    def evaluate(self, x_norm, y_given):
        x_norm = np.asarray(x_norm, float)
        if x_norm.shape != (self.state_dim,):
            raise ValueError(f"state has shape {x_norm.shape}, expected ({self.state_dim},)")
        self.calls += 1
        return self._score(x_norm, self.to_physical(x_norm), np.asarray(y_given, float))

    def _score(self, x_norm, x_phys, y_given):
        raise NotImplementedError


class MasEvaluation(PhysicalEvaluationModule):
    """Spectroscopy: spectral discrepancy plus feasible-domain hinge on (T, X).

    ``obs_lower``/``obs_upper`` are per-wavenumber normalization records. States
    the forward model cannot take (T <= 0, X outside [0, 1]) are projected onto
    the nearest admissible value before simulation; the hinge terms still see
    the raw estimate.
    """

    T_FLOOR = 1.0  # K

    def __init__(self, model, obs_lower, obs_upper, state_norm, domain):
        super().__init__(state_norm, domain, clamp_states=False)
        self.model = model
        self.obs_lower = np.asarray(obs_lower, float)
        self.obs_upper = np.asarray(obs_upper, float)
        span = self.obs_upper - self.obs_lower
        self._span = np.where(span > 0, span, 1.0)

    def normalize_obs(self, y):
        return (np.asarray(y, float) - self.obs_lower) / self._span

    def _score(self, x_norm, x_phys, y_given):
        T = max(float(x_phys[0]), self.T_FLOOR)
        X = float(np.clip(x_phys[1], 0.0, 1.0))
        y_hat = self.normalize_obs(self.model((T, X)))
        bd = ek.mas_breakdown(y_given, y_hat, x_norm, self.feasible_box_norm())
        return Evaluation(bd.total, bd, y_hat, np.array([T, X]))


class TurbofanEvaluation(PhysicalEvaluationModule):
    """Cycle design: estimator coordinates are the CAC parameters normalized on the feasible domain."""

    def __init__(self, domain, case="benchmark", F_req=121.0, TSFC_req=10.63, fixed=None, env=None):
        super().__init__(domain, domain, clamp_states=True)
        if case not in ek.TURBOFAN_CASES:
            raise ek.ErrorCaseError(f"unknown turbofan case {case!r}")
        self.case = case
        self.F_req = F_req
        self.TSFC_req = TSFC_req
        self.fixed = fixed
        self.env = env
        self.last_performance = None

    def _score(self, x_norm, x_phys, y_given):
        x_eval = self.domain.normalize(x_phys)
        kwargs = {k: v for k, v in (("fixed", self.fixed), ("env", self.env)) if v is not None}
        try:
            perf = simulate_turbofan(CacParameters.from_array(x_phys), **kwargs)
        except InfeasibleCycleError as exc:
            log.debug("infeasible cycle at %s: %s", np.round(x_phys, 4), exc)
            self.last_performance = None
            bd = ek.infeasible_breakdown(self.case)
            return Evaluation(bd.total, bd, np.array([np.nan, np.nan]), x_phys)
        self.last_performance = perf
        bd = ek.tf_total_error(self.case, x_eval, perf.F, perf.TSFC, self.F_req, self.TSFC_req)
        y_hat = np.array([perf.F / self.F_req, perf.TSFC / self.TSFC_req])
        return Evaluation(bd.total, bd, y_hat, x_phys)


# ------------------------------------------------------------------- the loop


@dataclass
class TraceRow:
    epoch: int
    state: np.ndarray
    e: float
    e_hat: float
    loss_g1: float
    loss_g2: float
    lr_g1: float
    lr_g2: float
    best_e: float


@dataclass
class OptimizationTrace:
    state_names: tuple
    rows: list = field(default_factory=list)
    best_state: np.ndarray | None = None
    best_e: float = np.inf
    best_epoch: int = -1

    def record(self, row):
        if row.e < self.best_e:
            self.best_e, self.best_state, self.best_epoch = row.e, np.array(row.state), row.epoch
        row.best_e = self.best_e
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    def header(self):
        return ["epoch", *self.state_names, "e", "e_hat", "loss_g1", "loss_g2", "lr_g1", "lr_g2", "best_e"]

    def to_csv(self):
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(self.header())
        for r in self.rows:
            w.writerow([r.epoch, *(repr(float(v)) for v in r.state),
                        *(repr(float(v)) for v in (r.e, r.e_hat, r.loss_g1, r.loss_g2, r.lr_g1, r.lr_g2, r.best_e))])
        return out.getvalue()

    def save(self, path):
        Path(path).write_text(self.to_csv())


@dataclass
class SvpenResult:
    state_norm: np.ndarray
    state: np.ndarray  # physical units
    e: float
    accepted: bool  # physics error below epsilon
    mode: str  # "inverse" or "optimization"
    iterations: int
    trace: OptimizationTrace
    forward_calls: int
    breakdown: ek.ErrorBreakdown | None = None


def inverse_function_mode(g1, pem, y, epsilon):
    """One forward pass and one physics evaluation; returns (x_norm, Evaluation, accepted)."""
    x = g1(y).data[0].copy()
    ev = pem.evaluate(x, y)
    return x, ev, bool(ev.e < epsilon)


def random_walk_state(pem, rng):
    box = pem.feasible_box_norm()
    return rng.uniform(box.lo, box.hi)


def seed_random_walk(pem, y, buffer, rng, count=16):
    for _ in range(count):
        x = random_walk_state(pem, rng)
        buffer.append(x, pem.evaluate(x, y).e)
    return buffer


def explore_in_situ(pem, y, x_current, sigma, buffer, rng):
    x = np.asarray(x_current, float) + rng.normal(0.0, sigma, size=len(x_current))
    ev = pem.evaluate(x, y)
    buffer.append(x, ev.e)
    return x, ev


def batch_counts(n_in_situ_available, n_in_situ=8, n_random_walk=8):
    n_ie = min(n_in_situ, n_in_situ_available)
    return n_ie, n_in_situ + n_random_walk - n_ie, 1


def compose_batch(b_ie, b_rw, current, rng, n_in_situ=8, n_random_walk=8):
    """Stacked (states, errors) with in-situ rows first, then random-walk rows, then the current sample."""
    n_ie, n_rw, _ = batch_counts(len(b_ie), n_in_situ, n_random_walk)
    parts_x, parts_e = [], []
    if n_ie:
        xs, es = b_ie.sample(n_ie, rng)
        parts_x.append(xs)
        parts_e.append(es)
    xs, es = b_rw.sample(n_rw, rng)
    parts_x.append(xs)
    parts_e.append(es)
    parts_x.append(np.atleast_2d(current[0]))
    parts_e.append(np.array([current[1]]))
    return np.concatenate(parts_x), np.concatenate(parts_e), (n_ie, n_rw, 1)


def g2_update(g2, opt, states, errors, y, gate=1e-4, delay=5, lr=None):
    """Up to ``delay`` gated steps; returns the list of pre-step losses (skipped steps included)."""
    losses = []
    for _ in range(delay):
        opt.zero_grad()
        loss = gc.mse(g2(states, y), errors)
        value = float(loss.data)
        losses.append(value)
        if value < gate:
            continue
        loss.backward()
        opt.step(lr)
    opt.zero_grad()
    return losses


def g1_update(g1, g2, opt, y, lr=None):
    """One step of G1 on the frozen G2's estimate; returns the pre-step estimated error."""
    opt.zero_grad()
    g2.zero_grad()
    e_hat = g2(g1(y), y)
    loss = gc.mean(e_hat)
    loss.backward()
    opt.step(lr)
    g2.zero_grad()
    return float(loss.data)


def run_svpen(g1, g2, pem, y, config=SvpenConfig(), state_names=None):
    """Run the self-validated search. ``y`` is the normalized observation fed to both networks and to the error calculator."""
    rng = np.random.default_rng(config.seed)
    y = np.asarray(y, float)
    names = tuple(state_names or (f"x{i}" for i in range(pem.state_dim)))
    trace = OptimizationTrace(names)
    calls0 = pem.calls

    x_c, ev, accepted = inverse_function_mode(g1, pem, y, config.epsilon)
    trace.record(TraceRow(0, ev.state, ev.e, np.nan, np.nan, np.nan, 0.0, 0.0, np.inf))
    if accepted:
        return SvpenResult(x_c, ev.state, ev.e, True, "inverse", 0, trace, pem.calls - calls0, ev.breakdown)

    b_ie = ReplayBuffer("in_situ", config.buffer_capacity)
    b_rw = ReplayBuffer("random_walk", config.buffer_capacity)
    seed_random_walk(pem, y, b_rw, rng, config.n_seed)
    opt_g1 = gc.Adam(g1.parameters(), lr=config.g1_schedule.base_lr)
    opt_g2 = gc.Adam(g2.parameters(), lr=config.g2_schedule.base_lr)
    best = (ev.e, x_c.copy(), ev)
    e_c = ev.e
    epoch = 0
    for epoch in range(1, config.max_iters + 1):
        lr1 = config.g1_schedule.lr_at(epoch - 1)
        lr2 = config.g2_schedule.lr_at(epoch - 1)
        xs, es, _ = compose_batch(b_ie, b_rw, (x_c, e_c), rng, config.n_in_situ, config.n_random_walk)
        try:
            losses = g2_update(g2, opt_g2, xs, es, y, config.g2_gate, config.g2_delay, lr2)
            loss_g1 = g1_update(g1, g2, opt_g1, y, lr1)
        except gc.NonFiniteError as exc:
            log.warning("epoch %d aborted: %s", epoch, exc)
            losses, loss_g1 = [np.nan], np.nan
            opt_g1.zero_grad()
            opt_g2.zero_grad()
        x_c = g1(y).data[0].copy()
        explore_in_situ(pem, y, x_c, config.noise_sigma, b_ie, rng)
        x_rw = random_walk_state(pem, rng)
        b_rw.append(x_rw, pem.evaluate(x_rw, y).e)
        ev = pem.evaluate(x_c, y)
        e_c = ev.e
        e_hat = float(g2(np.atleast_2d(x_c), y).data[0])
        trace.record(TraceRow(epoch, ev.state, e_c, e_hat, loss_g1, losses[-1], lr1, lr2, np.inf))
        if e_c < best[0]:
            best = (e_c, x_c.copy(), ev)
        if e_c < config.epsilon:
            return SvpenResult(x_c, ev.state, e_c, True, "optimization", epoch, trace, pem.calls - calls0, ev.breakdown)

    e_b, x_b, ev_b = best if config.report_best else (e_c, x_c, ev)
    return SvpenResult(x_b, ev_b.state, e_b, False, "optimization", epoch, trace, pem.calls - calls0, ev_b.breakdown)
