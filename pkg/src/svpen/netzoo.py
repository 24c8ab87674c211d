"""State estimators, error-estimator ensembles and their pretraining.

State estimators map a normalized observation to a normalized state. Error
estimators map (state, observation) to a scalar error guess: each ensemble
member's raw output goes through ``s * tanh`` and the ensemble reports the
maximum, so the guess is pessimistic.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import gradcore as gc
from .gradcore import Module, Tensor

log = logging.getLogger(__name__)

VGG13_STACKS = ((64, 64), (128, 128), (256, 256), (512, 512), (512, 512))


def _conv_params(module, rng, prefix, c_in, c_out, k):
    fan_in = c_in * k
    module.add_param(f"{prefix}.w", gc.uniform_init(rng, (c_out, c_in, k), fan_in))
    module.add_param(f"{prefix}.b", gc.uniform_init(rng, (c_out,), fan_in))


def _dense_params(module, rng, prefix, n_in, n_out):
    module.add_param(f"{prefix}.w", gc.uniform_init(rng, (n_out, n_in), n_in))
    module.add_param(f"{prefix}.b", gc.uniform_init(rng, (n_out,), n_in))


def _dense(module, prefix, x):
    return gc.dense(x, module.params[f"{prefix}.w"], module.params[f"{prefix}.b"])


class ConvStack(Module):
    """VGG13-style 1-D feature extractor without batch norm: conv3+ReLU pairs, each pair max-pooled by 2."""

    def __init__(self, channel_scale=0.25, in_channels=1, seed=0, prefix="conv"):
        super().__init__()
        if channel_scale <= 0:
            raise ValueError("channel_scale must be positive")
        rng = np.random.default_rng(seed)
        self.prefix = prefix
        self.layers = []
        c_in = in_channels
        for s, widths in enumerate(VGG13_STACKS):
            for j, width in enumerate(widths):
                c_out = max(1, int(round(width * channel_scale)))
                name = f"{prefix}{s}.{j}"
                _conv_params(self, rng, name, c_in, c_out, 3)
                self.layers.append(name)
                c_in = c_out
        self.out_channels = c_in
        self.min_length = 2 ** len(VGG13_STACKS)

    def __call__(self, x):
        """x: Tensor [N, C_in, L] -> features [N, out_channels]."""
        if x.shape[-1] < self.min_length:
            raise ValueError(f"spectrum length {x.shape[-1]} below the minimum {self.min_length}")
        h = x
        for i, name in enumerate(self.layers):
            h = gc.relu(gc.conv1d(h, self.params[f"{name}.w"], self.params[f"{name}.b"], padding=1))
            if i % 2 == 1:
                h = gc.max_pool1d(h, 2)
        h = gc.adaptive_avg_pool1d(h, 1)
        return gc.reshape(h, (h.shape[0], self.out_channels))


def _spectrum_tensor(obs):
    obs = obs if isinstance(obs, Tensor) else Tensor(obs)
    if obs.data.ndim == 1:
        return gc.reshape(obs, (1, 1, obs.shape[0]))
    if obs.data.ndim == 2:
        return gc.reshape(obs, (obs.shape[0], 1, obs.shape[1]))
    raise ValueError(f"spectrum must be 1-D or [N, L], got {obs.shape}")


# ------------------------------------------------------------ state estimators


@dataclass(frozen=True)
class StateEstimatorSpec:
    variant: str = "spectral-cnn"  # or "mlp"
    input_dim: int = 200
    output_dim: int = 2
    channel_scale: float = 0.25
    output_activation: str = "linear"  # or "logistic"
    seed: int = 0

    def __post_init__(self):
        if self.variant not in ("spectral-cnn", "mlp"):
            raise ValueError(f"unknown state estimator variant {self.variant!r}")
        if self.output_activation not in ("linear", "logistic"):
            raise ValueError(f"unknown output activation {self.output_activation!r}")
        if self.channel_scale <= 0 or self.output_dim < 1:
            raise ValueError("invalid state estimator spec")


def _output(x, activation):
    if activation == "logistic":
        return 0.5 * gc.tansig(0.5 * x) + 0.5
    return x


class SpectralStateEstimator(Module):
    def __init__(self, spec=StateEstimatorSpec()):
        super().__init__()
        self.spec = spec
        self.stack = ConvStack(spec.channel_scale, 1, spec.seed, "g1.conv")
        self.params.update(self.stack.params)
        _dense_params(self, np.random.default_rng(spec.seed + 7919), "g1.head", self.stack.out_channels, spec.output_dim)

    def __call__(self, obs):
        """Normalized spectrum [L] or [N, L] -> normalized states [N, output_dim]."""
        feats = self.stack(_spectrum_tensor(obs))
        return _output(_dense(self, "g1.head", feats), self.spec.output_activation)


class MlpStateEstimator(Module):
    """input_dim -> 44 -> 22 -> output_dim (widths times channel_scale), tanh hidden layers."""

    def __init__(self, spec=StateEstimatorSpec("mlp", 2, 11, 1.0)):
        super().__init__()
        self.spec = spec
        rng = np.random.default_rng(spec.seed)
        w1 = max(1, int(round(44 * spec.channel_scale)))
        w2 = max(1, int(round(22 * spec.channel_scale)))
        self.widths = (spec.input_dim, w1, w2, spec.output_dim)
        for i, (a, b) in enumerate(zip(self.widths[:-1], self.widths[1:])):
            _dense_params(self, rng, f"g1.fc{i}", a, b)

    def __call__(self, obs):
        x = obs if isinstance(obs, Tensor) else Tensor(obs)
        if x.data.ndim == 1:
            x = gc.reshape(x, (1, x.shape[0]))
        n = len(self.widths) - 1
        for i in range(n):
            x = _dense(self, f"g1.fc{i}", x)
            if i < n - 1:
                x = gc.tansig(x)
        return _output(x, self.spec.output_activation)


def build_state_estimator(spec):
    return SpectralStateEstimator(spec) if spec.variant == "spectral-cnn" else MlpStateEstimator(spec)


def estimate_state(g1, observation):
    """Numpy convenience: one normalized observation -> one normalized state."""
    return g1(np.asarray(observation, float)).data[0].copy()


# ------------------------------------------------------------ error estimators


@dataclass(frozen=True)
class ErrorEstimatorSpec:
    variant: str = "spectral"  # or "mlp"
    state_dim: int = 2
    obs_dim: int = 200
    ensemble_size: int = 2
    scaling_factor: float = 2.0
    channel_scale: float = 0.25
    branch_width: int = 22
    seed: int = 100

    def __post_init__(self):
        if self.variant not in ("spectral", "mlp"):
            raise ValueError(f"unknown error estimator variant {self.variant!r}")
        if self.ensemble_size < 1:
            raise ValueError("ensemble needs at least one member")
        if not self.scaling_factor > 1.0:
            raise ValueError("scaling factor must exceed 1")


class SpectralErrorMember(Module):
    """Spectrum branch (own conv stack) and state branch (two K=1 convs) merged by conv + dense."""

    def __init__(self, spec, seed, prefix):
        super().__init__()
        self.stack = ConvStack(spec.channel_scale, 1, seed, f"{prefix}.conv")
        self.params.update(self.stack.params)
        width = self.stack.out_channels
        self.width = width
        rng = np.random.default_rng(seed + 104729)
        self.prefix = prefix
        _conv_params(self, rng, f"{prefix}.state0", spec.state_dim, max(1, width // 2), 1)
        _conv_params(self, rng, f"{prefix}.state1", max(1, width // 2), width, 1)
        _conv_params(self, rng, f"{prefix}.merge", 2, 4, 3)
        _dense_params(self, rng, f"{prefix}.fc0", 4 * width, 32)
        _dense_params(self, rng, f"{prefix}.fc1", 32, 1)

    def spectrum_features(self, obs):
        return self.stack(_spectrum_tensor(obs))

    def __call__(self, state, obs=None, features=None):
        p, pre = self.params, self.prefix
        n = state.shape[0]
        feats = self.spectrum_features(obs) if features is None else features
        if feats.shape[0] == 1 and n > 1:
            feats = gc.broadcast_batch(gc.reshape(feats, (self.width,)), n)
        s = gc.reshape(state, (n, state.shape[1], 1))
        s = gc.relu(gc.conv1d(s, p[f"{pre}.state0.w"], p[f"{pre}.state0.b"]))
        s = gc.relu(gc.conv1d(s, p[f"{pre}.state1.w"], p[f"{pre}.state1.b"]))
        s = gc.reshape(s, (n, 1, self.width))
        f = gc.reshape(feats, (n, 1, self.width))
        h = gc.relu(gc.conv1d(gc.concat([f, s], axis=1), p[f"{pre}.merge.w"], p[f"{pre}.merge.b"], padding=1))
        h = gc.relu(_dense(self, f"{pre}.fc0", gc.reshape(h, (n, 4 * self.width))))
        return gc.reshape(_dense(self, f"{pre}.fc1", h), (n,))


class MlpErrorMember(Module):
    """Dense branches for observation and state, concatenated, one hidden layer, scalar out."""

    def __init__(self, spec, seed, prefix):
        super().__init__()
        rng = np.random.default_rng(seed)
        w = spec.branch_width
        self.prefix = prefix
        _dense_params(self, rng, f"{prefix}.obs", spec.obs_dim, w)
        _dense_params(self, rng, f"{prefix}.state", spec.state_dim, w)
        _dense_params(self, rng, f"{prefix}.hidden", 2 * w, w)
        _dense_params(self, rng, f"{prefix}.out", w, 1)

    def spectrum_features(self, obs):
        x = obs if isinstance(obs, Tensor) else Tensor(obs)
        if x.data.ndim == 1:
            x = gc.reshape(x, (1, x.shape[0]))
        return gc.tansig(_dense(self, f"{self.prefix}.obs", x))

    def __call__(self, state, obs=None, features=None):
        pre = self.prefix
        n = state.shape[0]
        feats = self.spectrum_features(obs) if features is None else features
        if feats.shape[0] == 1 and n > 1:
            feats = gc.broadcast_batch(gc.reshape(feats, (feats.shape[1],)), n)
        s = gc.tansig(_dense(self, f"{pre}.state", state))
        h = gc.tansig(_dense(self, f"{pre}.hidden", gc.concat([feats, s], axis=1)))
        return gc.reshape(_dense(self, f"{pre}.out", h), (n,))


class ErrorEnsemble(Module):
    def __init__(self, spec=ErrorEstimatorSpec()):
        super().__init__()
        self.spec = spec
        cls = SpectralErrorMember if spec.variant == "spectral" else MlpErrorMember
        self.members = [cls(spec, spec.seed + 1000 * i, f"g2.m{i}") for i in range(spec.ensemble_size)]
        for m in self.members:
            self.params.update(m.params)

    def member_outputs(self, state, obs):
        """Raw (pre-squash) outputs, shape [n_members, N]."""
        state = state if isinstance(state, Tensor) else Tensor(np.atleast_2d(state))
        return gc.stack([m(state, obs) for m in self.members], axis=0)

    def __call__(self, state, obs):
        """Estimated error per state row, shape [N]."""
        raw = self.member_outputs(state, obs)
        return gc.max_over(self.spec.scaling_factor * gc.tansig(raw), axis=0)


def build_error_estimator(spec):
    return ErrorEnsemble(spec)


def estimate_error(g2, state, observation):
    """Numpy convenience: one normalized state -> scalar estimated error."""
    return float(g2(np.atleast_2d(np.asarray(state, float)), np.asarray(observation, float)).data[0])


# ------------------------------------------------------------------ pretraining


@dataclass
class PretrainDataset:
    observations: np.ndarray  # physical units, [N, obs_dim]
    states: np.ndarray  # physical units, [N, state_dim]
    obs_lower: np.ndarray
    obs_upper: np.ndarray
    state_lower: np.ndarray
    state_upper: np.ndarray

    def __post_init__(self):
        self.observations = np.atleast_2d(np.asarray(self.observations, float))
        self.states = np.atleast_2d(np.asarray(self.states, float))
        if len(self.observations) != len(self.states):
            raise ValueError("observation and state row counts differ")
        if len(self.states) == 0:
            raise ValueError("dataset is empty")

    def __len__(self):
        return len(self.states)

    @classmethod
    def from_arrays(cls, observations, states, state_lower=None, state_upper=None):
        """Normalization records default to the per-coordinate min/max of the data."""
        obs = np.atleast_2d(np.asarray(observations, float))
        st = np.atleast_2d(np.asarray(states, float))
        s_lo = st.min(axis=0) if state_lower is None else np.asarray(state_lower, float)
        s_hi = st.max(axis=0) if state_upper is None else np.asarray(state_upper, float)
        return cls(obs, st, obs.min(axis=0), obs.max(axis=0), s_lo, s_hi)

    @staticmethod
    def _span(lo, hi):
        # a coordinate that never varies would divide by zero
        span = hi - lo
        return np.where(span > 0, span, 1.0)

    def norm_obs(self, obs):
        return (np.asarray(obs, float) - self.obs_lower) / self._span(self.obs_lower, self.obs_upper)

    def norm_state(self, state):
        return (np.asarray(state, float) - self.state_lower) / self._span(self.state_lower, self.state_upper)

    def denorm_state(self, state_norm):
        return np.asarray(state_norm, float) * self._span(self.state_lower, self.state_upper) + self.state_lower


@dataclass
class PretrainResult:
    best_val_loss: float
    test_loss: float
    best_epoch: int
    history: list = field(default_factory=list)  # (epoch, train_loss, val_loss)


def split_indices(n, fractions=(0.7, 0.15, 0.15), seed=0):
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("split fractions must sum to 1")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    return perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:]


def _batched_loss(model, x, y, batch):
    total = 0.0
    for i in range(0, len(x), batch):
        total += float(gc.mse(model(x[i:i + batch]), y[i:i + batch]).data) * len(x[i:i + batch])
    return total / max(len(x), 1)


def pretrain_state_estimator(g1, dataset, epochs=50, batch_size=64, schedule=gc.LrSchedule(),
                             split=(0.7, 0.15, 0.15), seed=0):
    """Minimize MSE between predicted and true normalized states; keeps the best-validation weights."""
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    x = dataset.norm_obs(dataset.observations)
    y = dataset.norm_state(dataset.states)
    tr, va, te = split_indices(len(dataset), split, seed)
    if len(tr) == 0:
        raise ValueError("training split is empty")
    va = va if len(va) else tr
    te = te if len(te) else va
    opt = gc.Adam(g1.parameters(), lr=schedule.base_lr)
    rng = np.random.default_rng(seed + 1)
    best = (np.inf, g1.state_dict(), -1)
    history = []
    step = 0
    for epoch in range(epochs):
        order = rng.permutation(tr)
        running = 0.0
        for i in range(0, len(order), batch_size):
            idx = order[i:i + batch_size]
            opt.zero_grad()
            loss = gc.mse(g1(x[idx]), y[idx])
            loss.backward()
            opt.step(schedule.lr_at(step))
            step += 1
            running += float(loss.data) * len(idx)
        val = _batched_loss(g1, x[va], y[va], 256)
        history.append((epoch, running / len(tr), val))
        log.debug("epoch %d train %.3g val %.3g", epoch, running / len(tr), val)
        if val < best[0]:
            best = (val, g1.state_dict(), epoch)
    g1.load_state_dict(best[1])
    return PretrainResult(best[0], _batched_loss(g1, x[te], y[te], 256), best[2], history)


def error_pretraining_pairs(n_states, n_pairs, pair_fraction=0.1, seed=0):
    """Index pairs (p, q): a fraction are matched (p == q), the rest mostly unmatched."""
    rng = np.random.default_rng(seed)
    p = rng.integers(0, n_states, n_pairs)
    q = rng.integers(0, n_states, n_pairs)
    matched = rng.random(n_pairs) < pair_fraction
    q[matched] = p[matched]
    return p, q


def pretrain_error_estimator(g2, dataset, evaluate, n_pairs=256, pair_fraction=0.1, epochs=20,
                             batch_size=32, schedule=gc.LrSchedule(), seed=0):
    """Fit G2 to errors of (state_p, observation_q) combinations.

    ``evaluate(state_phys, obs_phys) -> error`` plays the role of the physical
    evaluation module. Returns the label array alongside the final loss.
    """
    p, q = error_pretraining_pairs(len(dataset), n_pairs, pair_fraction, seed)
    labels = np.array([evaluate(dataset.states[i], dataset.observations[j]) for i, j in zip(p, q)])
    xs = dataset.norm_state(dataset.states[p])
    ys = dataset.norm_obs(dataset.observations[q])
    opt = gc.Adam(g2.parameters(), lr=schedule.base_lr)
    rng = np.random.default_rng(seed + 1)
    step, loss_val = 0, np.nan
    for _ in range(epochs):
        order = rng.permutation(n_pairs)
        for i in range(0, n_pairs, batch_size):
            idx = order[i:i + batch_size]
            opt.zero_grad()
            loss = gc.mse(g2(xs[idx], ys[idx]), labels[idx])
            loss.backward()
            opt.step(schedule.lr_at(step))
            step += 1
            loss_val = float(loss.data)
    return labels, loss_val


# ------------------------------------------------------------------ checkpoints

CHECKPOINT_VERSION = 1


def save_checkpoint(path, module, spec=None, extra=None):
    """npz archive: one array per parameter plus a JSON ``__meta__`` entry (spec, version, extras)."""
    meta = {"version": CHECKPOINT_VERSION, "kind": type(module).__name__}
    if spec is not None:
        meta["spec"] = spec.__dict__ | {"type": type(spec).__name__}
    if extra:
        meta["extra"] = extra
    arrays = {k: v for k, v in module.state_dict().items()}
    arrays["__meta__"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def read_checkpoint(path):
    with np.load(Path(path)) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        state = {k: data[k] for k in data.files if k != "__meta__"}
    if meta.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
    return meta, state


def load_checkpoint(path):
    """Rebuild the network a checkpoint describes and load its weights."""
    meta, state = read_checkpoint(path)
    spec_d = dict(meta.get("spec") or {})
    kind = spec_d.pop("type", None)
    if kind == "StateEstimatorSpec":
        module = build_state_estimator(StateEstimatorSpec(**spec_d))
    elif kind == "ErrorEstimatorSpec":
        module = build_error_estimator(ErrorEstimatorSpec(**spec_d))
    else:
        raise ValueError(f"checkpoint {path} carries no known spec")
    module.load_state_dict(state)
    return module, meta
