"""Small reverse-mode autodiff over numpy arrays, with the layers, Adam and LR schedule the estimators use.

Every op returns a new ``Tensor`` holding its parents and a closure that pushes
the output adjoint back to them. ``backward`` walks the graph in reverse
topological order once. Arrays are float64; leading batch axes are allowed on
every layer.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class GradError(ValueError):
    """Shape or usage error in the autodiff layer."""


class NonFiniteError(FloatingPointError):
    """A NaN or Inf reached a loss, gradient or parameter."""


def _check_finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values in {what}")


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, name=None, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.data) if self.requires_grad else None
        self._parents = _parents
        self._backward = _backward
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        label = f" {self.name}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    def numpy(self):
        return self.data.copy()

    def item(self):
        return float(self.data)

    def zero_grad(self):
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def backward(self):
        if self.data.size != 1:
            raise GradError(f"backward needs a scalar loss, got shape {self.shape}")
        _check_finite(self.data, "loss")
        order, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        adj = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = adj.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad = node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None:
                    continue
                key = id(parent)
                adj[key] = adj[key] + pg if key in adj else pg

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __getitem__(self, idx):
        return index(self, idx)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, backward):
    track = any(p.requires_grad or p._backward is not None for p in parents)
    if not track:
        return Tensor(data)
    return Tensor(data, _parents=tuple(parents), _backward=backward)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------- elementwise


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def neg(a):
    return _node(-a.data, (a,), lambda g: (-g,))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _node(
        a.data * b.data, (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def tansig(a):
    out = np.tanh(a.data)
    return _node(out, (a,), lambda g: (g * (1.0 - out**2),))


tanh = tansig


def relu(a):
    mask = a.data > 0
    return _node(a.data * mask, (a,), lambda g: (g * mask,))


def square(a):
    return _node(a.data**2, (a,), lambda g: (2.0 * a.data * g,))


def total(a):
    """Sum of all entries as a scalar."""
    return _node(a.data.sum(), (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),))


def mean(a):
    n = a.data.size
    return _node(a.data.mean(), (a,), lambda g: (np.full(a.shape, float(g) / n),))


def mse(pred, target):
    diff = add(pred, neg(as_tensor(target)))
    return mean(square(diff))


# ------------------------------------------------------------------- shaping


def reshape(a, shape):
    return _node(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def index(a, idx):
    def back(g):
        out = np.zeros_like(a.data)
        np.add.at(out, idx, g)
        return (out,)

    return _node(a.data[idx], (a,), back)


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    return _node(
        np.concatenate([t.data for t in tensors], axis=axis), tensors,
        lambda g: tuple(np.split(g, splits, axis=axis)),
    )


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    return _node(
        np.stack([t.data for t in tensors], axis=axis), tensors,
        lambda g: tuple(np.moveaxis(g, axis, 0)),
    )


def max_over(a, axis=0):
    """Maximum along ``axis``; the adjoint goes to the first maximal entry."""
    arg = np.argmax(a.data, axis=axis)
    out = np.take_along_axis(a.data, np.expand_dims(arg, axis), axis=axis).squeeze(axis)

    def back(g):
        full = np.zeros_like(a.data)
        np.put_along_axis(full, np.expand_dims(arg, axis), np.expand_dims(g, axis), axis=axis)
        return (full,)

    return _node(out, (a,), back)


def broadcast_batch(a, n):
    """Repeat a tensor along a new leading batch axis."""
    return _node(np.broadcast_to(a.data, (n,) + a.shape).copy(), (a,), lambda g: (g.sum(axis=0),))


# ---------------------------------------------------------------------- layers


def dense(x, weight, bias):
    """x [..., n_in], weight [n_out, n_in], bias [n_out] -> [..., n_out]."""
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    if weight.data.ndim != 2 or x.shape[-1] != weight.shape[1] or bias.shape != (weight.shape[0],):
        raise GradError(f"dense shapes do not conform: x {x.shape}, W {weight.shape}, b {bias.shape}")
    out = x.data @ weight.data.T + bias.data

    def back(g):
        gx = g @ weight.data
        g2 = g.reshape(-1, g.shape[-1])
        x2 = x.data.reshape(-1, x.shape[-1])
        return gx, g2.T @ x2, g2.sum(axis=0)

    return _node(out, (x, weight, bias), back)


def conv1d(x, kernel, bias, stride=1, padding=0):
    """Cross-correlation. x [C_in, L] or [N, C_in, L]; kernel [C_out, C_in, K]; bias [C_out]."""
    x, kernel, bias = as_tensor(x), as_tensor(kernel), as_tensor(bias)
    squeeze = x.data.ndim == 2
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 3 or kernel.data.ndim != 3 or xd.shape[1] != kernel.shape[1]:
        raise GradError(f"conv1d shapes do not conform: x {x.shape}, kernel {kernel.shape}")
    if stride < 1:
        raise GradError("stride must be >= 1")
    n, c_in, length = xd.shape
    c_out, _, k = kernel.shape
    if k > length + 2 * padding:
        raise GradError(f"kernel {k} larger than padded input {length + 2 * padding}")
    xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding))) if padding else xd
    l_out = (length + 2 * padding - k) // stride + 1
    # cols [N, C_in, K, L_out]
    idx = np.arange(k)[:, None] + stride * np.arange(l_out)[None, :]
    cols = xp[:, :, idx]
    out = np.einsum("nckl,ock->nol", cols, kernel.data, optimize=True) + bias.data[None, :, None]

    def back(g):
        g3 = g[None] if squeeze else g
        gk = np.einsum("nol,nckl->ock", g3, cols, optimize=True)
        gb = g3.sum(axis=(0, 2))
        gcols = np.einsum("nol,ock->nckl", g3, kernel.data, optimize=True)
        gxp = np.zeros_like(xp)
        span = stride * (l_out - 1) + 1
        for j in range(k):
            gxp[:, :, j:j + span:stride] += gcols[:, :, j, :]
        gx = gxp[:, :, padding:padding + length] if padding else gxp
        return (gx[0] if squeeze else gx), gk, gb

    return _node(out[0] if squeeze else out, (x, kernel, bias), back)


def max_pool1d(x, size=2):
    """Non-overlapping max pooling along the last axis; a trailing remainder is dropped."""
    l_out = x.shape[-1] // size
    if l_out < 1:
        raise GradError(f"cannot pool length {x.shape[-1]} by {size}")
    trimmed = x.data[..., : l_out * size]
    win = trimmed.reshape(x.shape[:-1] + (l_out, size))
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]

    def back(g):
        gw = np.zeros_like(win)
        np.put_along_axis(gw, arg[..., None], g[..., None], axis=-1)
        full = np.zeros_like(x.data)
        full[..., : l_out * size] = gw.reshape(trimmed.shape)
        return (full,)

    return _node(out, (x,), back)


def adaptive_bins(length, target_len):
    """Bin i covers [floor(i L / n), ceil((i + 1) L / n))."""
    if target_len < 1:
        raise GradError("target_len must be >= 1")
    return [(i * length // target_len, -(-(i + 1) * length // target_len)) for i in range(target_len)]


def adaptive_avg_pool1d(x, target_len=1):
    length = x.shape[-1]
    bins = adaptive_bins(length, target_len)
    out = np.stack([x.data[..., a:b].mean(axis=-1) for a, b in bins], axis=-1)

    def back(g):
        full = np.zeros_like(x.data)
        for i, (a, b) in enumerate(bins):
            full[..., a:b] += g[..., i:i + 1] / (b - a)
        return (full,)

    return _node(out, (x,), back)


# ---------------------------------------------------------------- parameters


class Module:
    """Parameter container; subclasses register leaf tensors in ``self.params`` by name."""

    def __init__(self):
        self.params = {}

    def add_param(self, name, value):
        t = Tensor(value, requires_grad=True, name=name)
        self.params[name] = t
        return t

    def parameters(self):
        return list(self.params.values())

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self):
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, state):
        missing = set(self.params) - set(state)
        if missing:
            raise GradError(f"state dict lacks {sorted(missing)}")
        for k, t in self.params.items():
            arr = np.asarray(state[k], dtype=np.float64)
            if arr.shape != t.shape:
                raise GradError(f"shape mismatch for {k}: {arr.shape} vs {t.shape}")
            t.data = arr.copy()
            t.zero_grad()

    def n_parameters(self):
        return int(sum(p.data.size for p in self.parameters()))


def uniform_init(rng, shape, fan_in):
    bound = math.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


# ---------------------------------------------------------------- optimization


@dataclass(frozen=True)
class LrSchedule:
    base_lr: float = 1e-3
    min_lr: float = 1e-5
    warmup_steps: int = 10
    cycle_length: int = 100
    cycle_mult: float = 1.0

    def __post_init__(self):
        if not (0 < self.min_lr <= self.base_lr):
            raise GradError("need 0 < min_lr <= base_lr")
        if self.warmup_steps < 0 or self.cycle_length < 1 or self.cycle_mult < 1:
            raise GradError("invalid schedule lengths")

    def lr_at(self, step):
        if step < 0:
            raise GradError("step must be >= 0")
        if step < self.warmup_steps:
            return self.min_lr + (self.base_lr - self.min_lr) * step / self.warmup_steps
        t, length = step - self.warmup_steps, float(self.cycle_length)
        while t >= length:
            t -= length
            length *= self.cycle_mult
        return self.min_lr + 0.5 * (self.base_lr - self.min_lr) * (1.0 + math.cos(math.pi * t / length))


def lr_at(schedule, step):
    return schedule.lr_at(step)


class Adam:
    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self, lr=None):
        """One update from the accumulated grads; raises NonFiniteError before touching anything."""
        for p in self.params:
            _check_finite(p.grad, f"gradient of {p.name or 'parameter'}")
        lr = self.lr if lr is None else lr
        if lr <= 0:
            raise GradError("learning rate must be positive")
        self.t += 1
        c1, c2 = 1.0 - self.b1**self.t, 1.0 - self.b2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * p.grad
            v *= self.b2
            v += (1.0 - self.b2) * p.grad**2
            p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()


def adam_step(params, grads, state, lr):
    """Functional form: copy ``grads`` into ``params`` and apply one step of ``state`` (an Adam)."""
    for p, g in zip(params, grads):
        p.grad = np.asarray(g, dtype=np.float64).copy()
    state.step(lr)
    return params
