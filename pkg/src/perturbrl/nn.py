"""Minimal reverse-mode autodiff on numpy arrays, dense MLPs, squashed-Gaussian
policy heads, Adam, and the checkpoint format.

The tape is implicit: every :class:`Tensor` records its parents and a backward
closure; ``backward()`` on a scalar root runs a topological sweep, visiting
each node once and accumulating gradients additively at fan-out. Parameters
are float32 by default; gradient checking casts to float64.
"""

from __future__ import annotations

import io
import struct

import numpy as np

from .errors import DomainError, UsageError

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
CKPT_MAGIC = "perturbrl-ckpt v1"


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, parents=(), backward=None):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents if self.requires_grad else ()
        self._backward = backward if self.requires_grad else None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def backward(self):
        if self.data.size != 1:
            raise UsageError("backward() requires a scalar root")
        topo, seen = [], set()

        def visit(t):
            if id(t) in seen:
                return
            seen.add(id(t))
            for p in t._parents:
                visit(p)
            topo.append(t)

        visit(self)
        for t in topo:
            if t.requires_grad:
                t.grad = np.zeros_like(t.data)
        self.grad = np.ones_like(self.data)
        for t in reversed(topo):
            if t._backward is not None:
                t._backward(t.grad)

    # -- arithmetic ----------------------------------------------------------

    @staticmethod
    def _lift(other):
        return other if isinstance(other, Tensor) else Tensor(np.asarray(other))

    def __add__(self, other):
        other = self._lift(other)
        out_data = self.data + other.data

        def bw(g):
            if self.requires_grad:
                self.grad += _unbroadcast(g, self.data.shape)
            if other.requires_grad:
                other.grad += _unbroadcast(g, other.data.shape)
        return Tensor(out_data, parents=(self, other), backward=bw)

    __radd__ = __add__

    def __neg__(self):
        def bw(g):
            if self.requires_grad:
                self.grad += -g
        return Tensor(-self.data, parents=(self,), backward=bw)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) + (-self)

    def __mul__(self, other):
        other = self._lift(other)
        out_data = self.data * other.data

        def bw(g):
            if self.requires_grad:
                self.grad += _unbroadcast(g * other.data, self.data.shape)
            if other.requires_grad:
                other.grad += _unbroadcast(g * self.data, other.data.shape)
        return Tensor(out_data, parents=(self, other), backward=bw)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._lift(other)
        return self * other ** -1.0

    def __rtruediv__(self, other):
        return self._lift(other) * self ** -1.0

    def __pow__(self, p: float):
        out_data = self.data ** p

        def bw(g):
            if self.requires_grad:
                self.grad += g * p * self.data ** (p - 1.0)
        return Tensor(out_data, parents=(self,), backward=bw)

    def __matmul__(self, other):
        other = self._lift(other)
        out_data = self.data @ other.data

        def bw(g):
            if self.requires_grad:
                self.grad += g @ other.data.T
            if other.requires_grad:
                other.grad += self.data.T @ g
        return Tensor(out_data, parents=(self, other), backward=bw)

    # -- elementwise functions ----------------------------------------------

    def tanh(self):
        out_data = np.tanh(self.data)

        def bw(g):
            if self.requires_grad:
                self.grad += g * (1.0 - out_data * out_data)
        return Tensor(out_data, parents=(self,), backward=bw)

    def exp(self):
        out_data = np.exp(self.data)

        def bw(g):
            if self.requires_grad:
                self.grad += g * out_data
        return Tensor(out_data, parents=(self,), backward=bw)

    def log(self):
        def bw(g):
            if self.requires_grad:
                self.grad += g / self.data
        return Tensor(np.log(self.data), parents=(self,), backward=bw)

    def softplus(self):
        # log(1 + e^x), computed stably
        out_data = np.logaddexp(0.0, self.data)

        def bw(g):
            if self.requires_grad:
                self.grad += g / (1.0 + np.exp(-self.data))
        return Tensor(out_data, parents=(self,), backward=bw)

    def clip(self, lo, hi):
        out_data = np.clip(self.data, lo, hi)
        mask = (self.data > lo) & (self.data < hi)

        def bw(g):
            if self.requires_grad:
                self.grad += g * mask
        return Tensor(out_data, parents=(self,), backward=bw)

    def minimum(self, other):
        other = self._lift(other)
        take_self = self.data <= other.data
        out_data = np.where(take_self, self.data, other.data)

        def bw(g):
            if self.requires_grad:
                self.grad += _unbroadcast(g * take_self, self.data.shape)
            if other.requires_grad:
                other.grad += _unbroadcast(g * ~take_self, other.data.shape)
        return Tensor(out_data, parents=(self, other), backward=bw)

    # -- reductions / shaping ------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        out_data = self.data.sum(axis=axis, keepdims=keepdims)

        def bw(g):
            if self.requires_grad:
                if axis is not None and not keepdims:
                    g = np.expand_dims(g, axis)
                self.grad += np.broadcast_to(g, self.data.shape)
        return Tensor(out_data, parents=(self,), backward=bw)

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape):
        orig = self.data.shape

        def bw(g):
            if self.requires_grad:
                self.grad += g.reshape(orig)
        return Tensor(self.data.reshape(*shape), parents=(self,), backward=bw)

    def slice_cols(self, start, stop):
        out_data = self.data[..., start:stop]

        def bw(g):
            if self.requires_grad:
                full = np.zeros_like(self.data)
                full[..., start:stop] = g
                self.grad += full
        return Tensor(out_data, parents=(self,), backward=bw)


def concat_cols(tensors) -> Tensor:
    """Concatenate along the last axis."""
    tensors = [Tensor._lift(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=-1)
    widths = [t.data.shape[-1] for t in tensors]

    def bw(g):
        offset = 0
        for t, w in zip(tensors, widths):
            if t.requires_grad:
                t.grad += g[..., offset:offset + w]
            offset += w
    return Tensor(out_data, parents=tuple(tensors), backward=bw)


class Param(Tensor):
    """A trainable leaf array with a stable ordinal id for serialization."""

    def __init__(self, data, pid: int):
        super().__init__(np.asarray(data), requires_grad=True)
        self.pid = pid

    __slots__ = ("pid",)


class Module:
    """Base with ordered parameter registration."""

    def __init__(self):
        self._params: list[Param] = []

    def _new_param(self, data) -> Param:
        p = Param(data, pid=len(self._params))
        self._params.append(p)
        return p

    def parameters(self) -> list[Param]:
        return list(self._params)

    def state_arrays(self) -> list[np.ndarray]:
        return [p.data.copy() for p in self._params]

    def load_arrays(self, arrays):
        if len(arrays) != len(self._params):
            raise UsageError("array count mismatch while loading parameters")
        for p, a in zip(self._params, arrays):
            if a.shape != p.data.shape:
                raise UsageError(f"shape mismatch for param {p.pid}")
            p.data = a.astype(p.data.dtype).copy()

    def astype(self, dtype):
        for p in self._params:
            p.data = p.data.astype(dtype)
        return self


class MLP(Module):
    """Dense net with tanh hidden activations and a linear final layer."""

    def __init__(self, sizes, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.sizes = tuple(sizes)
        self.weights, self.biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = np.sqrt(1.0 / fan_in)
            w = rng.uniform(-bound, bound, (fan_in, fan_out)).astype(dtype)
            b = np.zeros(fan_out, dtype=dtype)
            self.weights.append(self._new_param(w))
            self.biases.append(self._new_param(b))

    def __call__(self, x) -> Tensor:
        h = x if isinstance(x, Tensor) else Tensor(np.asarray(x))
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i != last:
                h = h.tanh()
        return h

    def forward_np(self, x: np.ndarray) -> np.ndarray:
        """Tape-free forward pass for rollouts."""
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.data + b.data
            if i != last:
                h = np.tanh(h)
        return h


def _log_sigmoid_2x(z: np.ndarray) -> np.ndarray:
    # log(1 - tanh(z)^2) = 2 (log 2 - z - softplus(-2z)), stable for large |z|
    return 2.0 * (np.log(2.0) - z - np.logaddexp(0.0, -2.0 * z))


class GaussianPolicyHead(Module):
    """Squashed-Gaussian policy over a box action space.

    The mean comes from an MLP trunk; the log-std is a state-independent
    parameter clamped to [LOG_STD_MIN, LOG_STD_MAX]. Pre-squash draws ``z``
    pass through tanh and are affinely mapped into [low, high].
    """

    def __init__(self, obs_dim, action_dim, low, high, rng,
                 hidden=(64, 64), dtype=np.float32):
        super().__init__()
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self.low = np.asarray(low, dtype=float)
        self.high = np.asarray(high, dtype=float)
        self.trunk = MLP((obs_dim, *hidden, action_dim), rng, dtype)
        self._params.extend(self.trunk.parameters())
        for i, p in enumerate(self._params):
            p.pid = i
        self.log_std = self._new_param(np.full(action_dim, -0.5, dtype=dtype))
        self._scale = (self.high - self.low) / 2.0
        self._mid = (self.high + self.low) / 2.0

    # numpy (tape-free) path -------------------------------------------------

    def _std_np(self):
        return np.exp(np.clip(self.log_std.data, LOG_STD_MIN, LOG_STD_MAX))

    def squash_np(self, z: np.ndarray) -> np.ndarray:
        return self._mid + self._scale * np.tanh(z)

    def sample_np(self, obs: np.ndarray, rng: np.random.Generator,
                  deterministic=False):
        """Draw (action, log_prob, z); deterministic mode returns the squashed mean."""
        mean = self.trunk.forward_np(obs)
        std = self._std_np()
        if deterministic:
            z = mean
        else:
            z = mean + std * rng.standard_normal(mean.shape).astype(mean.dtype)
        action = self.squash_np(z)
        return action, self.log_prob_np(mean, z), z

    def sample_action_np(self, obs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Stochastic draw without the log-density (frozen partner policies)."""
        mean = self.trunk.forward_np(obs)
        z = mean + self._std_np() * rng.standard_normal(mean.shape).astype(mean.dtype)
        return self.squash_np(z)

    def log_prob_np(self, mean: np.ndarray, z: np.ndarray) -> np.ndarray:
        std = self._std_np()
        base = -0.5 * (((z - mean) / std) ** 2 + np.log(2.0 * np.pi)) - np.log(std)
        correction = _log_sigmoid_2x(z) + np.log(self._scale)
        return (base - correction).sum(axis=-1)

    # tape path --------------------------------------------------------------

    def _std_t(self) -> Tensor:
        return self.log_std.clip(LOG_STD_MIN, LOG_STD_MAX).exp()

    def log_prob_t(self, obs, z) -> Tensor:
        """Differentiable log-density of stored pre-squash draws ``z``."""
        mean = self.trunk(obs)
        std = self._std_t()
        zt = Tensor._lift(z)
        base = ((zt - mean) / std) ** 2.0 * -0.5 - std.log() \
            + (-0.5 * np.log(2.0 * np.pi))
        # z is a stored constant here, so the squash correction carries no grad
        corr_const = Tensor(_log_sigmoid_2x(np.asarray(zt.data)) + np.log(self._scale))
        return (base - corr_const).sum(axis=-1)

    def rsample_t(self, obs, eps: np.ndarray):
        """Reparametrized draw with fixed standard-normal noise ``eps``.

        Returns (action, log_prob), both differentiable w.r.t. parameters.
        """
        mean = self.trunk(obs)
        std = self._std_t()
        z = mean + std * eps
        tanh_z = z.tanh()
        action = tanh_z * self._scale + self._mid
        base = (Tensor._lift(eps) ** 2.0 * -0.5 - std.log()
                + (-0.5 * np.log(2.0 * np.pi)))
        # log(1 - tanh(z)^2) via the stable softplus identity, differentiably
        log_jac = ((-2.0 * z).softplus() + z - np.log(2.0)) * -2.0 + np.log(self._scale)
        return action, (base - log_jac).sum(axis=-1)

    def entropy_mc_np(self, obs, rng, n=10000):
        """Monte Carlo entropy estimate of the squashed density at one state."""
        mean = self.trunk.forward_np(np.broadcast_to(obs, (n, self.obs_dim)).copy())
        std = self._std_np()
        z = mean + std * rng.standard_normal(mean.shape)
        return float(-self.log_prob_np(mean, z).mean())


class Adam:
    """Bias-corrected Adam over an ordered parameter list."""

    def __init__(self, params, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise DomainError("non-finite gradient in Adam update")
            g = g.astype(p.data.dtype)
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / b1t
            v_hat = self.v[i] / b2t
            p.data = p.data - (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.data.dtype)
            if not np.all(np.isfinite(p.data)):
                raise DomainError("non-finite parameter after Adam update")

    def zero_grad(self):
        for p in self.params:
            p.grad = None


def grad_check(loss_fn, params, eps=1e-5, n_coords=64, rng=None) -> float:
    """Max relative error between backward() and central finite differences.

    ``loss_fn`` must rebuild the loss from current ``param.data``. Checks at
    least ``n_coords`` randomly chosen coordinates across all parameters.
    Intended to be run with float64 parameters.
    """
    if not eps > 0.0:
        raise DomainError("eps must be positive")
    rng = rng or np.random.default_rng(0)
    loss = loss_fn()
    loss.backward()
    analytic = [p.grad.copy() for p in params]

    total = sum(p.data.size for p in params)
    n = min(n_coords, total)
    picks = rng.choice(total, size=n, replace=False)
    worst = 0.0
    for flat_idx in picks:
        pi, offset = 0, int(flat_idx)
        while offset >= params[pi].data.size:
            offset -= params[pi].data.size
            pi += 1
        p = params[pi]
        idx = np.unravel_index(offset, p.data.shape)
        orig = p.data[idx]
        p.data[idx] = orig + eps
        up = float(loss_fn().data)
        p.data[idx] = orig - eps
        down = float(loss_fn().data)
        p.data[idx] = orig
        numeric = (up - down) / (2.0 * eps)
        a = float(analytic[pi][idx])
        denom = max(abs(a), abs(numeric), 1e-8)
        worst = max(worst, abs(a - numeric) / denom)
    return worst


# -- checkpoint format -------------------------------------------------------

def save_checkpoint(path, arrays, header: dict | None = None):
    """Write the versioned checkpoint: text header, blank line, binary records.

    Each record is ``<u32 id><u32 ndim><u32 dims...><f32 little-endian values>``.
    """
    buf = io.BytesIO()
    lines = [CKPT_MAGIC]
    for k, v in (header or {}).items():
        lines.append(f"{k}={v}")
    buf.write(("\n".join(lines) + "\n\n").encode("ascii"))
    for pid, a in enumerate(arrays):
        a32 = np.ascontiguousarray(a, dtype="<f4")
        buf.write(struct.pack("<II", pid, a32.ndim))
        buf.write(struct.pack(f"<{a32.ndim}I", *a32.shape))
        buf.write(a32.tobytes())
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_checkpoint(path):
    """Read a checkpoint; returns (arrays, header dict)."""
    with open(path, "rb") as f:
        raw = f.read()
    sep = raw.index(b"\n\n")
    lines = raw[:sep].decode("ascii").split("\n")
    if lines[0] != CKPT_MAGIC:
        raise UsageError(f"unsupported checkpoint version: {lines[0]!r}")
    header = {}
    for line in lines[1:]:
        k, _, v = line.partition("=")
        header[k] = v
    arrays = []
    pos = sep + 2
    while pos < len(raw):
        pid, ndim = struct.unpack_from("<II", raw, pos)
        pos += 8
        shape = struct.unpack_from(f"<{ndim}I", raw, pos)
        pos += 4 * ndim
        count = int(np.prod(shape)) if ndim else 1
        a = np.frombuffer(raw, dtype="<f4", count=count, offset=pos).reshape(shape)
        pos += 4 * count
        if pid != len(arrays):
            raise UsageError("checkpoint records out of order")
        arrays.append(a.copy())
    return arrays, header
