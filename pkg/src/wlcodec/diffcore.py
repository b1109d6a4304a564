"""Minimal reverse-mode autodiff core for training the codec transforms.

A recorded-tape design: every operation returns a :class:`Tensor` that keeps
references to its parents and a closure that scatters the upstream gradient
back to them. :func:`backward` walks the graph in reverse topological order.
Only the operations the codec actually needs exist here; there is no
broadcasting engine, no striding, no normalization layers.

All ops compute in the dtype of their inputs, so graphs can be built in
float64 for finite-difference checking and float32 for production training.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy.special import expit, ndtr, ndtri

__all__ = [
    "GraphError",
    "Tensor",
    "backward",
    "dense",
    "conv1d",
    "conv2d",
    "silu",
    "add",
    "add_const",
    "scale",
    "move_axis",
    "reshape",
    "mean",
    "mse",
    "linear_op",
    "compand_op",
    "decompand_op",
    "hard_round",
    "residual_block",
    "Adam",
    "grad_check",
]

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)

# companded values stay strictly inside (-HALF, HALF); see codec module
_COMPAND_HALF = 127.5
_COMPAND_CLIP = 127.5 - 1e-4
_DECOMPAND_EPS = 1e-6


class GraphError(RuntimeError):
    """Raised for invalid use of the tape (no recorded forward, or a
    non-differentiable node on the backward path)."""


class Tensor:
    """A node in the recorded computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _result(data, parents: Sequence[Tensor], backward_fn) -> Tensor:
    out = Tensor(data)
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, copy=True)
    else:
        t.grad += g


def backward(root: Tensor) -> None:
    """Accumulate gradients of a scalar ``root`` into every reachable
    ``requires_grad`` tensor's ``.grad``."""
    if root.data.size != 1:
        raise ValueError("backward requires a scalar root")
    if root._backward is None and not root._parents:
        raise GraphError("backward called on a tensor with no recorded forward pass")
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    root.grad = np.ones_like(root.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# elementwise / structural ops


def add(x: Tensor, y: Tensor) -> Tensor:
    if x.data.shape != y.data.shape:
        raise ValueError(f"add shape mismatch: {x.data.shape} vs {y.data.shape}")

    def bwd(g):
        _accum(x, g)
        _accum(y, g)

    return _result(x.data + y.data, (x, y), bwd)


def add_const(x: Tensor, c: np.ndarray) -> Tensor:
    """Add a constant offset (e.g. a frozen noise sample); gradient passes
    through unchanged."""

    def bwd(g):
        _accum(x, g)

    return _result(x.data + c, (x,), bwd)


def scale(x: Tensor, s: float) -> Tensor:
    def bwd(g):
        _accum(x, g * s)

    return _result(x.data * s, (x,), bwd)


def silu(x: Tensor) -> Tensor:
    sig = expit(x.data)
    out = x.data * sig

    def bwd(g):
        _accum(x, g * (sig + out * (1.0 - sig)))

    return _result(out, (x,), bwd)


def move_axis(x: Tensor, src: int, dst: int) -> Tensor:
    def bwd(g):
        _accum(x, np.moveaxis(g, dst, src))

    return _result(np.moveaxis(x.data, src, dst), (x,), bwd)


def reshape(x: Tensor, shape) -> Tensor:
    orig = x.data.shape

    def bwd(g):
        _accum(x, g.reshape(orig))

    return _result(x.data.reshape(shape), (x,), bwd)


def mean(x: Tensor, axes: tuple[int, ...]) -> Tensor:
    axes = tuple(a % x.data.ndim for a in axes)
    count = 1
    for a in axes:
        count *= x.data.shape[a]

    def bwd(g):
        ge = np.expand_dims(g, axes)
        _accum(x, np.broadcast_to(ge, x.data.shape) / count)

    return _result(x.data.mean(axis=axes), (x,), bwd)


def mse(x: Tensor, y: Tensor) -> Tensor:
    if x.data.shape != y.data.shape:
        raise ValueError(f"mse shape mismatch: {x.data.shape} vs {y.data.shape}")
    diff = x.data - y.data
    n = diff.size

    def bwd(g):
        s = 2.0 * float(g) / n
        _accum(x, s * diff)
        _accum(y, -s * diff)

    return _result(np.asarray(np.mean(diff * diff)), (x, y), bwd)


def linear_op(x: Tensor, forward_fn, adjoint_fn) -> Tensor:
    """Wrap an external linear map (e.g. a wavelet transform) given its exact
    adjoint; the adjoint is the reverse-mode gradient of a linear map."""

    def bwd(g):
        _accum(x, adjoint_fn(g))

    return _result(forward_fn(x.data), (x,), bwd)


def hard_round(x: Tensor) -> Tensor:
    """Round-half-away-from-zero. Forward-only: this node must never appear
    on a training path, and backward through it raises :class:`GraphError`."""
    rounded = np.sign(x.data) * np.floor(np.abs(x.data) + 0.5)

    def bwd(_g):
        raise GraphError(
            "hard rounding is not differentiable; training graphs must use "
            "the additive-noise bottleneck instead"
        )

    return _result(rounded, (x,), bwd)


# ---------------------------------------------------------------------------
# affine / convolutional ops


def dense(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Affine map along the trailing channel axis: (..., C_in) -> (..., C_out)."""
    if x.data.shape[-1] != w.data.shape[0]:
        raise ValueError(
            f"dense shape mismatch: input {x.data.shape[-1]} vs weights {w.data.shape[0]}"
        )
    if b.data.shape != (w.data.shape[1],):
        raise ValueError("dense bias must be shaped (C_out,)")
    out = x.data @ w.data + b.data

    def bwd(g):
        _accum(x, g @ w.data.T)
        x2 = x.data.reshape(-1, w.data.shape[0])
        g2 = g.reshape(-1, w.data.shape[1])
        _accum(w, x2.T @ g2)
        _accum(b, g2.sum(axis=0))

    return _result(out, (x, w, b), bwd)


def _check_conv_args(x: Tensor, k: Tensor, b: Tensor, dims: int):
    if x.data.ndim != dims + 2:
        raise ValueError(
            f"conv{dims}d expects a (batch, channels, ...) rank-{dims + 2} input, "
            f"got shape {x.data.shape}"
        )
    if k.data.ndim != dims + 2 or k.data.shape[2:] != (3,) * dims:
        raise ValueError(f"conv{dims}d kernel must be (C_out, C_in{', 3' * dims})")
    if x.data.shape[1] != k.data.shape[1]:
        raise ValueError(
            f"conv{dims}d channel mismatch: input {x.data.shape[1]} vs kernel {k.data.shape[1]}"
        )
    if b.data.shape != (k.data.shape[0],):
        raise ValueError("conv bias must be shaped (C_out,)")


def conv1d(x: Tensor, k: Tensor, b: Tensor) -> Tensor:
    """Size-3, stride-1, zero-padded ('same') 1D convolution over (B, C, N)."""
    _check_conv_args(x, k, b, 1)
    bsz, cin, n = x.data.shape
    cout = k.data.shape[0]
    xp = np.pad(x.data, ((0, 0), (0, 0), (1, 1)))
    win = np.lib.stride_tricks.sliding_window_view(xp, 3, axis=2)  # B,C,N,3
    cols = np.ascontiguousarray(win.transpose(0, 2, 1, 3)).reshape(bsz * n, cin * 3)
    kmat = k.data.reshape(cout, cin * 3)
    out = (cols @ kmat.T).reshape(bsz, n, cout).transpose(0, 2, 1) + b.data[None, :, None]

    def bwd(g):
        g2 = np.ascontiguousarray(g.transpose(0, 2, 1)).reshape(bsz * n, cout)
        _accum(k, (g2.T @ cols).reshape(cout, cin, 3))
        _accum(b, g.sum(axis=(0, 2)))
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for d in range(3):
                gxp[:, :, d : d + n] += np.tensordot(
                    g, k.data[:, :, d], axes=([1], [0])
                ).transpose(0, 2, 1)
            _accum(x, gxp[:, :, 1 : 1 + n])

    return _result(out, (x, k, b), bwd)


def conv2d(x: Tensor, k: Tensor, b: Tensor) -> Tensor:
    """Size-3x3, stride-1, zero-padded ('same') 2D convolution over (B, C, H, W)."""
    _check_conv_args(x, k, b, 2)
    bsz, cin, h, w = x.data.shape
    cout = k.data.shape[0]
    xp = np.pad(x.data, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(2, 3))
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(
        bsz * h * w, cin * 9
    )
    kmat = k.data.reshape(cout, cin * 9)
    out = (cols @ kmat.T).reshape(bsz, h, w, cout).transpose(0, 3, 1, 2)
    out += b.data[None, :, None, None]

    def bwd(g):
        g2 = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(bsz * h * w, cout)
        _accum(k, (g2.T @ cols).reshape(cout, cin, 3, 3))
        _accum(b, g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for di in range(3):
                for dj in range(3):
                    contrib = np.tensordot(g, k.data[:, :, di, dj], axes=([1], [0]))
                    gxp[:, :, di : di + h, dj : dj + w] += contrib.transpose(0, 3, 1, 2)
            _accum(x, gxp[:, :, 1 : 1 + h, 1 : 1 + w])

    return _result(out, (x, k, b), bwd)


def residual_block(x: Tensor, ka: Tensor, ba: Tensor, kb: Tensor, bb: Tensor, dims: int) -> Tensor:
    """conv3 -> SiLU -> conv3 with an identity skip; channel-preserving.

    With all weights and biases zero the block is exactly the identity.
    """
    conv = conv1d if dims == 1 else conv2d
    return add(x, conv(silu(conv(x, ka, ba)), kb, bb))


# ---------------------------------------------------------------------------
# companding ops (scaled Gaussian CDF and its inverse, per-channel scales)


def _sigma_bcast(log_sigma: np.ndarray, ndim_after_channel: int) -> np.ndarray:
    return np.exp(log_sigma).reshape(log_sigma.shape + (1,) * ndim_after_channel)


def compand_op(z: Tensor, log_sigma: Tensor) -> Tensor:
    """Map latents through 255*(Phi(z/sigma) - 1/2), sigma per channel.

    ``z`` is (B, C, *spatial); ``log_sigma`` is (C,). Output lies strictly
    inside (-127.5, 127.5).
    """
    spatial = z.data.ndim - 2
    sig = _sigma_bcast(log_sigma.data, spatial)[None]
    t = z.data / sig
    y = 255.0 * (ndtr(t) - 0.5)
    np.clip(y, -_COMPAND_CLIP, _COMPAND_CLIP, out=y)

    def bwd(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * t * t)
        _accum(z, g * 255.0 * pdf / sig)
        if log_sigma.requires_grad:
            per = g * (-255.0) * pdf * t
            _accum(log_sigma, per.sum(axis=(0,) + tuple(range(2, per.ndim))))

    return _result(y, (z, log_sigma), bwd)


def decompand_op(y: Tensor, log_sigma: Tensor) -> Tensor:
    """Inverse of :func:`compand_op`: sigma * Phi^-1(clamp(y/255 + 1/2))."""
    spatial = y.data.ndim - 2
    sig = _sigma_bcast(log_sigma.data, spatial)[None]
    p_raw = y.data / 255.0 + 0.5
    p = np.clip(p_raw, _DECOMPAND_EPS, 1.0 - _DECOMPAND_EPS)
    q = ndtri(p)
    z = sig * q

    def bwd(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * q * q)
        inside = (p_raw > _DECOMPAND_EPS) & (p_raw < 1.0 - _DECOMPAND_EPS)
        _accum(y, g * inside * sig / (255.0 * pdf))
        if log_sigma.requires_grad:
            per = g * z
            _accum(log_sigma, per.sum(axis=(0,) + tuple(range(2, per.ndim))))

    return _result(z, (y, log_sigma), bwd)


# ---------------------------------------------------------------------------
# optimizer


class Adam:
    """Standard Adam with bias correction; parameters update in place."""

    def __init__(self, params: dict[str, np.ndarray], lr: float = 1e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m = {k: np.zeros_like(v) for k, v in params.items()}
        self._v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1**t
        c2 = 1.0 - self.beta2**t
        for name, p in self.params.items():
            g = grads.get(name)
            if g is None:
                continue
            if g.shape != p.shape:
                raise ValueError(f"gradient shape mismatch for {name!r}")
            if not np.all(np.isfinite(g)):
                raise ValueError(f"non-finite gradient for parameter {name!r}")
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# ---------------------------------------------------------------------------
# finite-difference gradient checking


def grad_check(
    build_loss: Callable[[dict[str, Tensor]], Tensor],
    params: dict[str, np.ndarray],
    probes: int = 10,
    h: float = 1e-4,
    seed: int = 0,
) -> float:
    """Compare analytic and central-difference gradients on random entries.

    ``build_loss`` must be deterministic (freeze any noise before calling).
    Returns the maximum relative error over all probed parameter entries.
    """
    work = {k: np.array(v, dtype=np.float64) for k, v in params.items()}

    def loss_value(p):
        tensors = {k: Tensor(v) for k, v in p.items()}
        return float(build_loss(tensors).data)

    tensors = {k: Tensor(v, requires_grad=True) for k, v in work.items()}
    out = build_loss(tensors)
    backward(out)
    analytic = {k: t.grad for k, t in tensors.items()}

    rng = np.random.default_rng(seed)
    names = sorted(work)
    worst = 0.0
    for _ in range(probes):
        name = names[int(rng.integers(len(names)))]
        if work[name].size == 0:
            continue
        flat = int(rng.integers(work[name].size))
        orig = work[name].flat[flat]
        work[name].flat[flat] = orig + h
        f_plus = loss_value(work)
        work[name].flat[flat] = orig - h
        f_minus = loss_value(work)
        work[name].flat[flat] = orig
        fd = (f_plus - f_minus) / (2.0 * h)
        a = 0.0 if analytic[name] is None else float(analytic[name].flat[flat])
        rel = abs(a - fd) / max(abs(a) + abs(fd), 1e-8)
        worst = max(worst, rel)
    return worst
