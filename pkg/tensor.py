"""
tensor.py — Minimal reverse-mode autodiff over numpy arrays.

Only what the translation networks need: broadcasting arithmetic, matmul,
reductions, a handful of activations, gather, logsumexp, 2-D convolution
(cross-correlation), instance norm, nearest upsampling, Adam, and a checkpoint
codec. Every op checks its output is finite; NaN/Inf raises NumericError.

Gradients accumulate into leaf tensors only; intermediate gradients live in a
scratch dict for the duration of one backward pass.
"""

from __future__ import annotations

import json
import logging
import struct
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

import artifacts
import config
from errors import NumericError, Sim2RealError

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"S2RCKPT1"


class ShapeError(Sim2RealError, ValueError):
    pass


class CheckpointError(Sim2RealError, ValueError):
    pass


# ── Global mode ──────────────────────────────────────────────────────────────

_dtype = np.dtype(config.PRECISION if config.PRECISION in ("float32", "float64") else "float32")
_grad_enabled = True


def default_dtype() -> np.dtype:
    return _dtype


@contextmanager
def precision(dtype: str | np.dtype):
    """Temporarily switch the dtype new tensors are created with."""
    global _dtype
    previous, _dtype = _dtype, np.dtype(dtype)
    if _dtype not in (np.float32, np.float64):
        _dtype = previous
        raise ValueError(f"unsupported precision {dtype!r}; use float32 or float64")
    try:
        yield
    finally:
        _dtype = previous


@contextmanager
def no_grad():
    global _grad_enabled
    previous, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = previous


# ── Tensor ───────────────────────────────────────────────────────────────────

Backward = Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, *, dtype=None):
        self.data = np.asarray(data, dtype=dtype or _dtype)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Backward | None = None
        self.op = "leaf"

    # -- construction helpers --

    @staticmethod
    def _result(data: np.ndarray, parents: tuple["Tensor", ...], backward: Backward, op: str) -> "Tensor":
        if not np.all(np.isfinite(data)):
            raise NumericError(f"numeric error: {op} produced NaN/Inf")
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        out.op = op
        track = _grad_enabled and any(p.requires_grad for p in parents)
        out.requires_grad = track
        out._parents = parents if track else ()
        out._backward = backward if track else None
        return out

    # -- introspection --

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def values(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    # -- arithmetic --

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    # -- method forms --

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, axes: Sequence[int]):
        return transpose(self, axes)

    def take(self, indices, axis: int):
        return take(self, indices, axis)

    def exp(self):
        return exp(self)

    def log(self):
        return log_(self)

    def sqrt(self):
        return sqrt(self)

    # -- autodiff --

    def backward(self) -> None:
        """Populate .grad of every requires_grad leaf reachable from this scalar."""
        if self.data.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            return
        order = _topological_order(self)
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = np.array(g, copy=True) if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg


def _topological_order(root: Tensor) -> list[Tensor]:
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
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _normalize_axes(axis, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


# ── Elementwise ──────────────────────────────────────────────────────────────

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor._result(
        a.data + b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        "add",
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor._result(
        a.data - b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
        "sub",
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor._result(
        a.data * b.data, (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        "mul",
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor._result(
        a.data / b.data, (a, b),
        lambda g: (_unbroadcast(g / b.data, a.shape), _unbroadcast(-g * a.data / (b.data * b.data), b.shape)),
        "div",
    )


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    return Tensor._result(
        a.data ** exponent, (a,),
        lambda g: (g * exponent * a.data ** (exponent - 1),),
        "pow",
    )


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return Tensor._result(out, (a,), lambda g: (g * out,), "exp")


def log_(a) -> Tensor:
    a = as_tensor(a)
    return Tensor._result(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return Tensor._result(out, (a,), lambda g: (g / (2.0 * out),), "sqrt")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return Tensor._result(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return Tensor._result(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return Tensor._result(a.data * mask, (a,), lambda g: (g * mask,), "relu")


def leaky_relu(a, slope: float = 0.2) -> Tensor:
    a = as_tensor(a)
    scale = np.where(a.data > 0, 1.0, slope).astype(a.data.dtype)
    return Tensor._result(a.data * scale, (a,), lambda g: (g * scale,), "leaky_relu")


# ── Linear algebra & reductions ──────────────────────────────────────────────

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs operands with ndim >= 2, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def backward(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape) if a.requires_grad else None
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor._result(a.data @ b.data, (a, b), backward, "matmul")


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _normalize_axes(axis, a.ndim)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape),)

    return Tensor._result(np.asarray(a.data.sum(axis=axes, keepdims=keepdims)), (a,), backward, "sum")


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _normalize_axes(axis, a.ndim)
    count = int(np.prod([a.shape[i] for i in axes])) if axes else 1
    return tsum(a, axes, keepdims) * (1.0 / count)


def logsumexp(a, axis: int = -1, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    m = a.data.max(axis=axis, keepdims=True)
    shifted = np.exp(a.data - m)
    total = shifted.sum(axis=axis, keepdims=True)
    out = m + np.log(total)
    softmax = shifted / total

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (g * softmax,)

    return Tensor._result(out if keepdims else np.squeeze(out, axis=axis), (a,), backward, "logsumexp")


# ── Shape ops ────────────────────────────────────────────────────────────────

def reshape(a, shape: tuple[int, ...]) -> Tensor:
    a = as_tensor(a)
    return Tensor._result(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a, axes: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return Tensor._result(a.data.transpose(axes), (a,), lambda g: (g.transpose(inverse),), "transpose")


def take(a, indices, axis: int) -> Tensor:
    """Gather along one axis; repeated indices accumulate in the gradient."""
    a = as_tensor(a)
    idx = np.asarray(indices, dtype=np.intp)
    axis = axis % a.ndim

    def backward(g):
        ga = np.zeros_like(a.data)
        np.add.at(np.moveaxis(ga, axis, 0), idx, np.moveaxis(g, axis, 0))
        return (ga,)

    return Tensor._result(np.take(a.data, idx, axis=axis), (a,), backward, "take")


def pad2d(a, top: int, bottom: int, left: int, right: int) -> Tensor:
    """Zero padding of the last two axes."""
    a = as_tensor(a)
    if min(top, bottom, left, right) < 0:
        raise ShapeError("padding must be non-negative")
    width = [(0, 0)] * (a.ndim - 2) + [(top, bottom), (left, right)]
    h, w = a.shape[-2:]
    return Tensor._result(
        np.pad(a.data, width), (a,),
        lambda g: (g[..., top:top + h, left:left + w],),
        "pad2d",
    )


def crop2d(a, top: int, left: int, height: int, width: int) -> Tensor:
    a = as_tensor(a)
    h, w = a.shape[-2:]
    if top < 0 or left < 0 or top + height > h or left + width > w:
        raise ShapeError(f"crop ({top}, {left}, {height}, {width}) exceeds extent {h}x{w}")

    def backward(g):
        return (np.pad(g, [(0, 0)] * (a.ndim - 2) + [(top, h - top - height), (left, w - left - width)]),)

    return Tensor._result(a.data[..., top:top + height, left:left + width], (a,), backward, "crop2d")


def upsample_nearest(a, factor: int) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 4 or factor < 1:
        raise ShapeError(f"upsample_nearest needs NCHW input and factor >= 1, got {a.shape}, {factor}")
    n, c, h, w = a.shape
    out = a.data.repeat(factor, axis=2).repeat(factor, axis=3)
    return Tensor._result(
        out, (a,),
        lambda g: (g.reshape(n, c, h, factor, w, factor).sum(axis=(3, 5)),),
        "upsample_nearest",
    )


def l2_normalize(a, axis: int = -1, eps: float = 1e-12) -> Tensor:
    a = as_tensor(a)
    return a / sqrt(tsum(a * a, axis, keepdims=True) + eps)


# ── Convolution & normalisation ──────────────────────────────────────────────

def conv_output_extent(size: int, kernel: int, stride: int, pad: int) -> int:
    padded = size + 2 * pad
    if kernel > padded:
        raise ShapeError(f"kernel {kernel} does not fit padded extent {padded}")
    if (padded - kernel) % stride:
        raise ShapeError(
            f"non-integral output extent: ({size} + 2*{pad} - {kernel}) / {stride} is not a whole number"
        )
    return (padded - kernel) // stride + 1


def conv2d(x, weight, bias=None, stride: int = 1, pad: int = 0) -> Tensor:
    """Cross-correlation of x[N,C,H,W] with weight[F,C,kh,kw] via im2col."""
    x, weight = as_tensor(x), as_tensor(weight)
    bias = as_tensor(bias) if bias is not None else None
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"conv2d needs 4-D input and weight, got {x.shape} and {weight.shape}")
    n, c, h, w = x.shape
    f, cw, kh, kw = weight.shape
    if c != cw:
        raise ShapeError(f"conv2d channel mismatch: input has {c}, weight expects {cw}")
    if bias is not None and bias.shape != (f,):
        raise ShapeError(f"conv2d bias must have shape ({f},), got {bias.shape}")
    if stride < 1 or pad < 0:
        raise ShapeError(f"conv2d needs stride >= 1 and pad >= 0, got {stride}, {pad}")
    ho = conv_output_extent(h, kh, stride, pad)
    wo = conv_output_extent(w, kw, stride, pad)
    hp, wp = h + 2 * pad, w + 2 * pad

    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
    wmat = weight.data.reshape(f, c * kh * kw)
    out = cols @ wmat.T
    if bias is not None:
        out = out + bias.data
    out = np.ascontiguousarray(out.reshape(n, ho, wo, f).transpose(0, 3, 1, 2))

    def backward(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, f)
        gw = (g2.T @ cols).reshape(weight.shape) if weight.requires_grad else None
        gb = g2.sum(axis=0) if bias is not None and bias.requires_grad else None
        gx = None
        if x.requires_grad:
            dcols = (g2 @ wmat).reshape(n, ho, wo, c, kh, kw)
            gxp = np.zeros((n, c, hp, wp), dtype=g.dtype)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += (
                        dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
                    )
            gx = gxp[:, :, pad:pad + h, pad:pad + w] if pad else gxp
        return (gx, gw) if bias is None else (gx, gw, gb)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._result(out, parents, backward, "conv2d")


def instance_norm(x, weight=None, bias=None, eps: float = 1e-5) -> Tensor:
    """Per-(sample, channel) standardisation over H, W, then optional affine."""
    if eps <= 0:
        raise ValueError(f"instance_norm eps must be > 0 (got {eps})")
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"instance_norm needs NCHW input, got {x.shape}")
    centred = x - mean(x, (2, 3), keepdims=True)
    var = mean(centred * centred, (2, 3), keepdims=True)
    out = centred / sqrt(var + eps)
    c = x.shape[1]
    if weight is not None:
        out = out * reshape(as_tensor(weight), (1, c, 1, 1))
    if bias is not None:
        out = out + reshape(as_tensor(bias), (1, c, 1, 1))
    return out


# ── Optimiser ────────────────────────────────────────────────────────────────

@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray | None],
    state: AdamState,
    lr: float,
    beta1: float = 0.5,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update. Returns new arrays; inputs are untouched."""
    step = state.step + 1
    new_params, new_m, new_v = {}, {}, {}
    c1 = 1.0 - beta1 ** step
    c2 = 1.0 - beta2 ** step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, parameter has {p.shape}")
        m = beta1 * state.m.get(name, np.zeros_like(p)) + (1.0 - beta1) * g
        v = beta2 * state.v.get(name, np.zeros_like(p)) + (1.0 - beta2) * g * g
        update = lr * (m / c1) / (np.sqrt(v / c2) + eps)
        new_params[name] = (p - update).astype(p.dtype, copy=False)
        new_m[name], new_v[name] = m, v
    return new_params, AdamState(step, new_m, new_v)


class Adam:
    """Stateful wrapper applying adam_step to named parameter tensors."""

    def __init__(self, params: Mapping[str, Tensor], lr: float, beta1: float = 0.5,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = dict(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.state = AdamState()

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        values = {k: p.data for k, p in self.params.items()}
        grads = {k: p.grad for k, p in self.params.items()}
        updated, state = adam_step(values, grads, self.state, self.lr, self.beta1, self.beta2, self.eps)
        for k, arr in updated.items():
            if not np.all(np.isfinite(arr)):
                raise NumericError(f"numeric error: Adam update of {k} produced NaN/Inf")
        self.state = state
        for k, p in self.params.items():
            p.data = updated[k]


# ── Finite differences ───────────────────────────────────────────────────────

def gradcheck(fn: Callable[..., Tensor], inputs: Sequence[Tensor], eps: float = 1e-4) -> float:
    """Max error between backward() and central differences, over all inputs.

    The error is max|analytic - numeric| / max(1, max|numeric|) per input, so
    it is relative for large gradients and absolute for small ones.
    """
    for t in inputs:
        t.grad = None
    loss = fn(*inputs)
    loss.backward()
    worst = 0.0
    for t in inputs:
        if not t.requires_grad:
            continue
        numeric = np.zeros_like(t.data, dtype=np.float64)
        flat = t.data.reshape(-1)
        with no_grad():
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                plus = fn(*inputs).item()
                flat[i] = orig - eps
                minus = fn(*inputs).item()
                flat[i] = orig
                numeric.reshape(-1)[i] = (plus - minus) / (2.0 * eps)
        analytic = t.grad if t.grad is not None else np.zeros_like(numeric)
        err = float(np.max(np.abs(analytic - numeric))) / max(1.0, float(np.max(np.abs(numeric))))
        worst = max(worst, err)
    return worst


# ── Checkpoints ──────────────────────────────────────────────────────────────

def encode_checkpoint(tensors: Mapping[str, np.ndarray | Tensor], meta: dict | None = None) -> bytes:
    """S2RCKPT1 | u64 LE manifest length | JSON manifest | float32 LE payloads."""
    entries, payloads = [], []
    for name, value in tensors.items():
        arr = value.data if isinstance(value, Tensor) else np.asarray(value)
        entries.append({"name": name, "shape": list(arr.shape), "dtype": "float32le"})
        payloads.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    manifest = json.dumps({"tensors": entries, "meta": meta or {}}, sort_keys=True, separators=(",", ":"))
    blob = manifest.encode("utf-8")
    return CHECKPOINT_MAGIC + struct.pack("<Q", len(blob)) + blob + b"".join(payloads)


def decode_checkpoint(data: bytes) -> tuple[dict[str, np.ndarray], dict]:
    if not data.startswith(CHECKPOINT_MAGIC):
        raise CheckpointError("not a checkpoint: bad magic bytes")
    offset = len(CHECKPOINT_MAGIC)
    if len(data) < offset + 8:
        raise CheckpointError("truncated checkpoint header")
    (length,) = struct.unpack_from("<Q", data, offset)
    offset += 8
    try:
        manifest = json.loads(data[offset:offset + length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"checkpoint manifest unreadable: {exc}") from exc
    offset += length
    tensors = {}
    for entry in manifest.get("tensors", []):
        if entry.get("dtype") != "float32le":
            raise CheckpointError(f"unsupported dtype {entry.get('dtype')!r} for {entry.get('name')}")
        shape = tuple(int(s) for s in entry["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * 4
        if offset + nbytes > len(data):
            raise CheckpointError(f"checkpoint payload truncated at {entry['name']}")
        tensors[entry["name"]] = np.frombuffer(data, dtype="<f4", count=nbytes // 4, offset=offset).reshape(shape).copy()
        offset += nbytes
    if offset != len(data):
        raise CheckpointError(f"checkpoint has {len(data) - offset} trailing bytes")
    return tensors, manifest.get("meta", {})


def save_checkpoint(path: str | Path, tensors: Mapping[str, np.ndarray | Tensor], meta: dict | None = None) -> Path:
    return artifacts.atomic_write_bytes(path, encode_checkpoint(tensors, meta))


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    return decode_checkpoint(Path(path).read_bytes())


def stack_images(arrays: Iterable[np.ndarray]) -> Tensor:
    """List of (H, W) arrays → constant Tensor[N, 1, H, W]."""
    arrays = [np.asarray(a) for a in arrays]
    if not arrays:
        raise ShapeError("cannot stack an empty image list")
    first = arrays[0].shape
    for a in arrays:
        if a.shape != first:
            raise ShapeError(f"image dims differ: {a.shape} vs {first}")
    return Tensor(np.stack(arrays)[:, None, :, :])
