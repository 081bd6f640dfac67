"""Dense real tensors with a minimal reverse-mode autodiff engine.

The engine records forward operations on an explicit tape (a Wengert list):
every op appends one node holding the ids of its inputs and a closure that
maps the upstream gradient to gradients for those inputs.  Running the tape
in reverse therefore visits each node exactly once and only ever sees inputs
that were created earlier.

Tensors are treated as immutable values once created.  Training mutability
lives in :class:`Param`, which owns a value tensor and a gradient buffer.

Only two broadcasting forms are supported by the arithmetic ops: scalar vs.
tensor, and a per-channel bias over the last axis (``add_bias``).  Everything
else must be reshaped explicitly; shape mismatches raise ``ShapeError``.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

_DEFAULT_DTYPE = np.float32


class ShapeError(ValueError):
    """Raised when operand shapes violate an op's contract."""


def set_default_dtype(dtype) -> None:
    """Set the floating dtype used for newly created tensors (float32/float64)."""
    global _DEFAULT_DTYPE
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {dtype!r}; use np.float32 or np.float64")
    _DEFAULT_DTYPE = dtype


def get_default_dtype():
    return _DEFAULT_DTYPE


@contextmanager
def using_dtype(dtype):
    """Temporarily switch the default dtype (gradient checks run under float64)."""
    prev = get_default_dtype()
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(prev)


class Tensor:
    """A dense multi-dimensional real value, contiguous and row-major.

    Floating numpy inputs keep their dtype (ops must not silently change
    precision mid-graph); anything else is cast to the default dtype.
    """

    __slots__ = ("data",)

    def __init__(self, data, dtype=None):
        if dtype is None:
            if isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64):
                dtype = data.dtype
            else:
                dtype = _DEFAULT_DTYPE
        arr = np.asarray(data, dtype=dtype)
        # ascontiguousarray would promote 0-d scalars to 1-d
        self.data = np.ascontiguousarray(arr) if arr.ndim else arr

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name})"


def as_tensor(x, dtype=None) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x, dtype=dtype)


def zeros(shape, dtype=None) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype or _DEFAULT_DTYPE))


def ones(shape, dtype=None) -> Tensor:
    return Tensor(np.ones(shape, dtype=dtype or _DEFAULT_DTYPE))


# ---------------------------------------------------------------------------
# Tape
# ---------------------------------------------------------------------------

class _Node:
    __slots__ = ("out_id", "parent_ids", "backward_fn")

    def __init__(self, out_id, parent_ids, backward_fn):
        self.out_id = out_id
        self.parent_ids = parent_ids
        self.backward_fn = backward_fn


_ACTIVE_TAPE: Optional["Tape"] = None


class Tape:
    """Append-only record of forward ops, replayed in reverse for gradients."""

    def __init__(self):
        self.nodes: list[_Node] = []
        self._live: list[Tensor] = []  # keeps intermediate tensors alive for id stability

    def __enter__(self) -> "Tape":
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise RuntimeError("a Tape is already active; tapes do not nest")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, *exc) -> None:
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None

    def backward(self, loss: Tensor, params: Iterable["Param"] = ()) -> dict:
        """Accumulate d(loss)/d(x) for every tensor on the tape.

        ``loss`` must be a scalar recorded on this tape.  Gradients are
        accumulated into ``param.grad`` for each param whose value tensor was
        reachable; unreachable params keep their existing (zero) grad.
        Returns the raw ``id(tensor) -> ndarray`` gradient map.
        """
        if loss.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        grads: dict[int, np.ndarray] = {
            id(loss): np.ones(loss.shape, dtype=loss.dtype)
        }
        for node in reversed(self.nodes):
            g = grads.pop(node.out_id, None)
            if g is None:
                continue
            parent_grads = node.backward_fn(g)
            for pid, pg in zip(node.parent_ids, parent_grads):
                if pg is None:
                    continue
                acc = grads.get(pid)
                grads[pid] = pg if acc is None else acc + pg
        for p in params:
            g = grads.get(id(p.value))
            if g is not None:
                p.grad += g.reshape(p.grad.shape)
        return grads


def _record(out: Tensor, parents: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    tape = _ACTIVE_TAPE
    if tape is not None:
        tape.nodes.append(_Node(id(out), tuple(id(p) for p in parents), backward_fn))
        tape._live.append(out)
        tape._live.extend(parents)
    return out


def record(out: Tensor, parents: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    """Public hook for modules that define their own differentiable ops."""
    return _record(out, parents, backward_fn)


def tape_active() -> bool:
    return _ACTIVE_TAPE is not None


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

class Param:
    """A named learnable tensor with a persistent gradient buffer."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, value, name: str = ""):
        self.name = name
        # learnables always live in the configured training precision
        self.value = value if isinstance(value, Tensor) else Tensor(value, dtype=_DEFAULT_DTYPE)
        self.grad = np.zeros(self.value.shape, dtype=self.value.dtype)

    @property
    def shape(self) -> tuple:
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad[...] = 0

    def assign(self, data: np.ndarray) -> None:
        """Replace the value (optimizer updates); grad buffer is kept."""
        if data.shape != self.value.shape:
            raise ShapeError(f"assign shape {data.shape} != param shape {self.value.shape}")
        self.value = Tensor(data, dtype=self.value.dtype)

    def __repr__(self) -> str:
        return f"Param({self.name or '<anon>'}, shape={self.value.shape})"


def xavier_uniform(shape, fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    a = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape).astype(_DEFAULT_DTYPE)


# ---------------------------------------------------------------------------
# Multiply counting (complexity instrumentation)
# ---------------------------------------------------------------------------

_FLOP_COUNTER: Optional[list] = None


@contextmanager
def count_flops():
    """Count multiply-accumulate work (2*M*K*N style) of matmul/conv-class ops."""
    global _FLOP_COUNTER
    prev = _FLOP_COUNTER
    box = [0]
    _FLOP_COUNTER = box
    try:
        yield box
    finally:
        _FLOP_COUNTER = prev


def add_flops(n: int) -> None:
    if _FLOP_COUNTER is not None:
        _FLOP_COUNTER[0] += int(n)


# ---------------------------------------------------------------------------
# Elementwise and arithmetic ops
# ---------------------------------------------------------------------------

def _check_binary_shapes(a: Tensor, b: Tensor, opname: str) -> None:
    if a.shape == b.shape or a.size == 1 or b.size == 1:
        return
    raise ShapeError(f"{opname}: shapes {a.shape} and {b.shape} are incompatible "
                     "(only scalar broadcasting is supported)")


def _reduce_to(g: np.ndarray, shape: tuple) -> np.ndarray:
    # gradient of a scalar operand broadcast against a tensor
    if g.shape == shape:
        return g
    return np.sum(g).reshape(shape) if np.prod(shape, dtype=int) == 1 else g.reshape(shape)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_binary_shapes(a, b, "add")
    out = Tensor(a.data + b.data)

    def bw(g):
        return _reduce_to(g, a.shape), _reduce_to(g, b.shape)

    return _record(out, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_binary_shapes(a, b, "sub")
    out = Tensor(a.data - b.data)

    def bw(g):
        return _reduce_to(g, a.shape), _reduce_to(-g, b.shape)

    return _record(out, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_binary_shapes(a, b, "mul")
    ad, bd = a.data, b.data
    out = Tensor(ad * bd)

    def bw(g):
        return _reduce_to(g * bd, a.shape), _reduce_to(g * ad, b.shape)

    return _record(out, (a, b), bw)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_binary_shapes(a, b, "div")
    ad, bd = a.data, b.data
    out = Tensor(ad / bd)

    def bw(g):
        return _reduce_to(g / bd, a.shape), _reduce_to(-g * ad / (bd * bd), b.shape)

    return _record(out, (a, b), bw)


def neg(a: Tensor) -> Tensor:
    out = Tensor(-a.data)
    return _record(out, (a,), lambda g: (-g,))


def scale(a: Tensor, s: float) -> Tensor:
    """Multiply by a plain (non-learnable) python scalar."""
    s = float(s)
    out = Tensor(a.data * s)
    return _record(out, (a,), lambda g: (g * s,))


def take_scalar(a: Tensor, index: int) -> Tensor:
    """Extract one element (by flat index) as a scalar tensor."""
    flat = a.data.reshape(-1)
    if not 0 <= index < flat.size:
        raise ShapeError(f"take_scalar: index {index} out of range for {a.shape}")
    out = Tensor(np.asarray(flat[index], dtype=a.dtype))

    def bw(g):
        full = np.zeros(a.shape, dtype=g.dtype)
        full.reshape(-1)[index] = np.asarray(g).reshape(())
        return (full,)

    return _record(out, (a,), bw)


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Per-channel bias over the last axis: out[..., c] = x[..., c] + b[c]."""
    if b.ndim != 1 or b.shape[0] != x.shape[-1]:
        raise ShapeError(f"add_bias: bias {b.shape} does not match channels of {x.shape}")
    out = Tensor(x.data + b.data)
    lead = tuple(range(x.ndim - 1))

    def bw(g):
        return g, g.sum(axis=lead)

    return _record(out, (x, b), bw)


def channel_scale(x: Tensor, s: Tensor) -> Tensor:
    """Per-channel gain over the last axis: out[..., c] = x[..., c] * s[c]."""
    if s.ndim != 1 or s.shape[0] != x.shape[-1]:
        raise ShapeError(f"channel_scale: gains {s.shape} do not match channels "
                         f"of {x.shape}")
    xd, sd = x.data, s.data
    out = Tensor(xd * sd)
    lead = tuple(range(x.ndim - 1))

    def bw(g):
        return g * sd, (g * xd).sum(axis=lead)

    return _record(out, (x, s), bw)


def sqrt(a: Tensor) -> Tensor:
    y = np.sqrt(a.data)
    out = Tensor(y)

    def bw(g):
        # guard the non-differentiable point at exactly zero
        return (g * 0.5 / np.maximum(y, np.finfo(y.dtype).tiny),)

    return _record(out, (a,), bw)


def sum_all(a: Tensor) -> Tensor:
    out = Tensor(np.asarray(a.data.sum(), dtype=a.dtype))
    shape = a.shape

    def bw(g):
        return (np.broadcast_to(g.reshape(()), shape).astype(g.dtype, copy=True),)

    return _record(out, (a,), bw)


def spatial_mean(x: Tensor) -> Tensor:
    """Global average over the two leading (spatial) axes: [H,W,C] -> [C]."""
    if x.ndim != 3:
        raise ShapeError(f"spatial_mean expects a rank-3 tensor, got {x.shape}")
    h, w, _ = x.shape
    out = Tensor(x.data.mean(axis=(0, 1)))

    def bw(g):
        return (np.broadcast_to(g / (h * w), x.shape).astype(g.dtype, copy=True),)

    return _record(out, (x,), bw)


# ---------------------------------------------------------------------------
# Activations
# ---------------------------------------------------------------------------

_GELU_C0 = math.sqrt(2.0 / math.pi)
_GELU_C1 = 0.044715


def gelu(x: Tensor) -> Tensor:
    """GELU, tanh approximation: 0.5*x*(1 + tanh(c0*(x + c1*x^3)))."""
    xd = x.data
    x2 = xd * xd
    t = np.tanh(_GELU_C0 * (xd + _GELU_C1 * x2 * xd))
    out = Tensor(0.5 * xd * (1.0 + t))

    def bw(g):
        du = _GELU_C0 * (1.0 + 3.0 * _GELU_C1 * x2)
        return (g * (0.5 * (1.0 + t) + 0.5 * xd * (1.0 - t * t) * du),)

    return _record(out, (x,), bw)


def sigmoid(x: Tensor) -> Tensor:
    s = 1.0 / (1.0 + np.exp(-x.data))
    out = Tensor(s)
    return _record(out, (x,), lambda g: (g * s * (1.0 - s),))


def softplus(x: Tensor) -> Tensor:
    out = Tensor(np.logaddexp(0.0, x.data))
    xd = x.data
    return _record(out, (x,), lambda g: (g / (1.0 + np.exp(-xd)),))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Normalized exponentials along ``axis``; max-subtraction guards overflow."""
    xd = x.data
    if not (-xd.ndim <= axis < xd.ndim):
        raise ShapeError(f"softmax: axis {axis} invalid for shape {x.shape}")
    m = xd.max(axis=axis, keepdims=True)
    e = np.exp(xd - m)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y)

    def bw(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - dot),)

    return _record(out, (x,), bw)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last (channel) axis per position, then scale/shift."""
    c = x.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"layer_norm: scale/shift must have shape ({c},)")
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = Tensor(xhat * gamma.data + beta.data)
    lead = tuple(range(xd.ndim - 1))

    def bw(g):
        dgamma = (g * xhat).sum(axis=lead)
        dbeta = g.sum(axis=lead)
        dxhat = g * gamma.data
        dx = inv * (dxhat
                    - dxhat.mean(axis=-1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        return dx, dgamma, dbeta

    return _record(out, (x, gamma, beta), bw)


# ---------------------------------------------------------------------------
# Linear algebra
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Standard 2D matrix product."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} x {b.shape}")
    ad, bd = a.data, b.data
    out = Tensor(ad @ bd)
    add_flops(2 * a.shape[0] * a.shape[1] * b.shape[1])

    def bw(g):
        return g @ bd.T, ad.T @ g

    return _record(out, (a, b), bw)


def bmm(a: Tensor, b: Tensor) -> Tensor:
    """Batched matmul: [B,M,K] x [B,K,N] -> [B,M,N], or [B,M,K] x [K,N]."""
    ad, bd = a.data, b.data
    if ad.ndim != 3 or bd.ndim not in (2, 3):
        raise ShapeError(f"bmm: incompatible ranks {a.shape} x {b.shape}")
    if bd.ndim == 2:
        if ad.shape[2] != bd.shape[0]:
            raise ShapeError(f"bmm: inner dims differ {a.shape} x {b.shape}")
        out = Tensor(ad @ bd)
        add_flops(2 * ad.shape[0] * ad.shape[1] * ad.shape[2] * bd.shape[1])

        def bw(g):
            da = g @ bd.T
            db = np.tensordot(ad, g, axes=([0, 1], [0, 1]))
            return da, db

    else:
        if ad.shape[0] != bd.shape[0] or ad.shape[2] != bd.shape[1]:
            raise ShapeError(f"bmm: incompatible shapes {a.shape} x {b.shape}")
        out = Tensor(ad @ bd)
        add_flops(2 * ad.shape[0] * ad.shape[1] * ad.shape[2] * bd.shape[2])

        def bw(g):
            da = g @ bd.transpose(0, 2, 1)
            db = ad.transpose(0, 2, 1) @ g
            return da, db

    return _record(out, (a, b), bw)


# ---------------------------------------------------------------------------
# Layout ops
# ---------------------------------------------------------------------------

def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    out = Tensor(a.data.reshape(shape))
    orig = a.shape
    return _record(out, (a,), lambda g: (g.reshape(orig),))


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = Tensor(np.ascontiguousarray(a.data.transpose(axes)))
    return _record(out, (a,), lambda g: (g.transpose(inv),))


def concat(parts: Sequence[Tensor], axis: int) -> Tensor:
    parts = list(parts)
    out = Tensor(np.concatenate([p.data for p in parts], axis=axis))
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        return tuple(
            np.ascontiguousarray(np.take(g, range(offsets[i], offsets[i + 1]), axis=axis))
            for i in range(len(parts))
        )

    return _record(out, parts, bw)


def tile_batch(a: Tensor, reps: int) -> Tensor:
    """Stack ``reps`` copies along a batch layout: [B,...] -> [reps*B,...]."""
    b = a.shape[0]
    out = Tensor(np.tile(a.data, (reps,) + (1,) * (a.ndim - 1)))

    def bw(g):
        return (g.reshape((reps, b) + a.shape[1:]).sum(axis=0),)

    return _record(out, (a,), bw)


def pixel_scale(x: Tensor, s: Tensor) -> Tensor:
    """Scale every channel of x[H,W,C] by the 2D map s[H,W]."""
    if x.ndim != 3 or s.shape != x.shape[:2]:
        raise ShapeError(f"pixel_scale: map {s.shape} does not match image {x.shape}")
    sd = s.data[:, :, None]
    xd = x.data
    out = Tensor(xd * sd)

    def bw(g):
        return g * sd, (g * xd).sum(axis=2)

    return _record(out, (x, s), bw)


# ---------------------------------------------------------------------------
# Convolutions
# ---------------------------------------------------------------------------

def _conv_pad(kh: int, kw: int):
    return (kh - 1) // 2, kh - 1 - (kh - 1) // 2, (kw - 1) // 2, kw - 1 - (kw - 1) // 2


def conv2d(x: Tensor, k: Tensor, bias: Optional[Tensor] = None, groups: int = 1,
           padding: str = "same", stride: int = 1) -> Tensor:
    """Grouped 2D cross-correlation over an [H,W,Cin] image.

    Args:
        x: input of shape [H, W, Cin].
        k: kernel of shape [kh, kw, Cin/groups, Cout].
        bias: optional per-output-channel bias of shape [Cout].
        groups: channel groups; depth-wise is groups == Cin.
        padding: "same" (stride 1 only) or "valid".
        stride: spatial stride; stride > 1 requires kh == kw == stride and
            "valid" padding (the non-overlapping downsampling case).
    """
    if x.ndim != 3 or k.ndim != 4:
        raise ShapeError(f"conv2d: expected image [H,W,Cin] and kernel [kh,kw,Cin/g,Cout], "
                         f"got {x.shape} and {k.shape}")
    h, w, cin = x.shape
    kh, kw, cpg, cout = k.shape
    if cin % groups or cout % groups or cpg != cin // groups:
        raise ShapeError(f"conv2d: groups={groups} incompatible with Cin={cin}, "
                         f"kernel {k.shape}")
    if padding not in ("same", "valid"):
        raise ValueError(f"conv2d: unknown padding {padding!r}")
    if stride != 1:
        if padding != "valid" or kh != stride or kw != stride:
            raise ShapeError("conv2d: stride > 1 is only supported for the "
                             "non-overlapping case (kh == kw == stride, valid padding)")
    if bias is not None and bias.shape != (cout,):
        raise ShapeError(f"conv2d: bias {bias.shape} must be ({cout},)")

    if padding == "same":
        pt, pb, pl, pr = _conv_pad(kh, kw)
        xp = np.pad(x.data, ((pt, pb), (pl, pr), (0, 0)))
    else:
        pt = pl = 0
        xp = x.data
    hp, wp = xp.shape[:2]
    hout = (hp - kh) // stride + 1
    wout = (wp - kw) // stride + 1
    if hout < 1 or wout < 1:
        raise ShapeError(f"conv2d: kernel {k.shape} larger than padded input {xp.shape}")

    kd = k.data
    opg = cout // groups
    out_d = np.zeros((hout, wout, cout), dtype=xp.dtype)
    taps = []  # (u, v, view) reused by backward
    for u in range(kh):
        for v in range(kw):
            xs = xp[u:u + stride * hout:stride, v:v + stride * wout:stride]
            taps.append((u, v, xs))
            if groups == 1:
                out_d += np.tensordot(xs, kd[u, v], axes=([2], [0]))
            elif groups == cin and cpg == 1:
                out_d += xs * kd[u, v, 0]
            else:
                for gidx in range(groups):
                    ci, co = gidx * cpg, gidx * opg
                    out_d[:, :, co:co + opg] += np.tensordot(
                        xs[:, :, ci:ci + cpg], kd[u, v, :, co:co + opg], axes=([2], [0]))
    if bias is not None:
        out_d = out_d + bias.data
    out = Tensor(out_d)
    add_flops(2 * kh * kw * cpg * cout * hout * wout)

    def bw(g):
        dk = np.zeros_like(kd)
        dxp = np.zeros_like(xp)
        for u, v, xs in taps:
            if groups == 1:
                dk[u, v] = np.tensordot(xs, g, axes=([0, 1], [0, 1]))
                dxs = np.tensordot(g, kd[u, v], axes=([2], [1]))
            elif groups == cin and cpg == 1:
                dk[u, v, 0] = (xs * g).sum(axis=(0, 1))
                dxs = g * kd[u, v, 0]
            else:
                dxs = np.zeros_like(xs)
                for gidx in range(groups):
                    ci, co = gidx * cpg, gidx * opg
                    dk[u, v, :, co:co + opg] = np.tensordot(
                        xs[:, :, ci:ci + cpg], g[:, :, co:co + opg], axes=([0, 1], [0, 1]))
                    dxs[:, :, ci:ci + cpg] = np.tensordot(
                        g[:, :, co:co + opg], kd[u, v, :, co:co + opg], axes=([2], [1]))
            dxp[u:u + stride * hout:stride, v:v + stride * wout:stride] += dxs
        dx = dxp[pt:pt + h, pl:pl + w] if padding == "same" else dxp
        if bias is None:
            return dx, dk
        return dx, dk, g.sum(axis=(0, 1))

    parents = (x, k) if bias is None else (x, k, bias)
    return _record(out, parents, bw)


def conv2d_transpose(x: Tensor, k: Tensor, bias: Optional[Tensor] = None,
                     stride: int = 2) -> Tensor:
    """Non-overlapping transposed conv (kh == kw == stride): [H,W,Cin] -> [sH,sW,Cout]."""
    if x.ndim != 3 or k.ndim != 4:
        raise ShapeError(f"conv2d_transpose: bad ranks {x.shape}, {k.shape}")
    h, w, cin = x.shape
    kh, kw, kcin, cout = k.shape
    if kh != stride or kw != stride or kcin != cin:
        raise ShapeError(f"conv2d_transpose: kernel {k.shape} must be "
                         f"[{stride},{stride},{cin},Cout]")
    if bias is not None and bias.shape != (cout,):
        raise ShapeError(f"conv2d_transpose: bias {bias.shape} must be ({cout},)")
    xd, kd = x.data, k.data
    out_d = np.zeros((h * stride, w * stride, cout), dtype=xd.dtype)
    for u in range(kh):
        for v in range(kw):
            out_d[u::stride, v::stride] = np.tensordot(xd, kd[u, v], axes=([2], [0]))
    if bias is not None:
        out_d = out_d + bias.data
    out = Tensor(out_d)
    add_flops(2 * kh * kw * cin * cout * h * w)

    def bw(g):
        dx = np.zeros_like(xd)
        dk = np.zeros_like(kd)
        for u in range(kh):
            for v in range(kw):
                gs = g[u::stride, v::stride]
                dx += np.tensordot(gs, kd[u, v], axes=([2], [1]))
                dk[u, v] = np.tensordot(xd, gs, axes=([0, 1], [0, 1]))
        if bias is None:
            return dx, dk
        return dx, dk, g.sum(axis=(0, 1))

    parents = (x, k) if bias is None else (x, k, bias)
    return _record(out, parents, bw)
