"""Building blocks of the dual-domain transformer prior.

The frequency branch works on band-wise DCT coefficients: channel attention
inside each K x K x C coefficient token (good where inter-band correlation is
high, i.e. low frequencies) and a local depth-wise/point-wise mixer (good for
the weakly correlated high frequencies).  A learnable per-pixel gate blends
the two.  The space branch is plain windowed positional attention on the
un-transformed image.  Both are wrapped pre-norm style with residuals.
"""

from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .dct import dct2_forward, dct2_inverse
from .tensor import Param, Tensor, xavier_uniform


class Layer:
    """Base for anything that owns Params; children discovered by attribute walk."""

    def named_params(self, prefix: str = ""):
        for name, attr in self.__dict__.items():
            if isinstance(attr, Param):
                yield prefix + name, attr
            elif isinstance(attr, Layer):
                yield from attr.named_params(prefix + name + ".")
            elif isinstance(attr, (list, tuple)):
                for i, item in enumerate(attr):
                    if isinstance(item, Param):
                        yield f"{prefix}{name}.{i}", item
                    elif isinstance(item, Layer):
                        yield from item.named_params(f"{prefix}{name}.{i}.")

    def params(self) -> list[Param]:
        return [p for _, p in self.named_params()]

    def param_count(self) -> int:
        return sum(p.value.size for p in self.params())

    def finalize_names(self) -> None:
        for name, p in self.named_params():
            p.name = name


class LayerNorm(Layer):
    def __init__(self, channels: int):
        self.gamma = Param(np.ones(channels))
        self.beta = Param(np.zeros(channels))

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gamma.value, self.beta.value)


class Conv2d(Layer):
    def __init__(self, cin: int, cout: int, ksize: int, rng: np.random.Generator,
                 groups: int = 1, padding: str = "same", stride: int = 1,
                 bias: bool = True, zero_init: bool = False):
        cpg = cin // groups
        fan = ksize * ksize * cpg
        if zero_init:
            w = np.zeros((ksize, ksize, cpg, cout))
        else:
            w = xavier_uniform((ksize, ksize, cpg, cout), fan, ksize * ksize * cout // groups, rng)
        self.weight = Param(w)
        self.bias = Param(np.zeros(cout)) if bias else None
        self.groups = groups
        self.padding = padding
        self.stride = stride

    def __call__(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.weight.value,
                        bias=self.bias.value if self.bias is not None else None,
                        groups=self.groups, padding=self.padding, stride=self.stride)


class ConvTranspose2d(Layer):
    """Non-overlapping learnable upsampler (kernel == stride)."""

    def __init__(self, cin: int, cout: int, rng: np.random.Generator, stride: int = 2):
        fan = stride * stride * cin
        self.weight = Param(xavier_uniform((stride, stride, cin, cout), fan, cout, rng))
        self.bias = Param(np.zeros(cout))
        self.stride = stride

    def __call__(self, x: Tensor) -> Tensor:
        return T.conv2d_transpose(x, self.weight.value, bias=self.bias.value,
                                  stride=self.stride)


class Linear(Layer):
    def __init__(self, nin: int, nout: int, rng: np.random.Generator):
        self.weight = Param(xavier_uniform((nin, nout), nin, nout, rng))
        self.bias = Param(np.zeros(nout))

    def __call__(self, x: Tensor) -> Tensor:
        return T.add_bias(T.matmul(x, self.weight.value), self.bias.value)


# ---------------------------------------------------------------------------
# Token layout helpers (pure reshape/transpose, fully differentiable)
# ---------------------------------------------------------------------------

def split_tokens(x: Tensor, k: int) -> Tensor:
    """[H,W,C] -> [n, K*K, C] non-overlapping K x K tokens, row-major order."""
    h, w, c = x.shape
    if h % k or w % k:
        raise T.ShapeError(f"token size {k} must divide spatial dims {h}x{w}")
    t = T.reshape(x, (h // k, k, w // k, k, c))
    t = T.transpose(t, (0, 2, 1, 3, 4))
    return T.reshape(t, ((h // k) * (w // k), k * k, c))


def merge_tokens(t: Tensor, h: int, w: int, k: int) -> Tensor:
    """Inverse of :func:`split_tokens`."""
    c = t.shape[2]
    t = T.reshape(t, (h // k, w // k, k, k, c))
    t = T.transpose(t, (0, 2, 1, 3, 4))
    return T.reshape(t, (h, w, c))


def _split_heads(x: Tensor, heads: int) -> Tensor:
    """[n, L, C] -> [n*heads, L, C/heads]; batch index is token*heads + head."""
    n, l, c = x.shape
    t = T.reshape(x, (n, l, heads, c // heads))
    t = T.transpose(t, (0, 2, 1, 3))
    return T.reshape(t, (n * heads, l, c // heads))


def _merge_heads(x: Tensor, heads: int) -> Tensor:
    nh, l, ch = x.shape
    n = nh // heads
    t = T.reshape(x, (n, heads, l, ch))
    t = T.transpose(t, (0, 2, 1, 3))
    return T.reshape(t, (n, l, heads * ch))


# ---------------------------------------------------------------------------
# Frequency branch
# ---------------------------------------------------------------------------

class FreqSpectralAttention(Layer):
    """Channel attention across spectral bands inside each coefficient token.

    Each K x K x C token is flattened to K^2 x C; queries/keys/values are
    channel projections, attention is C x C per head group (so cost grows as
    H*W*C^2), and a learnable per-head position bias of shape
    [heads, C/h, C/h] is added to the pre-softmax logits.
    """

    def __init__(self, channels: int, token: int, heads: int, rng: np.random.Generator):
        if channels % heads:
            raise ValueError(f"channels {channels} not divisible by heads {heads}")
        self.channels = channels
        self.token = token
        self.heads = heads
        ch = channels // heads
        self.wq = Param(xavier_uniform((channels, channels), channels, channels, rng))
        self.wk = Param(xavier_uniform((channels, channels), channels, channels, rng))
        self.wv = Param(xavier_uniform((channels, channels), channels, channels, rng))
        self.pos = Param(np.zeros((heads, ch, ch)))
        self.out = Conv2d(channels, channels, 1, rng)
        self.last_attn: np.ndarray | None = None

    def __call__(self, f: Tensor) -> Tensor:
        h, w, c = f.shape
        k = self.token
        tokens = split_tokens(f, k)
        n = tokens.shape[0]
        q = _split_heads(T.bmm(tokens, self.wq.value), self.heads)
        kk = _split_heads(T.bmm(tokens, self.wk.value), self.heads)
        v = _split_heads(T.bmm(tokens, self.wv.value), self.heads)
        logits = T.bmm(T.transpose(q, (0, 2, 1)), kk)
        logits = T.scale(logits, 1.0 / math.sqrt(c))
        logits = T.add(logits, T.tile_batch(self.pos.value, n))
        attn = T.softmax(logits, axis=-1)
        self.last_attn = attn.data
        mixed = _merge_heads(T.bmm(v, attn), self.heads)
        return self.out(merge_tokens(mixed, h, w, k))


class FreqLocalMixer(Layer):
    """Depth-wise spatial interaction plus point-wise spectral evolution.

    out = spec + spat + f_in, with
    spat = gelu(DW3x3(gelu(Conv1x1(f_in)))) and
    spec = Conv1x1(gelu(Conv1x1(spat + f_in))).
    """

    def __init__(self, channels: int, rng: np.random.Generator):
        self.conv_in = Conv2d(channels, channels, 1, rng)
        self.dw = Conv2d(channels, channels, 3, rng, groups=channels)
        self.conv_mid = Conv2d(channels, channels, 1, rng)
        self.conv_out = Conv2d(channels, channels, 1, rng)

    def __call__(self, f: Tensor) -> Tensor:
        spat = T.gelu(self.dw(T.gelu(self.conv_in(f))))
        spec = self.conv_out(T.gelu(self.conv_mid(T.add(spat, f))))
        return T.add(T.add(spec, spat), f)


def gate_merge(f_attn: Tensor, f_local: Tensor, logits: Tensor) -> Tensor:
    """Per-pixel convex blend: sigmoid(logits) picks f_attn, its complement f_local."""
    if f_attn.shape != f_local.shape:
        raise T.ShapeError(f"gate_merge: branch shapes differ "
                           f"{f_attn.shape} vs {f_local.shape}")
    if logits.shape != f_attn.shape[:2]:
        raise T.ShapeError(f"gate_merge: gate {logits.shape} does not match "
                           f"spatial dims of {f_attn.shape}")
    s = T.sigmoid(logits)
    return T.add(T.pixel_scale(f_attn, s), T.pixel_scale(f_local, T.sub(1.0, s)))


def bilinear_resize(arr: np.ndarray, h: int, w: int) -> np.ndarray:
    """Plain bilinear resampling of a 2D map (used to rescale stored gates)."""
    hs, ws = arr.shape
    yi = np.linspace(0, hs - 1, h)
    xi = np.linspace(0, ws - 1, w)
    y0 = np.clip(np.floor(yi).astype(int), 0, hs - 2) if hs > 1 else np.zeros(h, int)
    x0 = np.clip(np.floor(xi).astype(int), 0, ws - 2) if ws > 1 else np.zeros(w, int)
    fy = (yi - y0)[:, None]
    fx = (xi - x0)[None, :]
    a = arr[y0][:, x0]
    b = arr[y0][:, np.minimum(x0 + 1, ws - 1)]
    c = arr[np.minimum(y0 + 1, hs - 1)][:, x0]
    d = arr[np.minimum(y0 + 1, hs - 1)][:, np.minimum(x0 + 1, ws - 1)]
    return a * (1 - fy) * (1 - fx) + b * (1 - fy) * fx + c * fy * (1 - fx) + d * fy * fx


# ---------------------------------------------------------------------------
# Space branch
# ---------------------------------------------------------------------------

class SpaceAttention(Layer):
    """Positional multi-head attention inside each K x K spatial token."""

    def __init__(self, channels: int, token: int, heads: int, rng: np.random.Generator):
        if channels % heads:
            raise ValueError(f"channels {channels} not divisible by heads {heads}")
        self.channels = channels
        self.token = token
        self.heads = heads
        k2 = token * token
        self.wq = Param(xavier_uniform((channels, channels), channels, channels, rng))
        self.wk = Param(xavier_uniform((channels, channels), channels, channels, rng))
        self.wv = Param(xavier_uniform((channels, channels), channels, channels, rng))
        self.pos = Param(np.zeros((heads, k2, k2)))
        self.out = Conv2d(channels, channels, 1, rng)
        self.last_attn: np.ndarray | None = None

    def __call__(self, x: Tensor) -> Tensor:
        h, w, c = x.shape
        k = self.token
        tokens = split_tokens(x, k)
        n = tokens.shape[0]
        q = _split_heads(T.bmm(tokens, self.wq.value), self.heads)
        kk = _split_heads(T.bmm(tokens, self.wk.value), self.heads)
        v = _split_heads(T.bmm(tokens, self.wv.value), self.heads)
        logits = T.bmm(q, T.transpose(kk, (0, 2, 1)))
        logits = T.scale(logits, 1.0 / math.sqrt(c / self.heads))
        logits = T.add(logits, T.tile_batch(self.pos.value, n))
        attn = T.softmax(logits, axis=-1)
        self.last_attn = attn.data
        mixed = _merge_heads(T.bmm(attn, v), self.heads)
        return self.out(merge_tokens(mixed, h, w, k))


# ---------------------------------------------------------------------------
# The mixing-domains transformer block
# ---------------------------------------------------------------------------

class DualDomainBlock(Layer):
    """Pre-norm transformer block mixing frequency-domain and space-domain paths.

    x' = x + Proj( SpaceAttn(LN(x)) + IDCT(gate(FreqAttn, FreqMix over DCT(LN(x)))) )
    x'' = x' + FFN(LN(x'))
    """

    def __init__(self, channels: int, token: int, heads: int, h: int, w: int,
                 rng: np.random.Generator, ffn_expand: int = 2):
        if h % token or w % token:
            raise ValueError(f"token size {token} must divide block dims {h}x{w}")
        self.h = h
        self.w = w
        self.ln1 = LayerNorm(channels)
        self.freq_attn = FreqSpectralAttention(channels, token, heads, rng)
        self.freq_mix = FreqLocalMixer(channels, rng)
        self.gate_logits = Param(np.zeros((h, w)))  # sigmoid(0)=0.5: even blend at init
        self.space_attn = SpaceAttention(channels, token, heads, rng)
        self.proj = Conv2d(channels, channels, 1, rng)
        self.ln2 = LayerNorm(channels)
        ce = channels * ffn_expand
        self.ffn_in = Conv2d(channels, ce, 1, rng)
        self.ffn_dw = Conv2d(ce, ce, 3, rng, groups=ce)
        self.ffn_out = Conv2d(ce, channels, 1, rng)

    def _gate(self, h: int, w: int) -> Tensor:
        if (h, w) == (self.h, self.w):
            return self.gate_logits.value
        # inference at a different resolution: resample the stored gate
        return Tensor(bilinear_resize(self.gate_logits.value.data, h, w),
                      dtype=self.gate_logits.value.dtype)

    def __call__(self, x: Tensor) -> Tensor:
        h, w, _ = x.shape
        xn = self.ln1(x)
        f_in = dct2_forward(xn)
        f_out = gate_merge(self.freq_attn(f_in), self.freq_mix(f_in), self._gate(h, w))
        mixed = T.add(self.space_attn(xn), dct2_inverse(f_out))
        x1 = T.add(x, self.proj(mixed))
        y = T.gelu(self.ffn_in(self.ln2(x1)))
        y = T.gelu(self.ffn_dw(y))
        return T.add(x1, self.ffn_out(y))
