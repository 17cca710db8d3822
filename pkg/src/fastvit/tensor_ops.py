"""Dense tensor operations on float32 NCHW arrays.

These are the primitives every block forward is composed from: convolution,
evaluation-mode batch norm, activations, the pooling token mixer, multi-head
self-attention, global average pooling, and an affine map.  All of them are
pure functions and bit-deterministic (see _kernels for the guarantees).
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .errors import ConfigError, ShapeError
from .params import BatchNormParams, ConvParams

# tanh-form gelu constants
_GELU_K0 = np.float32(0.7978845608028654)  # sqrt(2/pi)
_GELU_K1 = np.float32(0.044715)

ACTIVATIONS = ("gelu", "relu", "silu")


def as_nchw(x, name: str = "input") -> np.ndarray:
    arr = np.ascontiguousarray(x, dtype=np.float32)
    if arr.ndim != 4:
        raise ShapeError(f"{name} must be rank-4 NCHW, got shape {arr.shape}")
    if min(arr.shape) < 1:
        raise ShapeError(f"{name} has a non-positive dimension: {arr.shape}")
    return arr


def conv_output_hw(
    hw: tuple[int, int],
    kernel: tuple[int, int],
    stride: tuple[int, int],
    padding: tuple[int, int],
) -> tuple[int, int]:
    oh = (hw[0] + 2 * padding[0] - kernel[0]) // stride[0] + 1
    ow = (hw[1] + 2 * padding[1] - kernel[1]) // stride[1] + 1
    return oh, ow


def conv2d(x, conv: ConvParams) -> np.ndarray:
    """2-d convolution with zero padding.

    Each output element is the inner product of the kernel with the padded
    input window, accumulated channel-major / top-to-bottom / left-to-right,
    with the bias added last.
    """
    x = as_nchw(x)
    n, c, h, w = x.shape
    if c != conv.in_ch:
        raise ShapeError(
            f"input channels {x.shape} do not match conv expecting "
            f"in_ch={conv.in_ch} (weight {conv.weight.shape}, groups={conv.groups})"
        )
    oh, ow = conv_output_hw((h, w), conv.kernel, conv.stride, conv.padding)
    if oh < 1 or ow < 1:
        raise ShapeError(
            f"conv output would be {(n, conv.out_ch, oh, ow)} for input "
            f"{x.shape} with kernel {conv.kernel} stride {conv.stride} "
            f"padding {conv.padding}"
        )
    return _kernels.conv2d_raw(
        x, conv.weight, conv.bias, conv.stride, conv.padding, conv.groups,
        (n, conv.out_ch, oh, ow),
    )


def batchnorm_eval(x, bn: BatchNormParams) -> np.ndarray:
    """Per-channel affine normalization using running statistics only."""
    x = as_nchw(x)
    if x.shape[1] != bn.channels:
        raise ShapeError(
            f"input channels {x.shape} do not match bn channels {bn.channels}"
        )
    s = (bn.gamma / np.sqrt(bn.running_var + np.float32(bn.eps))).astype(np.float32)
    return (x - bn.running_mean[:, None, None]) * s[:, None, None] + bn.beta[
        :, None, None
    ]


def zero_pad(x, padding: tuple[int, int]) -> np.ndarray:
    ph, pw = padding
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))


def activation(x, kind: str) -> np.ndarray:
    """Elementwise nonlinearity.  gelu uses the tanh approximation."""
    x = np.asarray(x, np.float32)
    if kind == "relu":
        return np.maximum(x, np.float32(0.0))
    if kind == "gelu":
        inner = _GELU_K0 * (x + _GELU_K1 * x * x * x)
        return np.float32(0.5) * x * (np.float32(1.0) + np.tanh(inner))
    if kind == "silu":
        return x / (np.float32(1.0) + np.exp(-x))
    raise ConfigError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


_POOL_KERNELS: dict = {}


def pooling_mixer(x, k: int) -> np.ndarray:
    """Average-pooling token mixer: AvgPool_k(x) - x, stride 1.

    The window divisor is always k*k, including border windows that overlap
    the zero padding (count-includes-padding averaging).
    """
    if k % 2 == 0 or k < 1:
        raise ConfigError(f"pooling kernel must be odd and positive, got {k}")
    x = as_nchw(x)
    c = x.shape[1]
    ones = _POOL_KERNELS.get((c, k))
    if ones is None:
        ones = _POOL_KERNELS[(c, k)] = ConvParams(
            weight=np.ones((c, 1, k, k), np.float32),
            bias=np.zeros(c, np.float32),
            stride=(1, 1),
            padding=((k - 1) // 2, (k - 1) // 2),
            groups=c,
        )
    window_sum = conv2d(x, ones)
    return window_sum * np.float32(1.0 / (k * k)) - x


def linear(x, weight, bias) -> np.ndarray:
    """Affine map: (N, Din) x (Dout, Din)^T + (Dout,)."""
    x = np.ascontiguousarray(x, np.float32)
    weight = np.ascontiguousarray(weight, np.float32)
    bias = np.ascontiguousarray(bias, np.float32)
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError(
            f"linear shapes incompatible: x {x.shape}, weight {weight.shape}"
        )
    if bias.shape != (weight.shape[0],):
        raise ShapeError(
            f"linear bias {bias.shape} does not match out dim {weight.shape[0]}"
        )
    out = _kernels.matmul_f32(x, np.ascontiguousarray(weight.T))
    return out + bias


def global_avg_pool(x) -> np.ndarray:
    """Spatial mean per channel, (N, C, H, W) -> (N, C)."""
    x = as_nchw(x)
    return x.mean(axis=(2, 3), dtype=np.float32)


def _as_linear(conv: ConvParams, name: str) -> tuple[np.ndarray, np.ndarray]:
    if conv.kernel != (1, 1) or conv.groups != 1:
        raise ConfigError(
            f"{name} projection must be a 1x1 ungrouped conv, got kernel "
            f"{conv.kernel} groups {conv.groups}"
        )
    return conv.weight.reshape(conv.out_ch, conv.in_ch), conv.bias


def _softmax_rows(scores: np.ndarray) -> np.ndarray:
    m = scores.max(axis=1, keepdims=True)
    e = np.exp(scores - m)
    return e / e.sum(axis=1, keepdims=True, dtype=np.float32)


def mhsa(tokens, qkv: ConvParams, proj: ConvParams, heads: int) -> np.ndarray:
    """Multi-head scaled dot-product self-attention over (N, L, D) tokens.

    qkv and proj are 1x1 convolutions applied as token-wise linear maps; the
    qkv output is packed [Q | K | V] along the feature axis.
    """
    tokens = np.ascontiguousarray(tokens, np.float32)
    if tokens.ndim != 3:
        raise ShapeError(f"tokens must be (N, L, D), got {tokens.shape}")
    n, length, dim = tokens.shape
    if heads < 1 or dim % heads:
        raise ConfigError(f"token dim {dim} not divisible by heads {heads}")
    wq, bq = _as_linear(qkv, "qkv")
    wp, bp = _as_linear(proj, "proj")
    if wq.shape != (3 * dim, dim):
        raise ShapeError(
            f"qkv weight {qkv.weight.shape} does not map dim {dim} to 3*dim"
        )
    if wp.shape != (dim, dim):
        raise ShapeError(f"proj weight {proj.weight.shape} is not ({dim}, {dim})")
    head_dim = dim // heads
    scale = np.float32(1.0 / np.sqrt(head_dim))
    out = np.empty_like(tokens)
    for b in range(n):
        packed = linear(tokens[b], wq, bq)  # (L, 3D)
        q, k, v = packed[:, :dim], packed[:, dim : 2 * dim], packed[:, 2 * dim :]
        ctx = np.empty((length, dim), np.float32)
        for h in range(heads):
            sl = slice(h * head_dim, (h + 1) * head_dim)
            qh = np.ascontiguousarray(q[:, sl])
            kh = np.ascontiguousarray(k[:, sl])
            vh = np.ascontiguousarray(v[:, sl])
            scores = _kernels.matmul_f32(qh, kh.T) * scale
            attn = _softmax_rows(scores)
            ctx[:, sl] = _kernels.matmul_f32(attn, vh)
        out[b] = linear(ctx, wp, bp)
    return out


def nchw_to_tokens(x: np.ndarray) -> np.ndarray:
    """(N, C, H, W) -> (N, H*W, C)."""
    n, c, h, w = x.shape
    return np.ascontiguousarray(x.transpose(0, 2, 3, 1).reshape(n, h * w, c))


def tokens_to_nchw(tokens: np.ndarray, hw: tuple[int, int]) -> np.ndarray:
    n, length, c = tokens.shape
    h, w = hw
    if length != h * w:
        raise ShapeError(f"token count {length} does not match spatial {hw}")
    return np.ascontiguousarray(tokens.reshape(n, h, w, c).transpose(0, 3, 1, 2))
