"""The fusion calculus: collapsing branched train-time structures into
single equivalent convolutions.

Notation used throughout (per channel c):

    bn(x) = gamma * (x - mean) / sqrt(var + eps) + beta = s*x + t
    s = gamma / sqrt(var + eps)
    t = beta - mean * s

Folding rules:

    bn after conv:   W' = W * s_o            b' = beta + (b - mean) * s
    bn before conv:  W'[o,c] = W[o,c] * s_c  b'_o = b_o + sum_c t_c * sum_ij W[o,c,i,j]
    identity as conv: center tap of channel c gets s_c, bias t_c
    parallel branches of equal geometry sum elementwise (conv is linear)
    a skip connection adds 1 to the center tap of each channel's own filter

The before-conv rule is exact only when the convolution's zero padding never
injects raw zeros into the normalized plane: either padding is zero, or the
input is zero-padded *before* normalization (blocks that normalize first are
built that way; see blocks.RepMixerBlock).

All folds do their arithmetic in float64 and round to float32 once, so fused
weights carry no avoidable rounding on top of the storage format.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .params import BatchNormParams, ConvParams


@dataclass
class FusedConv:
    """Result of a fusion: the single conv plus what it absorbed."""

    conv: ConvParams
    provenance: tuple[str, ...]


def fold_bn_post(conv: ConvParams, bn: BatchNormParams) -> ConvParams:
    """Fold `bn(conv(x))` into a single convolution."""
    if bn.channels != conv.out_ch:
        raise ShapeError(
            f"bn channels {bn.channels} do not match conv out_ch {conv.out_ch}"
        )
    s, _ = bn.scale_shift()
    w = conv.weight.astype(np.float64) * s[:, None, None, None]
    b = bn.beta.astype(np.float64) + (
        conv.bias.astype(np.float64) - bn.running_mean.astype(np.float64)
    ) * s
    return ConvParams(
        w.astype(np.float32), b.astype(np.float32),
        conv.stride, conv.padding, conv.groups,
    )


def fold_bn_pre(bn: BatchNormParams, conv: ConvParams) -> ConvParams:
    """Fold `conv(bn(x))` into a single convolution.

    Exact when zero padding never reaches the normalized plane (padding 0, or
    the block pads before normalizing); grouped convs map each local input
    channel to its absolute channel within the output channel's group.
    """
    if bn.channels != conv.in_ch:
        raise ShapeError(
            f"bn channels {bn.channels} do not match conv in_ch {conv.in_ch}"
        )
    s, t = bn.scale_shift()
    icg = conv.in_ch // conv.groups
    ocg = conv.out_ch // conv.groups
    w64 = conv.weight.astype(np.float64).reshape(
        conv.groups, ocg, icg, *conv.kernel
    )
    s_g = s.reshape(conv.groups, icg)
    t_g = t.reshape(conv.groups, icg)
    w = w64 * s_g[:, None, :, None, None]
    b = conv.bias.astype(np.float64) + (
        t_g[:, None, :] * w64.sum(axis=(3, 4))
    ).sum(axis=2).reshape(conv.out_ch)
    return ConvParams(
        w.reshape(conv.weight.shape).astype(np.float32), b.astype(np.float32),
        conv.stride, conv.padding, conv.groups,
    )


def add_identity(conv: ConvParams, scale=1.0) -> ConvParams:
    """Absorb `scale (.) conv(x) + x`'s skip: add scale to each center tap.

    The result computes conv(x) + scale*x, so callers that scale the branch
    pre-multiply conv's weights/bias and pass scale 1.
    """
    kh, kw = conv.kernel
    if kh % 2 == 0 or kw % 2 == 0:
        raise ConfigError(
            f"kernel {conv.kernel} has no center element; identity needs odd dims"
        )
    if conv.in_ch != conv.out_ch:
        raise ConfigError(
            f"identity channel outside group: conv maps {conv.in_ch} -> "
            f"{conv.out_ch} channels"
        )
    scale_vec = np.broadcast_to(
        np.asarray(scale, np.float64), (conv.out_ch,)
    )
    icg = conv.in_ch // conv.groups
    w = conv.weight.astype(np.float64)
    for o in range(conv.out_ch):
        w[o, o % icg, kh // 2, kw // 2] += scale_vec[o]
    return ConvParams(
        w.astype(np.float32), conv.bias.copy(),
        conv.stride, conv.padding, conv.groups,
    )


def pad_kernel(conv: ConvParams, target: tuple[int, int]) -> ConvParams:
    """Zero-embed the kernel centered in a larger odd kernel.

    The padding field is updated to keep the sampling grid identical, so the
    padded conv computes the same function as the original.
    """
    kh, kw = conv.kernel
    tkh, tkw = int(target[0]), int(target[1])
    if tkh < kh or tkw < kw:
        raise ConfigError(f"cannot shrink kernel {conv.kernel} to {target}")
    if (tkh - kh) % 2 or (tkw - kw) % 2:
        raise ConfigError(
            f"kernel parity mismatch: {conv.kernel} cannot center in {target}"
        )
    if tkh == kh and tkw == kw:
        return conv.copy()
    w = np.zeros((conv.out_ch, conv.weight.shape[1], tkh, tkw), np.float32)
    oh, ow = (tkh - kh) // 2, (tkw - kw) // 2
    w[:, :, oh : oh + kh, ow : ow + kw] = conv.weight
    return ConvParams(
        w, conv.bias.copy(), conv.stride,
        ((tkh - 1) // 2, (tkw - 1) // 2), conv.groups,
    )


def bn_branch_to_conv(
    bn: BatchNormParams, kernel: tuple[int, int], groups: int = 1
) -> ConvParams:
    """Express a bn-only identity branch as a k x k convolution."""
    kh, kw = int(kernel[0]), int(kernel[1])
    if kh != kw or kh % 2 == 0:
        raise ConfigError(f"identity branch needs a square odd kernel, got {kernel}")
    c = bn.channels
    if c % groups:
        raise ShapeError(f"channels {c} not divisible by groups {groups}")
    s, t = bn.scale_shift()
    icg = c // groups
    w = np.zeros((c, icg, kh, kw), np.float64)
    for o in range(c):
        w[o, o % icg, kh // 2, kw // 2] = s[o]
    return ConvParams(
        w.astype(np.float32), t.astype(np.float32),
        (1, 1), ((kh - 1) // 2, (kw - 1) // 2), groups,
    )


def sum_branches(branches) -> ConvParams:
    """Sum parallel convolutions of identical geometry into one."""
    branches = list(branches)
    if not branches:
        raise ConfigError("sum_branches needs at least one branch")
    head = branches[0]
    for i, br in enumerate(branches[1:], start=1):
        if br.weight.shape != head.weight.shape:
            raise ConfigError(
                f"branch {i} weight shape {br.weight.shape} differs from "
                f"branch 0 shape {head.weight.shape}"
            )
        if (br.stride, br.padding, br.groups) != (
            head.stride, head.padding, head.groups,
        ):
            raise ConfigError(
                f"branch {i} geometry (stride={br.stride}, padding={br.padding}, "
                f"groups={br.groups}) differs from branch 0"
            )
    w = np.zeros(head.weight.shape, np.float64)
    b = np.zeros(head.bias.shape, np.float64)
    for br in branches:
        w += br.weight
        b += br.bias
    return ConvParams(
        w.astype(np.float32), b.astype(np.float32),
        head.stride, head.padding, head.groups,
    )


def _require_depthwise(conv: ConvParams, what: str) -> None:
    if not conv.is_depthwise:
        raise ConfigError(
            f"{what} requires a depthwise conv, got in={conv.in_ch} "
            f"out={conv.out_ch} groups={conv.groups}"
        )
    kh, kw = conv.kernel
    if kh % 2 == 0 or kw % 2 == 0:
        raise ConfigError(f"{what} requires odd kernel dims, got {conv.kernel}")


def fuse_repmixer(
    dw: ConvParams,
    bn: BatchNormParams,
    layer_scale: np.ndarray | None = None,
) -> FusedConv:
    """Fuse the RepMixer form `x + ls (.) dw(bn(x))` into one depthwise conv."""
    _require_depthwise(dw, "fuse_repmixer")
    folded = fold_bn_pre(bn, dw)
    prov = ["bn->dw fold"]
    if layer_scale is not None:
        ls = np.asarray(layer_scale, np.float64).reshape(dw.out_ch)
        folded = ConvParams(
            (folded.weight.astype(np.float64) * ls[:, None, None, None]).astype(
                np.float32
            ),
            (folded.bias.astype(np.float64) * ls).astype(np.float32),
            folded.stride, folded.padding, folded.groups,
        )
        prov.append("layer_scale")
    fused = add_identity(folded, 1.0)
    prov.append("identity skip")
    return FusedConv(fused, tuple(prov))


def fuse_mobileone(
    conv_branches,
    scale_branch=None,
    identity: BatchNormParams | None = None,
) -> FusedConv:
    """Fuse MobileOne-style overparameterization into one convolution.

    conv_branches: sequence of (ConvParams, BatchNormParams) with the full
    kernel size; scale_branch: optional (1x1 ConvParams, BatchNormParams);
    identity: optional bn-only branch (stride 1, in_ch == out_ch only).
    """
    conv_branches = list(conv_branches)
    if not conv_branches:
        raise ConfigError("fuse_mobileone needs at least one conv branch")
    head = conv_branches[0][0]
    k = head.kernel
    prov = [f"{len(conv_branches)} conv+bn branch(es) k={k[0]}x{k[1]}"]
    folded = [fold_bn_post(c, b) for c, b in conv_branches]
    if scale_branch is not None:
        sc, sb = scale_branch
        if sc.kernel != (1, 1):
            raise ConfigError(f"scale branch must be 1x1, got kernel {sc.kernel}")
        folded.append(pad_kernel(fold_bn_post(sc, sb), k))
        prov.append("1x1 scale branch")
    if identity is not None:
        if head.in_ch != head.out_ch or head.stride != (1, 1):
            raise ConfigError(
                f"identity branch illegal for in={head.in_ch} out={head.out_ch} "
                f"stride={head.stride}"
            )
        folded.append(bn_branch_to_conv(identity, k, head.groups))
        prov.append("bn identity branch")
    return FusedConv(sum_branches(folded), tuple(prov))


def fuse_cpe(dw: ConvParams) -> FusedConv:
    """Fuse a conditional positional encoding `x + dw(x)` into one conv."""
    _require_depthwise(dw, "fuse_cpe")
    return FusedConv(add_identity(dw, 1.0), ("identity skip",))
