"""Architectural building blocks, each in a train-time (branched, with batch
norm) and an inference-time (single-branch, fused) structure.

Every block knows how to run its forward pass in either structure and how to
convert itself with `reparameterize()`; the conversion is the identity on
already-converted blocks.  Blocks are treated as immutable after creation:
reparameterization returns a new node.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ArchiveError, ConfigError
from .params import BatchNormParams, ConvParams, identity_bn
from .reparam import fold_bn_post, fold_bn_pre, fuse_cpe, fuse_mobileone, fuse_repmixer
from .tensor_ops import (
    activation,
    batchnorm_eval,
    conv2d,
    mhsa,
    nchw_to_tokens,
    pooling_mixer,
    tokens_to_nchw,
    zero_pad,
)

TRAIN = "train_structure"
INFERENCE = "inference_structure"

HEAD_DIM = 32  # attention head width; all stock stage-4 dims divide it

INIT_STD = 0.02


def trunc_normal(rng: np.random.Generator, shape, std: float = INIT_STD) -> np.ndarray:
    """Normal samples truncated to two sigma, then scaled."""
    out = rng.standard_normal(size=shape)
    bad = np.abs(out) > 2.0
    while bad.any():
        out[bad] = rng.standard_normal(size=int(bad.sum()))
        bad = np.abs(out) > 2.0
    return (out * std).astype(np.float32)


def init_conv(
    rng, out_ch, in_ch, kernel, stride=(1, 1), padding=(0, 0), groups=1
) -> ConvParams:
    w = trunc_normal(rng, (out_ch, in_ch // groups, kernel[0], kernel[1]))
    return ConvParams(w, np.zeros(out_ch, np.float32), stride, padding, groups)


# -- serialization helpers ---------------------------------------------------


def _conv_state(prefix, conv):
    yield f"{prefix}.weight", conv.weight
    yield f"{prefix}.bias", conv.bias


def _conv_load(prefix, tensors, like: ConvParams) -> ConvParams:
    w = tensors[f"{prefix}.weight"]
    b = tensors[f"{prefix}.bias"]
    if w.shape != like.weight.shape or b.shape != like.bias.shape:
        raise ArchiveError(
            f"{prefix}: stored shapes {w.shape}/{b.shape} do not match "
            f"structure {like.weight.shape}/{like.bias.shape}"
        )
    return ConvParams(w, b, like.stride, like.padding, like.groups)


def _bn_state(prefix, bn):
    yield f"{prefix}.gamma", bn.gamma
    yield f"{prefix}.beta", bn.beta
    yield f"{prefix}.running_mean", bn.running_mean
    yield f"{prefix}.running_var", bn.running_var
    yield f"{prefix}.eps", np.array([bn.eps], np.float32)


def _bn_load(prefix, tensors, like: BatchNormParams) -> BatchNormParams:
    g = tensors[f"{prefix}.gamma"]
    if g.shape != like.gamma.shape:
        raise ArchiveError(
            f"{prefix}: stored channels {g.shape} do not match structure "
            f"{like.gamma.shape}"
        )
    return BatchNormParams(
        g,
        tensors[f"{prefix}.beta"],
        tensors[f"{prefix}.running_mean"],
        tensors[f"{prefix}.running_var"],
        float(tensors[f"{prefix}.eps"][0]),
    )


@dataclass
class ConvBN:
    """conv followed by eval-mode batch norm; the unit every branch is made of."""

    conv: ConvParams
    bn: BatchNormParams

    def forward(self, x):
        return batchnorm_eval(conv2d(x, self.conv), self.bn)

    def state(self, prefix):
        yield from _conv_state(f"{prefix}.conv", self.conv)
        yield from _bn_state(f"{prefix}.bn", self.bn)

    def load(self, prefix, tensors):
        return ConvBN(
            _conv_load(f"{prefix}.conv", tensors, self.conv),
            _bn_load(f"{prefix}.bn", tensors, self.bn),
        )


def _odd(k: int, what: str) -> int:
    k = int(k)
    if k < 1 or k % 2 == 0:
        raise ConfigError(f"{what} must be odd and positive, got {k}")
    return k


def _same_pad(k: int) -> tuple[int, int]:
    return (k - 1) // 2, (k - 1) // 2


# -- MobileOne-style unit -----------------------------------------------------


class MobileOneUnit:
    """Overparameterized conv unit: n parallel k x k conv+bn branches, an
    optional 1x1 scale branch (k > 1), and an optional bn-only identity
    branch (stride 1, in == out).  With n_branches <= 1 it degrades to a
    plain conv+bn.  The shared activation always applies after the sum, so
    it survives fusion unchanged.
    """

    kind = "mobileone"

    def __init__(self, *, in_ch, out_ch, kernel, stride, groups, act, mode,
                 branches=None, scale_branch=None, identity=None, conv=None,
                 n_branches=1):
        self.in_ch = in_ch
        self.out_ch = out_ch
        self.kernel = kernel
        self.stride = stride
        self.groups = groups
        self.act = act
        self.mode = mode
        self.n_branches = n_branches
        self.branches = branches or []
        self.scale_branch = scale_branch
        self.identity = identity
        self.conv = conv

    @classmethod
    def create(cls, rng, in_ch, out_ch, kernel, stride=1, groups=1,
               n_branches=1, act="gelu"):
        k = _odd(kernel, "mobileone kernel")
        if in_ch % groups or out_ch % groups:
            raise ConfigError(
                f"channels in={in_ch} out={out_ch} not divisible by groups={groups}"
            )
        overparam = n_branches > 1
        n = n_branches if overparam else 1
        branches = [
            ConvBN(
                init_conv(rng, out_ch, in_ch, (k, k), (stride, stride),
                          _same_pad(k), groups),
                identity_bn(out_ch),
            )
            for _ in range(n)
        ]
        scale = None
        if overparam and k > 1:
            scale = ConvBN(
                init_conv(rng, out_ch, in_ch, (1, 1), (stride, stride),
                          (0, 0), groups),
                identity_bn(out_ch),
            )
        ident = None
        if overparam and stride == 1 and in_ch == out_ch:
            ident = identity_bn(out_ch)
        return cls(in_ch=in_ch, out_ch=out_ch, kernel=k, stride=stride,
                   groups=groups, act=act, mode=TRAIN, branches=branches,
                   scale_branch=scale, identity=ident, n_branches=n)

    def forward(self, x):
        if self.mode == INFERENCE:
            y = conv2d(x, self.conv)
        else:
            y = self.branches[0].forward(x)
            for br in self.branches[1:]:
                y = y + br.forward(x)
            if self.scale_branch is not None:
                y = y + self.scale_branch.forward(x)
            if self.identity is not None:
                y = y + batchnorm_eval(x, self.identity)
        return activation(y, self.act)

    def reparameterize(self):
        if self.mode == INFERENCE:
            return self
        fused = fuse_mobileone(
            [(br.conv, br.bn) for br in self.branches],
            scale_branch=(
                None if self.scale_branch is None
                else (self.scale_branch.conv, self.scale_branch.bn)
            ),
            identity=self.identity,
        )
        return MobileOneUnit(
            in_ch=self.in_ch, out_ch=self.out_ch, kernel=self.kernel,
            stride=self.stride, groups=self.groups, act=self.act,
            mode=INFERENCE, conv=fused.conv, n_branches=self.n_branches,
        )

    def state(self, prefix):
        if self.mode == INFERENCE:
            yield from _conv_state(f"{prefix}.conv", self.conv)
            return
        for i, br in enumerate(self.branches):
            yield from br.state(f"{prefix}.branch{i}")
        if self.scale_branch is not None:
            yield from self.scale_branch.state(f"{prefix}.scale")
        if self.identity is not None:
            yield from _bn_state(f"{prefix}.identity", self.identity)

    def load(self, prefix, tensors):
        out = MobileOneUnit(
            in_ch=self.in_ch, out_ch=self.out_ch, kernel=self.kernel,
            stride=self.stride, groups=self.groups, act=self.act,
            mode=self.mode, n_branches=self.n_branches,
        )
        if self.mode == INFERENCE:
            out.conv = _conv_load(f"{prefix}.conv", tensors, self.conv)
            return out
        out.branches = [
            br.load(f"{prefix}.branch{i}", tensors)
            for i, br in enumerate(self.branches)
        ]
        if self.scale_branch is not None:
            out.scale_branch = self.scale_branch.load(f"{prefix}.scale", tensors)
        if self.identity is not None:
            out.identity = _bn_load(f"{prefix}.identity", tensors, self.identity)
        return out


# -- RepMixer ------------------------------------------------------------------


class RepMixerBlock:
    """Token mixer `x + ls (.) dw(bn(x))`, fused at inference to one
    depthwise conv whose center taps absorb the skip.

    The input is zero-padded *before* normalization so the depthwise kernel
    sees a normalized plane all the way into the border; that is what makes
    the pre-conv bn fold exact rather than border-approximate.
    """

    kind = "repmixer"

    def __init__(self, *, dim, kernel, mode, bn=None, dw=None,
                 layer_scale=None, conv=None):
        self.dim = dim
        self.kernel = kernel
        self.mode = mode
        self.bn = bn
        self.dw = dw
        self.layer_scale = layer_scale
        self.conv = conv
        self._dw_valid = None if dw is None else replace(dw, padding=(0, 0))

    @classmethod
    def create(cls, rng, dim, kernel=3, layer_scale=None):
        k = _odd(kernel, "repmixer kernel")
        dw = init_conv(rng, dim, dim, (k, k), (1, 1), _same_pad(k), groups=dim)
        ls = None
        if layer_scale is not None:
            ls = np.full(dim, layer_scale, np.float32)
        return cls(dim=dim, kernel=k, mode=TRAIN, bn=identity_bn(dim), dw=dw,
                   layer_scale=ls)

    def forward(self, x):
        if self.mode == INFERENCE:
            return conv2d(x, self.conv)
        y = batchnorm_eval(zero_pad(x, self.dw.padding), self.bn)
        y = conv2d(y, self._dw_valid)
        if self.layer_scale is not None:
            y = y * self.layer_scale[None, :, None, None]
        return x + y

    def reparameterize(self):
        if self.mode == INFERENCE:
            return self
        fused = fuse_repmixer(self.dw, self.bn, self.layer_scale)
        return RepMixerBlock(dim=self.dim, kernel=self.kernel, mode=INFERENCE,
                             conv=fused.conv)

    def state(self, prefix):
        if self.mode == INFERENCE:
            yield from _conv_state(f"{prefix}.conv", self.conv)
            return
        yield from _bn_state(f"{prefix}.bn", self.bn)
        yield from _conv_state(f"{prefix}.dw", self.dw)
        if self.layer_scale is not None:
            yield f"{prefix}.layer_scale", self.layer_scale

    def load(self, prefix, tensors):
        if self.mode == INFERENCE:
            return RepMixerBlock(
                dim=self.dim, kernel=self.kernel, mode=INFERENCE,
                conv=_conv_load(f"{prefix}.conv", tensors, self.conv),
            )
        ls = None
        if self.layer_scale is not None:
            ls = np.ascontiguousarray(tensors[f"{prefix}.layer_scale"], np.float32)
        return RepMixerBlock(
            dim=self.dim, kernel=self.kernel, mode=TRAIN,
            bn=_bn_load(f"{prefix}.bn", tensors, self.bn),
            dw=_conv_load(f"{prefix}.dw", tensors, self.dw),
            layer_scale=ls,
        )


# -- ConvFFN -------------------------------------------------------------------


class ConvFFNBlock:
    """Feed-forward block with a permanent skip.

    With kernel > 1: x + pw2(act(pw1(bn(dw(x))))), the conv-FFN form where a
    large depthwise conv widens the receptive field and its bn folds into it
    at inference.  With kernel == 1 the depthwise conv is absent and the
    leading bn folds forward into pw1 (a 1x1 conv, so the fold is exact).
    """

    kind = "conv_ffn"

    def __init__(self, *, dim, hidden, kernel, act, mode, dw=None, bn=None,
                 pw1=None, pw2=None):
        self.dim = dim
        self.hidden = hidden
        self.kernel = kernel
        self.act = act
        self.mode = mode
        self.dw = dw
        self.bn = bn
        self.pw1 = pw1
        self.pw2 = pw2

    @classmethod
    def create(cls, rng, dim, expansion, kernel=7, act="gelu"):
        k = _odd(kernel, "conv_ffn kernel")
        hidden_f = dim * expansion
        hidden = int(round(hidden_f))
        if abs(hidden_f - hidden) > 1e-9 or hidden < 1:
            raise ConfigError(
                f"expansion {expansion} does not give an integer hidden width "
                f"for dim {dim}"
            )
        dw = None
        if k > 1:
            dw = init_conv(rng, dim, dim, (k, k), (1, 1), _same_pad(k), groups=dim)
        pw1 = init_conv(rng, hidden, dim, (1, 1))
        pw2 = init_conv(rng, dim, hidden, (1, 1))
        return cls(dim=dim, hidden=hidden, kernel=k, act=act, mode=TRAIN,
                   dw=dw, bn=identity_bn(dim), pw1=pw1, pw2=pw2)

    def forward(self, x):
        h = x
        if self.dw is not None:
            h = conv2d(h, self.dw)
        if self.bn is not None:
            h = batchnorm_eval(h, self.bn)
        h = conv2d(h, self.pw1)
        h = activation(h, self.act)
        h = conv2d(h, self.pw2)
        return x + h

    def reparameterize(self):
        if self.mode == INFERENCE:
            return self
        if self.dw is not None:
            dw = fold_bn_post(self.dw, self.bn)
            pw1 = self.pw1
        else:
            dw = None
            pw1 = fold_bn_pre(self.bn, self.pw1)
        return ConvFFNBlock(dim=self.dim, hidden=self.hidden, kernel=self.kernel,
                            act=self.act, mode=INFERENCE, dw=dw, bn=None,
                            pw1=pw1, pw2=self.pw2)

    def state(self, prefix):
        if self.dw is not None:
            yield from _conv_state(f"{prefix}.dw", self.dw)
        if self.bn is not None:
            yield from _bn_state(f"{prefix}.bn", self.bn)
        yield from _conv_state(f"{prefix}.pw1", self.pw1)
        yield from _conv_state(f"{prefix}.pw2", self.pw2)

    def load(self, prefix, tensors):
        return ConvFFNBlock(
            dim=self.dim, hidden=self.hidden, kernel=self.kernel, act=self.act,
            mode=self.mode,
            dw=None if self.dw is None else _conv_load(f"{prefix}.dw", tensors, self.dw),
            bn=None if self.bn is None else _bn_load(f"{prefix}.bn", tensors, self.bn),
            pw1=_conv_load(f"{prefix}.pw1", tensors, self.pw1),
            pw2=_conv_load(f"{prefix}.pw2", tensors, self.pw2),
        )


# -- conditional positional encoding --------------------------------------------


class CPEBlock:
    """Position signal from a depthwise conv, added to its input; the skip
    fuses into the kernel's center taps at inference."""

    kind = "cpe"

    def __init__(self, *, dim, kernel, mode, dw=None, conv=None):
        self.dim = dim
        self.kernel = kernel
        self.mode = mode
        self.dw = dw
        self.conv = conv

    @classmethod
    def create(cls, rng, dim, kernel=7):
        k = _odd(kernel, "cpe kernel")
        dw = init_conv(rng, dim, dim, (k, k), (1, 1), _same_pad(k), groups=dim)
        return cls(dim=dim, kernel=k, mode=TRAIN, dw=dw)

    def forward(self, x):
        if self.mode == INFERENCE:
            return conv2d(x, self.conv)
        return x + conv2d(x, self.dw)

    def reparameterize(self):
        if self.mode == INFERENCE:
            return self
        return CPEBlock(dim=self.dim, kernel=self.kernel, mode=INFERENCE,
                        conv=fuse_cpe(self.dw).conv)

    def state(self, prefix):
        if self.mode == INFERENCE:
            yield from _conv_state(f"{prefix}.conv", self.conv)
        else:
            yield from _conv_state(f"{prefix}.dw", self.dw)

    def load(self, prefix, tensors):
        if self.mode == INFERENCE:
            return CPEBlock(dim=self.dim, kernel=self.kernel, mode=INFERENCE,
                            conv=_conv_load(f"{prefix}.conv", tensors, self.conv))
        return CPEBlock(dim=self.dim, kernel=self.kernel, mode=TRAIN,
                        dw=_conv_load(f"{prefix}.dw", tensors, self.dw))


# -- attention -------------------------------------------------------------------


class AttentionBlock:
    """Token mixer `x + mhsa(bn(x))` with the skip kept permanently.

    Normalization is batch norm over channels (fusable); at inference it
    folds forward into the qkv projection, which is 1x1 so the fold is exact.
    """

    kind = "attention"

    def __init__(self, *, dim, heads, mode, bn=None, qkv=None, proj=None):
        self.dim = dim
        self.heads = heads
        self.mode = mode
        self.bn = bn
        self.qkv = qkv
        self.proj = proj

    @classmethod
    def create(cls, rng, dim, head_dim=HEAD_DIM):
        if dim % head_dim:
            raise ConfigError(
                f"attention dim {dim} not divisible by head_dim {head_dim}"
            )
        qkv = init_conv(rng, 3 * dim, dim, (1, 1))
        proj = init_conv(rng, dim, dim, (1, 1))
        return cls(dim=dim, heads=dim // head_dim, mode=TRAIN,
                   bn=identity_bn(dim), qkv=qkv, proj=proj)

    def forward(self, x):
        y = x if self.bn is None else batchnorm_eval(x, self.bn)
        tokens = nchw_to_tokens(y)
        mixed = mhsa(tokens, self.qkv, self.proj, self.heads)
        return x + tokens_to_nchw(mixed, (x.shape[2], x.shape[3]))

    def reparameterize(self):
        if self.mode == INFERENCE:
            return self
        return AttentionBlock(dim=self.dim, heads=self.heads, mode=INFERENCE,
                              qkv=fold_bn_pre(self.bn, self.qkv), proj=self.proj)

    def state(self, prefix):
        if self.bn is not None:
            yield from _bn_state(f"{prefix}.bn", self.bn)
        yield from _conv_state(f"{prefix}.qkv", self.qkv)
        yield from _conv_state(f"{prefix}.proj", self.proj)

    def load(self, prefix, tensors):
        return AttentionBlock(
            dim=self.dim, heads=self.heads, mode=self.mode,
            bn=None if self.bn is None else _bn_load(f"{prefix}.bn", tensors, self.bn),
            qkv=_conv_load(f"{prefix}.qkv", tensors, self.qkv),
            proj=_conv_load(f"{prefix}.proj", tensors, self.proj),
        )


# -- pooling mixer ----------------------------------------------------------------


class PoolingMixerBlock:
    """Parameter-free token mixer `x + (avgpool(x) - x)`; nothing to fuse."""

    kind = "pooling_mixer"

    def __init__(self, *, dim, kernel=3, mode=TRAIN, reparam_notice=None):
        self.dim = dim
        self.kernel = _odd(kernel, "pooling kernel")
        self.mode = mode
        self.reparam_notice = reparam_notice

    def forward(self, x):
        return x + pooling_mixer(x, self.kernel)

    def reparameterize(self):
        if self.mode == INFERENCE:
            return self
        return PoolingMixerBlock(
            dim=self.dim, kernel=self.kernel, mode=INFERENCE,
            reparam_notice="pooling mixer has no reparameterizable form",
        )

    def state(self, prefix):
        return iter(())

    def load(self, prefix, tensors):
        return self


# -- composites used by the model zoo ----------------------------------------------


class PatchEmbed:
    """Stride-2 downsampler between stages.

    Factorized form: depthwise k x k stride 2, then pointwise 1x1, both
    MobileOne-style.  Dense form (the pre-factorization ablation point): one
    dense k x k stride-2 conv+bn unit.
    """

    kind = "patch_embed"

    def __init__(self, units):
        self.units = units  # list of (name, MobileOneUnit)

    @classmethod
    def create(cls, rng, in_ch, out_ch, kernel, overparam_n, act, factorized):
        if factorized:
            units = [
                ("dw", MobileOneUnit.create(
                    rng, in_ch, in_ch, kernel, stride=2, groups=in_ch,
                    n_branches=overparam_n, act=act)),
                ("pw", MobileOneUnit.create(
                    rng, in_ch, out_ch, 1, stride=1, groups=1,
                    n_branches=overparam_n, act=act)),
            ]
        else:
            units = [
                ("conv", MobileOneUnit.create(
                    rng, in_ch, out_ch, kernel, stride=2, groups=1,
                    n_branches=overparam_n, act=act)),
            ]
        return cls(units)

    @property
    def mode(self):
        return self.units[0][1].mode

    def forward(self, x):
        for _, unit in self.units:
            x = unit.forward(x)
        return x

    def reparameterize(self):
        return PatchEmbed([(n, u.reparameterize()) for n, u in self.units])

    def state(self, prefix):
        for name, unit in self.units:
            yield from unit.state(f"{prefix}.{name}")

    def load(self, prefix, tensors):
        return PatchEmbed(
            [(n, u.load(f"{prefix}.{n}", tensors)) for n, u in self.units]
        )


class Stem:
    """Input stem: two stride-2 steps taking H x W to H/4 x W/4.

    Factorized: dense 3x3 s2, depthwise 3x3 s2, pointwise 1x1, all
    MobileOne-style.  Dense: two plain 3x3 s2 conv+bn units.
    """

    kind = "stem_unit"

    def __init__(self, units):
        self.units = units

    @classmethod
    def create(cls, rng, in_ch, out_ch, overparam_n, act, factorized):
        if factorized:
            units = [
                ("conv", MobileOneUnit.create(
                    rng, in_ch, out_ch, 3, stride=2, groups=1,
                    n_branches=overparam_n, act=act)),
                ("dw", MobileOneUnit.create(
                    rng, out_ch, out_ch, 3, stride=2, groups=out_ch,
                    n_branches=overparam_n, act=act)),
                ("pw", MobileOneUnit.create(
                    rng, out_ch, out_ch, 1, stride=1, groups=1,
                    n_branches=overparam_n, act=act)),
            ]
        else:
            units = [
                ("conv1", MobileOneUnit.create(
                    rng, in_ch, out_ch, 3, stride=2, groups=1,
                    n_branches=overparam_n, act=act)),
                ("conv2", MobileOneUnit.create(
                    rng, out_ch, out_ch, 3, stride=2, groups=1,
                    n_branches=overparam_n, act=act)),
            ]
        return cls(units)

    @property
    def mode(self):
        return self.units[0][1].mode

    def forward(self, x):
        for _, unit in self.units:
            x = unit.forward(x)
        return x

    def reparameterize(self):
        return Stem([(n, u.reparameterize()) for n, u in self.units])

    def state(self, prefix):
        for name, unit in self.units:
            yield from unit.state(f"{prefix}.{name}")

    def load(self, prefix, tensors):
        return Stem([(n, u.load(f"{prefix}.{n}", tensors)) for n, u in self.units])


# -- spec-level operations -----------------------------------------------------------


def block_init(kind: str, meta: dict, seed: int):
    """Build a block of the given kind with deterministic seeded init."""
    rng = np.random.default_rng(seed)
    meta = dict(meta)
    try:
        if kind == "repmixer":
            return RepMixerBlock.create(
                rng, meta["dim"], meta.get("kernel", 3), meta.get("layer_scale"))
        if kind == "mobileone":
            return MobileOneUnit.create(
                rng, meta["in_ch"], meta["out_ch"], meta.get("kernel", 3),
                meta.get("stride", 1), meta.get("groups", 1),
                meta.get("n_branches", 4), meta.get("act", "gelu"))
        if kind == "conv_ffn":
            return ConvFFNBlock.create(
                rng, meta["dim"], meta.get("expansion", 4),
                meta.get("kernel", 7), meta.get("act", "gelu"))
        if kind == "patch_embed":
            return PatchEmbed.create(
                rng, meta["in_ch"], meta["out_ch"], meta.get("kernel", 7),
                meta.get("overparam_n", 4), meta.get("act", "gelu"),
                meta.get("factorized", True))
        if kind == "stem_unit":
            return Stem.create(
                rng, meta.get("in_ch", 3), meta["out_ch"],
                meta.get("overparam_n", 4), meta.get("act", "gelu"),
                meta.get("factorized", True))
        if kind == "cpe":
            return CPEBlock.create(rng, meta["dim"], meta.get("kernel", 7))
        if kind == "attention":
            return AttentionBlock.create(
                rng, meta["dim"], meta.get("head_dim", HEAD_DIM))
        if kind == "pooling_mixer":
            return PoolingMixerBlock(dim=meta["dim"], kernel=meta.get("kernel", 3))
    except KeyError as exc:
        raise ConfigError(f"missing meta field {exc} for block kind {kind!r}")
    raise ConfigError(f"unknown block kind {kind!r}")


def block_forward(block, x):
    return block.forward(x)


def block_reparameterize(block):
    return block.reparameterize()
