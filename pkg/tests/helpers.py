"""Shared test utilities: random parameter factories at realistic scales,
batch-norm scrambling, and paired block-by-block model comparison."""

import numpy as np

from fastvit.params import BatchNormParams, ConvParams


def rand_conv(rng, out_ch, in_ch, k, stride=1, padding=None, groups=1, std=0.02):
    """Random conv at init-scale magnitudes (the package's operating regime)."""
    if padding is None:
        padding = (k - 1) // 2
    w = (std * rng.standard_normal((out_ch, in_ch // groups, k, k))).astype(np.float32)
    b = (std * rng.standard_normal(out_ch)).astype(np.float32)
    return ConvParams(w, b, (stride, stride), (padding, padding), groups)


def rand_bn(rng, channels):
    """Random running statistics of the kind training would produce."""
    return BatchNormParams(
        gamma=(1.0 + 0.2 * rng.standard_normal(channels)).astype(np.float32),
        beta=(0.2 * rng.standard_normal(channels)).astype(np.float32),
        running_mean=(0.5 * rng.standard_normal(channels)).astype(np.float32),
        running_var=rng.uniform(0.3, 2.0, channels).astype(np.float32),
        eps=1e-5,
    )


def scramble_bn(bn: BatchNormParams, rng) -> None:
    c = bn.channels
    bn.gamma = (1.0 + 0.2 * rng.standard_normal(c)).astype(np.float32)
    bn.beta = (0.2 * rng.standard_normal(c)).astype(np.float32)
    bn.running_mean = (0.5 * rng.standard_normal(c)).astype(np.float32)
    bn.running_var = rng.uniform(0.3, 2.0, c).astype(np.float32)


def randomize_model_bn(model, seed) -> None:
    """Replace every batch norm's statistics with seeded random values.

    Fresh models carry identity statistics, which makes activations decay
    through depth; scrambling keeps magnitudes realistic so equivalence
    checks are non-vacuous.
    """
    rng = np.random.default_rng(seed)
    for _, blk in model.named_blocks():
        bn = getattr(blk, "bn", None)
        if isinstance(bn, BatchNormParams):
            scramble_bn(bn, rng)
        ident = getattr(blk, "identity", None)
        if isinstance(ident, BatchNormParams):
            scramble_bn(ident, rng)
        for br in getattr(blk, "branches", None) or []:
            scramble_bn(br.bn, rng)
        scale = getattr(blk, "scale_branch", None)
        if scale is not None:
            scramble_bn(scale.bn, rng)


def max_abs(a, b) -> float:
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def paired_forward_devs(model_a, model_b, x):
    """Run two structurally-matching models block by block on the same input.

    Returns (per-block max-abs deviations keyed by block name, logit
    deviation, logits of model_a).
    """
    xa = xb = np.ascontiguousarray(x, np.float32)
    devs = {}
    for (name, blk_a), (_, blk_b) in zip(model_a.named_blocks(),
                                         model_b.named_blocks()):
        xa = blk_a.forward(xa)
        xb = blk_b.forward(xb)
        devs[name] = max_abs(xa, xb)
    la = model_a.head_forward(xa)
    lb = model_b.head_forward(xb)
    return devs, max_abs(la, lb), la


def model_bytes(model) -> bytes:
    """Concatenated parameter bytes, for bitwise structure comparisons."""
    return b"".join(arr.tobytes() for _, arr in model.named_tensors())
