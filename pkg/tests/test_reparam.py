"""Fusion algebra tests: every transform is checked against sequential
application of the unfused ops on random instances, plus closed-form spot
checks.  Randomness uses init-scale weights and training-scale statistics,
the regime the fusions actually operate in."""

import numpy as np
import pytest

from fastvit.errors import ConfigError, ShapeError
from fastvit.params import BatchNormParams, ConvParams, identity_bn, zeros_conv
from fastvit.reparam import (
    add_identity,
    bn_branch_to_conv,
    fold_bn_post,
    fold_bn_pre,
    fuse_cpe,
    fuse_mobileone,
    fuse_repmixer,
    pad_kernel,
    sum_branches,
)
from fastvit.tensor_ops import batchnorm_eval, conv2d, zero_pad

from helpers import max_abs, rand_bn, rand_conv

N_RANDOM = 100


def _random_geometry(rng):
    groups = int(rng.choice([1, 1, 2, 4]))
    icg = int(rng.integers(1, 4))
    ocg = int(rng.integers(1, 4))
    in_ch, out_ch = groups * icg, groups * ocg
    k = int(rng.choice([1, 3, 5]))
    stride = int(rng.choice([1, 1, 2]))
    return in_ch, out_ch, k, stride, groups


class TestFoldBnPost:
    def test_identity_bn_unchanged(self):
        rng = np.random.default_rng(0)
        conv = rand_conv(rng, 4, 4, 3)
        bn = identity_bn(4, eps=1e-12)
        folded = fold_bn_post(conv, bn)
        assert max_abs(folded.weight, conv.weight) < 1e-7
        assert max_abs(folded.bias, conv.bias) < 1e-7

    def test_scalar_formula(self):
        conv = ConvParams(
            np.full((1, 1, 1, 1), 0.25, np.float32),
            np.array([0.5], np.float32), (1, 1), (0, 0), 1,
        )
        bn = BatchNormParams(
            np.array([2.0], np.float32), np.array([1.0], np.float32),
            np.array([0.5], np.float32), np.array([0.75], np.float32), eps=0.25,
        )
        folded = fold_bn_post(conv, bn)
        assert folded.weight[0, 0, 0, 0] == pytest.approx(0.5, abs=1e-7)
        assert folded.bias[0] == pytest.approx(1.0, abs=1e-7)

    def test_random_sequential_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(N_RANDOM):
            in_ch, out_ch, k, stride, groups = _random_geometry(rng)
            conv = rand_conv(rng, out_ch, in_ch, k, stride, groups=groups)
            bn = rand_bn(rng, out_ch)
            x = rng.standard_normal((1, in_ch, 8, 8)).astype(np.float32)
            want = batchnorm_eval(conv2d(x, conv), bn)
            got = conv2d(x, fold_bn_post(conv, bn))
            assert max_abs(got, want) <= 1e-6

    def test_channel_mismatch(self):
        conv = rand_conv(np.random.default_rng(0), 4, 4, 3)
        with pytest.raises(ShapeError, match="out_ch"):
            fold_bn_post(conv, identity_bn(5))


class TestFoldBnPre:
    def test_identity_bn_unchanged(self):
        rng = np.random.default_rng(2)
        conv = rand_conv(rng, 6, 4, 3)
        folded = fold_bn_pre(identity_bn(4, eps=1e-12), conv)
        assert max_abs(folded.weight, conv.weight) < 1e-7
        assert max_abs(folded.bias, conv.bias) < 1e-7

    def test_all_ones_depthwise_shift(self):
        c = 2
        conv = ConvParams(
            np.ones((c, 1, 3, 3), np.float32),
            np.array([0.1, -0.4], np.float32), (1, 1), (0, 0), c,
        )
        bn = BatchNormParams(
            np.ones(c, np.float32), np.full(c, 2.0, np.float32),
            np.zeros(c, np.float32), np.ones(c, np.float32), eps=1e-12,
        )
        folded = fold_bn_pre(bn, conv)
        np.testing.assert_allclose(folded.weight, conv.weight, atol=1e-7)
        np.testing.assert_allclose(folded.bias, conv.bias + 18.0, atol=1e-5)

    def test_random_unpadded_sequential_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(N_RANDOM):
            in_ch, out_ch, k, stride, groups = _random_geometry(rng)
            conv = rand_conv(rng, out_ch, in_ch, k, stride, padding=0,
                             groups=groups)
            bn = rand_bn(rng, in_ch)
            x = rng.standard_normal((1, in_ch, 9, 9)).astype(np.float32)
            want = conv2d(batchnorm_eval(x, bn), conv)
            got = conv2d(x, fold_bn_pre(bn, conv))
            assert max_abs(got, want) <= 1e-6

    def test_pad_before_normalize_composition(self):
        # with padding, the fold matches the normalize-after-pad composition
        rng = np.random.default_rng(4)
        for _ in range(20):
            c = int(rng.integers(2, 9))
            conv = rand_conv(rng, c, c, 3, groups=c)
            bn = rand_bn(rng, c)
            x = rng.standard_normal((1, c, 7, 7)).astype(np.float32)
            inner = conv2d(batchnorm_eval(zero_pad(x, conv.padding), bn),
                           ConvParams(conv.weight, conv.bias, conv.stride,
                                      (0, 0), conv.groups))
            got = conv2d(x, fold_bn_pre(bn, conv))
            assert max_abs(got, inner) <= 1e-6

    def test_channel_mismatch(self):
        conv = rand_conv(np.random.default_rng(0), 4, 4, 3)
        with pytest.raises(ShapeError, match="in_ch"):
            fold_bn_pre(identity_bn(3), conv)


class TestAddIdentity:
    def test_zero_conv_becomes_identity(self):
        rng = np.random.default_rng(5)
        conv = add_identity(zeros_conv(3, 3, (3, 3), padding=(1, 1), groups=3), 1.0)
        x = rng.standard_normal((1, 3, 6, 6)).astype(np.float32)
        np.testing.assert_array_equal(conv2d(x, conv), x)

    def test_center_tap_shift_and_sum_of_paths(self):
        rng = np.random.default_rng(6)
        c = 4
        base = rand_conv(rng, c, c, 3, groups=c)
        base.weight[:, 0, 1, 1] = 0.5
        fused = add_identity(base, 1.0)
        np.testing.assert_allclose(fused.weight[:, 0, 1, 1], 1.5, atol=1e-7)
        x = rng.standard_normal((1, c, 6, 6)).astype(np.float32)
        assert max_abs(conv2d(x, fused), x + conv2d(x, base)) <= 1e-6

    def test_per_channel_scale(self):
        rng = np.random.default_rng(7)
        c = 3
        base = rand_conv(rng, c, c, 3, groups=c)
        scale = np.array([0.5, -1.0, 2.0], np.float64)
        fused = add_identity(base, scale)
        x = rng.standard_normal((1, c, 5, 5)).astype(np.float32)
        want = conv2d(x, base) + scale[None, :, None, None].astype(np.float32) * x
        assert max_abs(conv2d(x, fused), want) <= 1e-6

    def test_even_kernel_rejected(self):
        w = np.zeros((2, 2, 2, 2), np.float32)
        conv = ConvParams(w, np.zeros(2, np.float32))
        with pytest.raises(ConfigError, match="center"):
            add_identity(conv, 1.0)

    def test_channel_change_rejected(self):
        conv = zeros_conv(4, 2, (3, 3))
        with pytest.raises(ConfigError, match="identity"):
            add_identity(conv, 1.0)

    def test_random_oracle(self):
        # skip-absorbing ops carry the full input magnitude, so inputs stay
        # at unit scale where a 1e-6 absolute bound is several float32 ulps
        rng = np.random.default_rng(8)
        for _ in range(N_RANDOM):
            groups = int(rng.choice([1, 2, 4]))
            c = groups * int(rng.integers(1, 4))
            k = int(rng.choice([1, 3, 5]))
            conv = rand_conv(rng, c, c, k, groups=groups)
            x = rng.uniform(-1.0, 1.0, (1, c, 6, 6)).astype(np.float32)
            got = conv2d(x, add_identity(conv, 1.0))
            assert max_abs(got, x + conv2d(x, conv)) <= 1e-6


class TestPadKernel:
    def test_one_by_one_to_center(self):
        conv = ConvParams(
            np.full((1, 1, 1, 1), 0.7, np.float32), np.zeros(1, np.float32)
        )
        padded = pad_kernel(conv, (3, 3))
        want = np.zeros((1, 1, 3, 3), np.float32)
        want[0, 0, 1, 1] = 0.7
        np.testing.assert_array_equal(padded.weight, want)
        assert padded.padding == (1, 1)

    def test_same_size_unchanged(self):
        rng = np.random.default_rng(9)
        conv = rand_conv(rng, 2, 2, 3)
        padded = pad_kernel(conv, (3, 3))
        np.testing.assert_array_equal(padded.weight, conv.weight)
        assert padded.padding == conv.padding

    def test_parity_mismatch_rejected(self):
        conv = zeros_conv(1, 1, (3, 3))
        with pytest.raises(ConfigError, match="parity"):
            pad_kernel(conv, (4, 4))

    def test_shrink_rejected(self):
        conv = zeros_conv(1, 1, (5, 5))
        with pytest.raises(ConfigError, match="shrink"):
            pad_kernel(conv, (3, 3))

    def test_random_oracle(self):
        rng = np.random.default_rng(10)
        for _ in range(N_RANDOM):
            in_ch = int(rng.integers(1, 5))
            out_ch = int(rng.integers(1, 5))
            conv = rand_conv(rng, out_ch, in_ch, 1, padding=0)
            target = int(rng.choice([3, 5, 7]))
            padded = pad_kernel(conv, (target, target))
            x = rng.standard_normal((1, in_ch, 6, 6)).astype(np.float32)
            assert max_abs(conv2d(x, padded), conv2d(x, conv)) <= 1e-7


class TestBnBranchToConv:
    def test_identity_bn_gives_identity_kernel(self):
        conv = bn_branch_to_conv(identity_bn(3, eps=1e-12), (3, 3), groups=3)
        want = np.zeros((3, 1, 3, 3), np.float32)
        want[:, 0, 1, 1] = 1.0
        assert max_abs(conv.weight, want) < 1e-6
        assert max_abs(conv.bias, np.zeros(3)) < 1e-7

    def test_gamma_scales_center(self):
        bn = identity_bn(2, eps=1e-12)
        bn.gamma = np.full(2, 3.0, np.float32)
        conv = bn_branch_to_conv(bn, (3, 3), groups=2)
        np.testing.assert_allclose(conv.weight[:, 0, 1, 1], 3.0, atol=1e-6)

    def test_even_kernel_rejected(self):
        with pytest.raises(ConfigError, match="odd"):
            bn_branch_to_conv(identity_bn(2), (4, 4))

    def test_random_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(N_RANDOM):
            groups = int(rng.choice([1, 2, 3]))
            c = groups * int(rng.integers(1, 4))
            k = int(rng.choice([1, 3, 5]))
            bn = rand_bn(rng, c)
            conv = bn_branch_to_conv(bn, (k, k), groups=groups)
            x = rng.standard_normal((1, c, 6, 6)).astype(np.float32)
            assert max_abs(conv2d(x, conv), batchnorm_eval(x, bn)) <= 1e-6


class TestSumBranches:
    def test_two_identical_double(self):
        rng = np.random.default_rng(12)
        conv = rand_conv(rng, 3, 2, 3)
        summed = sum_branches([conv, conv])
        np.testing.assert_allclose(summed.weight, 2.0 * conv.weight, atol=1e-7)
        np.testing.assert_allclose(summed.bias, 2.0 * conv.bias, atol=1e-7)

    def test_negation_cancels(self):
        rng = np.random.default_rng(13)
        conv = rand_conv(rng, 3, 2, 3)
        neg = ConvParams(-conv.weight, -conv.bias, conv.stride, conv.padding,
                         conv.groups)
        summed = sum_branches([conv, neg])
        np.testing.assert_array_equal(summed.weight,
                                      np.zeros_like(conv.weight))

    def test_single_branch_identity_on_params(self):
        rng = np.random.default_rng(14)
        conv = rand_conv(rng, 4, 4, 3)
        summed = sum_branches([conv])
        np.testing.assert_array_equal(summed.weight, conv.weight)
        np.testing.assert_array_equal(summed.bias, conv.bias)

    def test_mismatch_names_branch_index(self):
        a = zeros_conv(2, 2, (3, 3), padding=(1, 1))
        b = zeros_conv(2, 2, (3, 3), padding=(0, 0))
        with pytest.raises(ConfigError, match="branch 1"):
            sum_branches([a, b])

    def test_random_oracle(self):
        rng = np.random.default_rng(15)
        for _ in range(N_RANDOM):
            in_ch = int(rng.integers(1, 5))
            out_ch = int(rng.integers(1, 5))
            k = int(rng.choice([1, 3]))
            branches = [rand_conv(rng, out_ch, in_ch, k) for _ in range(4)]
            x = rng.standard_normal((1, in_ch, 6, 6)).astype(np.float32)
            want = sum(conv2d(x, br) for br in branches)
            got = conv2d(x, sum_branches(branches))
            assert max_abs(got, want) <= 1e-5


def _repmixer_train_forward(x, dw, bn, layer_scale=None):
    valid = ConvParams(dw.weight, dw.bias, dw.stride, (0, 0), dw.groups)
    y = conv2d(batchnorm_eval(zero_pad(x, dw.padding), bn), valid)
    if layer_scale is not None:
        y = y * layer_scale[None, :, None, None]
    return x + y


class TestFuseRepmixer:
    def test_inert_block_is_identity(self):
        fused = fuse_repmixer(zeros_conv(3, 3, (3, 3), padding=(1, 1), groups=3),
                              identity_bn(3))
        x = np.random.default_rng(16).standard_normal((1, 3, 5, 5)).astype(np.float32)
        np.testing.assert_array_equal(conv2d(x, fused.conv), x)

    def test_random_equivalence(self):
        rng = np.random.default_rng(17)
        for _ in range(30):
            c = int(rng.integers(2, 9))
            dw = rand_conv(rng, c, c, 3, groups=c)
            bn = rand_bn(rng, c)
            x = rng.standard_normal((1, c, 16, 16)).astype(np.float32)
            fused = fuse_repmixer(dw, bn)
            assert max_abs(conv2d(x, fused.conv),
                           _repmixer_train_forward(x, dw, bn)) <= 1e-6

    def test_layer_scale_fuses(self):
        rng = np.random.default_rng(18)
        c = 8
        dw = rand_conv(rng, c, c, 3, groups=c)
        bn = rand_bn(rng, c)
        ls = (0.1 * rng.standard_normal(c)).astype(np.float32)
        x = rng.standard_normal((1, c, 16, 16)).astype(np.float32)
        fused = fuse_repmixer(dw, bn, ls)
        assert max_abs(conv2d(x, fused.conv),
                       _repmixer_train_forward(x, dw, bn, ls)) <= 1e-6

    def test_zero_layer_scale_is_identity(self):
        rng = np.random.default_rng(19)
        c = 4
        dw = rand_conv(rng, c, c, 3, groups=c)
        bn = rand_bn(rng, c)
        fused = fuse_repmixer(dw, bn, np.zeros(c, np.float32))
        x = rng.standard_normal((1, c, 6, 6)).astype(np.float32)
        np.testing.assert_array_equal(conv2d(x, fused.conv), x)

    def test_non_depthwise_rejected(self):
        with pytest.raises(ConfigError, match="depthwise"):
            fuse_repmixer(zeros_conv(4, 2, (3, 3)), identity_bn(4))


def _mobileone_train_forward(x, branches, scale_branch, identity):
    total = None
    for conv, bn in branches:
        y = batchnorm_eval(conv2d(x, conv), bn)
        total = y if total is None else total + y
    if scale_branch is not None:
        conv, bn = scale_branch
        total = total + batchnorm_eval(conv2d(x, conv), bn)
    if identity is not None:
        total = total + batchnorm_eval(x, identity)
    return total


class TestFuseMobileone:
    def test_single_branch_identity_bn_is_original(self):
        rng = np.random.default_rng(20)
        conv = rand_conv(rng, 4, 4, 3)
        fused = fuse_mobileone([(conv, identity_bn(4, eps=1e-12))])
        assert max_abs(fused.conv.weight, conv.weight) < 1e-7

    def test_four_identical_branches_quadruple(self):
        rng = np.random.default_rng(21)
        conv = rand_conv(rng, 4, 4, 3)
        fused = fuse_mobileone([(conv, identity_bn(4, eps=1e-12))] * 4)
        assert max_abs(fused.conv.weight, 4.0 * conv.weight) < 1e-6

    def test_full_random_equivalence(self):
        rng = np.random.default_rng(22)
        for _ in range(20):
            groups = int(rng.choice([1, 2]))
            c = groups * int(rng.integers(1, 4)) * 2
            k = 3
            branches = [
                (rand_conv(rng, c, c, k, groups=groups), rand_bn(rng, c))
                for _ in range(4)
            ]
            scale = (rand_conv(rng, c, c, 1, padding=0, groups=groups),
                     rand_bn(rng, c))
            identity = rand_bn(rng, c)
            fused = fuse_mobileone(branches, scale, identity)
            x = rng.standard_normal((1, c, 8, 8)).astype(np.float32)
            want = _mobileone_train_forward(x, branches, scale, identity)
            assert max_abs(conv2d(x, fused.conv), want) <= 1e-5

    def test_stride2_branches(self):
        rng = np.random.default_rng(23)
        c = 4
        branches = [
            (rand_conv(rng, c, c, 3, stride=2, groups=c), rand_bn(rng, c))
            for _ in range(2)
        ]
        scale = (rand_conv(rng, c, c, 1, stride=2, padding=0, groups=c),
                 rand_bn(rng, c))
        fused = fuse_mobileone(branches, scale, None)
        x = rng.standard_normal((1, c, 10, 10)).astype(np.float32)
        want = _mobileone_train_forward(x, branches, scale, None)
        assert max_abs(conv2d(x, fused.conv), want) <= 1e-5

    def test_illegal_identity_rejected(self):
        rng = np.random.default_rng(24)
        branches = [(rand_conv(rng, 4, 4, 3, stride=2), rand_bn(rng, 4))]
        with pytest.raises(ConfigError, match="identity"):
            fuse_mobileone(branches, None, identity_bn(4))


class TestFuseCpe:
    def test_zero_dw_is_identity(self):
        fused = fuse_cpe(zeros_conv(2, 2, (7, 7), padding=(3, 3), groups=2))
        x = np.random.default_rng(25).standard_normal((1, 2, 8, 8)).astype(np.float32)
        np.testing.assert_array_equal(conv2d(x, fused.conv), x)

    def test_random_equivalence_7x7(self):
        rng = np.random.default_rng(26)
        for _ in range(20):
            c = int(rng.integers(2, 7))
            dw = rand_conv(rng, c, c, 7, groups=c)
            x = rng.standard_normal((1, c, 9, 9)).astype(np.float32)
            fused = fuse_cpe(dw)
            assert max_abs(conv2d(x, fused.conv), x + conv2d(x, dw)) <= 1e-6

    def test_identity_dw_doubles(self):
        c = 3
        w = np.zeros((c, 1, 3, 3), np.float32)
        w[:, 0, 1, 1] = 1.0
        dw = ConvParams(w, np.zeros(c, np.float32), (1, 1), (1, 1), c)
        fused = fuse_cpe(dw)
        np.testing.assert_allclose(fused.conv.weight[:, 0, 1, 1], 2.0, atol=1e-7)
        x = np.random.default_rng(27).standard_normal((1, c, 5, 5)).astype(np.float32)
        assert max_abs(conv2d(x, fused.conv), 2.0 * x) <= 1e-6

    def test_non_depthwise_rejected(self):
        with pytest.raises(ConfigError, match="depthwise"):
            fuse_cpe(zeros_conv(4, 2, (3, 3)))


class TestStructuralInvariants:
    def test_parameter_monotonicity(self):
        rng = np.random.default_rng(28)
        c = 6
        branches = [(rand_conv(rng, c, c, 3, groups=c), rand_bn(rng, c))
                    for _ in range(4)]
        scale = (rand_conv(rng, c, c, 1, padding=0, groups=c), rand_bn(rng, c))
        identity = rand_bn(rng, c)
        train_params = sum(cv.n_params + bn.n_params for cv, bn in branches)
        train_params += scale[0].n_params + scale[1].n_params + identity.n_params
        fused = fuse_mobileone(branches, scale, identity)
        assert fused.conv.n_params < train_params

        dw = rand_conv(rng, c, c, 3, groups=c)
        bn = rand_bn(rng, c)
        assert fuse_repmixer(dw, bn).conv.n_params < dw.n_params + bn.n_params

        cpe_dw = rand_conv(rng, c, c, 7, groups=c)
        assert fuse_cpe(cpe_dw).conv.n_params <= cpe_dw.n_params
