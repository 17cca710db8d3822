"""Parameter containers for convolutions and batch normalization.

Everything downstream (block forwards, the fusion algebra, serialization)
works on these two dataclasses plus raw float32 NCHW arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ShapeError


def _f32(a, name: str) -> np.ndarray:
    arr = np.ascontiguousarray(a, dtype=np.float32)
    if not np.all(np.isfinite(arr)):
        raise ShapeError(f"{name} contains non-finite values")
    return arr


@dataclass
class ConvParams:
    """A 2-d convolution's full parameterization.

    weight has shape (out_ch, in_ch // groups, kh, kw); bias has shape
    (out_ch,).  Zero padding is assumed everywhere.
    """

    weight: np.ndarray
    bias: np.ndarray
    stride: tuple[int, int] = (1, 1)
    padding: tuple[int, int] = (0, 0)
    groups: int = 1

    def __post_init__(self):
        self.weight = _f32(self.weight, "conv weight")
        self.bias = _f32(self.bias, "conv bias")
        if self.weight.ndim != 4:
            raise ShapeError(
                f"conv weight must be rank 4, got shape {self.weight.shape}"
            )
        if self.bias.shape != (self.weight.shape[0],):
            raise ShapeError(
                f"conv bias shape {self.bias.shape} does not match "
                f"out_ch {self.weight.shape[0]}"
            )
        self.stride = (int(self.stride[0]), int(self.stride[1]))
        self.padding = (int(self.padding[0]), int(self.padding[1]))
        self.groups = int(self.groups)
        if self.groups < 1 or self.weight.shape[0] % self.groups:
            raise ShapeError(
                f"out_ch {self.weight.shape[0]} not divisible by groups {self.groups}"
            )
        if min(self.stride) < 1 or min(self.padding) < 0:
            raise ShapeError(
                f"illegal stride {self.stride} / padding {self.padding}"
            )

    @property
    def out_ch(self) -> int:
        return self.weight.shape[0]

    @property
    def in_ch(self) -> int:
        return self.weight.shape[1] * self.groups

    @property
    def kernel(self) -> tuple[int, int]:
        return self.weight.shape[2], self.weight.shape[3]

    @property
    def is_depthwise(self) -> bool:
        return self.groups == self.in_ch == self.out_ch

    @property
    def n_params(self) -> int:
        return self.weight.size + self.bias.size

    def copy(self) -> "ConvParams":
        return replace(self, weight=self.weight.copy(), bias=self.bias.copy())


@dataclass
class BatchNormParams:
    """Per-channel affine statistics for evaluation-mode batch norm.

    Only running statistics are stored; there is no training mode anywhere in
    this package, which is what makes fusion with adjacent convolutions exact.
    """

    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    eps: float = 1e-5

    def __post_init__(self):
        self.gamma = _f32(self.gamma, "bn gamma")
        self.beta = _f32(self.beta, "bn beta")
        self.running_mean = _f32(self.running_mean, "bn running_mean")
        self.running_var = _f32(self.running_var, "bn running_var")
        self.eps = float(self.eps)
        c = self.gamma.shape
        for name, arr in (
            ("beta", self.beta),
            ("running_mean", self.running_mean),
            ("running_var", self.running_var),
        ):
            if arr.shape != c:
                raise ShapeError(
                    f"bn {name} shape {arr.shape} does not match gamma shape {c}"
                )
        if self.gamma.ndim != 1:
            raise ShapeError(f"bn parameters must be rank 1, got shape {c}")
        if self.eps <= 0.0:
            raise ShapeError(f"bn eps must be positive, got {self.eps}")
        if np.any(self.running_var < 0.0):
            raise ShapeError("bn running_var has negative entries")

    @property
    def channels(self) -> int:
        return self.gamma.shape[0]

    @property
    def n_params(self) -> int:
        # gamma, beta, running_mean, running_var; eps is configuration
        return 4 * self.channels

    def copy(self) -> "BatchNormParams":
        return BatchNormParams(
            self.gamma.copy(),
            self.beta.copy(),
            self.running_mean.copy(),
            self.running_var.copy(),
            self.eps,
        )

    def scale_shift(self) -> tuple[np.ndarray, np.ndarray]:
        """Return float64 (s, t) with bn(x) == s*x + t per channel."""
        s = self.gamma.astype(np.float64) / np.sqrt(
            self.running_var.astype(np.float64) + self.eps
        )
        t = self.beta.astype(np.float64) - self.running_mean.astype(np.float64) * s
        return s, t


def identity_bn(channels: int, eps: float = 1e-5) -> BatchNormParams:
    """Fresh batch norm acting as the identity map (the init-time state)."""
    return BatchNormParams(
        gamma=np.ones(channels, np.float32),
        beta=np.zeros(channels, np.float32),
        running_mean=np.zeros(channels, np.float32),
        running_var=np.ones(channels, np.float32),
        eps=eps,
    )


def zeros_conv(
    out_ch: int,
    in_ch: int,
    kernel: tuple[int, int],
    stride: tuple[int, int] = (1, 1),
    padding: tuple[int, int] = (0, 0),
    groups: int = 1,
) -> ConvParams:
    if in_ch % groups:
        raise ShapeError(f"in_ch {in_ch} not divisible by groups {groups}")
    w = np.zeros((out_ch, in_ch // groups, kernel[0], kernel[1]), np.float32)
    return ConvParams(w, np.zeros(out_ch, np.float32), stride, padding, groups)
