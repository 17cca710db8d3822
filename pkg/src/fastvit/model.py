"""Variant recipes and whole-model assembly.

A model is a stem, four stages of (token mixer + conv-FFN) pairs joined by
stride-2 patch embeddings, and a global-average-pool + linear head.  Stages
run at 1/4, 1/8, 1/16 and 1/32 of the input resolution.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .blocks import (
    HEAD_DIM,
    INFERENCE,
    TRAIN,
    AttentionBlock,
    ConvFFNBlock,
    CPEBlock,
    PatchEmbed,
    PoolingMixerBlock,
    RepMixerBlock,
    Stem,
    trunc_normal,
)
from .errors import ConfigError, ShapeError
from .tensor_ops import ACTIVATIONS, as_nchw, global_avg_pool, linear

MIXERS = ("repmixer", "attention", "pooling")

REPMIXER_KERNEL = 3
POOLING_KERNEL = 3


@dataclass(frozen=True)
class VariantConfig:
    """A full model recipe.

    ffn_kernel == 1 means the FFN has no depthwise conv (plain MLP form);
    embed_kernel is the depthwise kernel of stem-adjacent downsamplers.
    cpe_stages None means "every attention stage"; pass an explicit tuple to
    override (empty tuple disables positional encodings).
    """

    name: str
    channels: tuple[int, int, int, int]
    depths: tuple[int, int, int, int]
    mixers: tuple[str, str, str, str]
    expansion: float = 4.0
    ffn_kernel: int = 7
    embed_kernel: int = 7
    overparam_n: int = 4
    factorized: bool = True
    activation: str = "gelu"
    layer_scale: float | None = None
    cpe_stages: tuple[int, ...] | None = None
    num_classes: int = 1000

    def validate(self) -> "VariantConfig":
        if len(self.channels) != 4 or len(self.depths) != 4 or len(self.mixers) != 4:
            raise ConfigError("channels/depths/mixers must each have 4 entries")
        if min(self.channels) < 1 or min(self.depths) < 1:
            raise ConfigError(
                f"channels {self.channels} and depths {self.depths} must be positive"
            )
        for m in self.mixers:
            if m not in MIXERS:
                raise ConfigError(f"unknown mixer {m!r}; expected one of {MIXERS}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(
                f"unknown activation {self.activation!r}; expected one of {ACTIVATIONS}"
            )
        if self.ffn_kernel % 2 == 0 or self.embed_kernel % 2 == 0:
            raise ConfigError(
                f"kernels must be odd: ffn_kernel={self.ffn_kernel} "
                f"embed_kernel={self.embed_kernel}"
            )
        if self.overparam_n < 1:
            raise ConfigError(f"overparam_n must be >= 1, got {self.overparam_n}")
        if self.num_classes < 1:
            raise ConfigError(f"num_classes must be >= 1, got {self.num_classes}")
        for i, (c, m) in enumerate(zip(self.channels, self.mixers), start=1):
            if m == "attention" and c % HEAD_DIM:
                raise ConfigError(
                    f"stage {i} dim {c} not divisible by head_dim {HEAD_DIM}"
                )
            if abs(c * self.expansion - round(c * self.expansion)) > 1e-9:
                raise ConfigError(
                    f"stage {i} dim {c} times expansion {self.expansion} is "
                    f"not an integer hidden width"
                )
        if self.cpe_stages is not None:
            for s in self.cpe_stages:
                if s not in (1, 2, 3, 4):
                    raise ConfigError(f"cpe_stages entries must be 1..4, got {s}")
        return self

    def resolved_cpe_stages(self) -> tuple[int, ...]:
        if self.cpe_stages is not None:
            return tuple(sorted(set(self.cpe_stages)))
        return tuple(
            i for i, m in enumerate(self.mixers, start=1) if m == "attention"
        )

    def to_json_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = list(self.channels)
        d["depths"] = list(self.depths)
        d["mixers"] = list(self.mixers)
        d["cpe_stages"] = None if self.cpe_stages is None else list(self.cpe_stages)
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "VariantConfig":
        d = dict(d)
        d["channels"] = tuple(d["channels"])
        d["depths"] = tuple(d["depths"])
        d["mixers"] = tuple(d["mixers"])
        if d.get("cpe_stages") is not None:
            d["cpe_stages"] = tuple(d["cpe_stages"])
        return cls(**d).validate()


def _preset(name, channels, depths, mixers, expansion, **kw) -> VariantConfig:
    return VariantConfig(
        name=name, channels=channels, depths=depths, mixers=mixers,
        expansion=expansion, **kw,
    ).validate()


_RM4 = ("repmixer",) * 4
_S12_CH = (64, 128, 256, 512)
_S12_DEPTHS = (2, 2, 6, 2)

PRESETS: dict[str, VariantConfig] = {
    "T8": _preset("T8", (48, 96, 192, 384), (2, 2, 4, 2), _RM4, 3.0),
    "T12": _preset("T12", _S12_CH, _S12_DEPTHS, _RM4, 3.0),
    "S12": _preset("S12", _S12_CH, _S12_DEPTHS, _RM4, 4.0),
    "SA12": _preset("SA12", _S12_CH, _S12_DEPTHS,
                    ("repmixer",) * 3 + ("attention",), 4.0),
    "SA24": _preset("SA24", _S12_CH, (4, 4, 12, 4),
                    ("repmixer",) * 3 + ("attention",), 4.0),
    "SA36": _preset("SA36", _S12_CH, (6, 6, 18, 6),
                    ("repmixer",) * 3 + ("attention",), 4.0),
    "MA36": _preset("MA36", (76, 152, 304, 608), (6, 6, 18, 6),
                    ("repmixer",) * 3 + ("attention",), 4.0),
    # per-stage mixer ablation variants; V1-V3 use the standard setting
    # (3x3 factorized downsamplers, plain 1x1 FFN), V4/V5 the 7x7 kernels
    "V1": _preset("V1", _S12_CH, _S12_DEPTHS, _RM4, 4.0,
                  ffn_kernel=1, embed_kernel=3),
    "V2": _preset("V2", _S12_CH, _S12_DEPTHS,
                  ("repmixer",) * 3 + ("attention",), 4.0,
                  ffn_kernel=1, embed_kernel=3),
    "V3": _preset("V3", _S12_CH, _S12_DEPTHS,
                  ("repmixer", "repmixer", "attention", "attention"), 4.0,
                  ffn_kernel=1, embed_kernel=3),
    "V4": _preset("V4", _S12_CH, _S12_DEPTHS, _RM4, 4.0),
    "V5": _preset("V5", _S12_CH, _S12_DEPTHS,
                  ("repmixer",) * 3 + ("attention",), 4.0),
    # pooling-mixer twin used for the latency/FLOP parity comparison:
    # same geometry, dense downsamplers, plain MLP, no overparameterization
    "poolformer-s12-baseline": _preset(
        "poolformer-s12-baseline", _S12_CH, _S12_DEPTHS, ("pooling",) * 4, 4.0,
        ffn_kernel=1, embed_kernel=3, overparam_n=1, factorized=False,
        cpe_stages=(),
    ),
}

PRESET_TABLE_ORDER = ("T8", "T12", "S12", "SA12", "SA24", "SA36", "MA36")


@dataclass
class StageBlock:
    mixer: object
    ffn: ConvFFNBlock

    def forward(self, x):
        return self.ffn.forward(self.mixer.forward(x))


@dataclass
class Stage:
    index: int
    embed: PatchEmbed | None
    cpe: CPEBlock | None
    blocks: list


@dataclass
class Model:
    config: VariantConfig
    mode: str
    stem: Stem
    stages: list
    head_weight: np.ndarray
    head_bias: np.ndarray

    # -- structure walks -------------------------------------------------

    def named_blocks(self):
        """Yield (name, block) in execution order."""
        for name, unit in self.stem.units:
            yield f"stem.{name}", unit
        for stage in self.stages:
            p = f"stage{stage.index}"
            if stage.embed is not None:
                for name, unit in stage.embed.units:
                    yield f"{p}.embed.{name}", unit
            if stage.cpe is not None:
                yield f"{p}.cpe", stage.cpe
            for j, blk in enumerate(stage.blocks):
                yield f"{p}.block{j}.mixer", blk.mixer
                yield f"{p}.block{j}.ffn", blk.ffn

    def named_tensors(self):
        """Yield (name, float32 array) for every stored tensor, in order."""
        for name, block in self.named_blocks():
            yield from block.state(name)
        yield "head.weight", self.head_weight
        yield "head.bias", self.head_bias

    def bn_tensor_names(self) -> list[str]:
        return [n for n, _ in self.named_tensors() if n.endswith(".gamma")]

    # -- forward ----------------------------------------------------------

    def forward(self, x) -> np.ndarray:
        x = self._check_input(x)
        for _, block in self.named_blocks():
            x = block.forward(x)
        return self.head_forward(x)

    def head_forward(self, features) -> np.ndarray:
        """Classifier head on final-stage features: pool then affine map."""
        return linear(global_avg_pool(features), self.head_weight, self.head_bias)

    def _check_input(self, x):
        x = as_nchw(x)
        n, c, h, w = x.shape
        if c != 3:
            raise ShapeError(f"model input must have 3 channels, got {x.shape}")
        if h < 32 or w < 32 or h % 32 or w % 32:
            raise ShapeError(
                f"input spatial dims {h}x{w} must be >= 32 and divisible by 32; "
                f"resize or zero-pad the image to a multiple of 32"
            )
        return x

    # -- reparameterization -------------------------------------------------

    def reparameterize(self) -> "Model":
        if self.mode == INFERENCE:
            return self
        stages = [
            Stage(
                index=s.index,
                embed=None if s.embed is None else s.embed.reparameterize(),
                cpe=None if s.cpe is None else s.cpe.reparameterize(),
                blocks=[
                    StageBlock(b.mixer.reparameterize(), b.ffn.reparameterize())
                    for b in s.blocks
                ],
            )
            for s in self.stages
        ]
        return Model(
            config=self.config, mode=INFERENCE,
            stem=self.stem.reparameterize(), stages=stages,
            head_weight=self.head_weight, head_bias=self.head_bias,
        )

    def load_tensors(self, tensors: dict) -> "Model":
        """Return a copy of this structure with tensors bound by name."""
        stem = self.stem.load("stem", tensors)
        stages = []
        for s in self.stages:
            p = f"stage{s.index}"
            stages.append(Stage(
                index=s.index,
                embed=None if s.embed is None else s.embed.load(f"{p}.embed", tensors),
                cpe=None if s.cpe is None else s.cpe.load(f"{p}.cpe", tensors),
                blocks=[
                    StageBlock(
                        b.mixer.load(f"{p}.block{j}.mixer", tensors),
                        b.ffn.load(f"{p}.block{j}.ffn", tensors),
                    )
                    for j, b in enumerate(s.blocks)
                ],
            ))
        return Model(
            config=self.config, mode=self.mode, stem=stem, stages=stages,
            head_weight=np.ascontiguousarray(tensors["head.weight"], np.float32),
            head_bias=np.ascontiguousarray(tensors["head.bias"], np.float32),
        )


def _mixer_for(config: VariantConfig, stage_idx: int, rng):
    kind = config.mixers[stage_idx - 1]
    dim = config.channels[stage_idx - 1]
    if kind == "repmixer":
        return RepMixerBlock.create(rng, dim, REPMIXER_KERNEL, config.layer_scale)
    if kind == "attention":
        return AttentionBlock.create(rng, dim)
    return PoolingMixerBlock(dim=dim, kernel=POOLING_KERNEL)


def build_structure(config: VariantConfig, mode: str = TRAIN,
                    seed: int = 0) -> Model:
    """Assemble a model; `mode` selects which structure to materialize."""
    config.validate()
    root = np.random.SeedSequence(seed)

    def fresh_rng():
        return np.random.default_rng(root.spawn(1)[0])

    stem = Stem.create(fresh_rng(), 3, config.channels[0], config.overparam_n,
                       config.activation, config.factorized)
    cpe_stages = config.resolved_cpe_stages()
    stages = []
    for idx in range(1, 5):
        dim = config.channels[idx - 1]
        embed = None
        if idx > 1:
            embed = PatchEmbed.create(
                fresh_rng(), config.channels[idx - 2], dim, config.embed_kernel,
                config.overparam_n, config.activation, config.factorized)
        cpe = CPEBlock.create(fresh_rng(), dim) if idx in cpe_stages else None
        blocks = []
        for _ in range(config.depths[idx - 1]):
            mixer = _mixer_for(config, idx, fresh_rng())
            ffn = ConvFFNBlock.create(fresh_rng(), dim, config.expansion,
                                      config.ffn_kernel, config.activation)
            blocks.append(StageBlock(mixer, ffn))
        stages.append(Stage(index=idx, embed=embed, cpe=cpe, blocks=blocks))
    head_w = trunc_normal(np.random.default_rng(root.spawn(1)[0]),
                          (config.num_classes, config.channels[3]))
    model = Model(config=config, mode=TRAIN, stem=stem, stages=stages,
                  head_weight=head_w,
                  head_bias=np.zeros(config.num_classes, np.float32))
    if mode == INFERENCE:
        return model.reparameterize()
    if mode != TRAIN:
        raise ConfigError(f"unknown mode {mode!r}")
    return model


def build_variant(name_or_config, seed: int = 0) -> Model:
    """Build a preset by name (see PRESETS) or a custom VariantConfig."""
    if isinstance(name_or_config, str):
        try:
            config = PRESETS[name_or_config]
        except KeyError:
            raise ConfigError(
                f"unknown preset {name_or_config!r}; choose from "
                f"{sorted(PRESETS)} or pass a VariantConfig"
            )
    elif isinstance(name_or_config, VariantConfig):
        config = name_or_config.validate()
    else:
        raise ConfigError(
            f"expected preset name or VariantConfig, got {type(name_or_config)}"
        )
    return build_structure(config, TRAIN, seed)


def model_forward(model: Model, x) -> np.ndarray:
    return model.forward(x)


def reparameterize_model(model: Model) -> Model:
    return model.reparameterize()
