"""Parameter and multiply-accumulate accounting.

Counting is structure-driven: it walks the blocks actually present in the
model's current mode, so train-vs-inference differences and preset audits
are genuine measurements of the built structure rather than per-preset
formulas.

MAC conventions (1 reported FLOP = 1 multiply-accumulate):
  conv:       out_elems * (kh * kw * in_ch / groups)
  linear:     rows * in_features * out_features
  attention:  the two token matmuls, 2 * heads * L^2 * head_dim, plus the
              qkv/proj projections counted as linear maps
Elementwise ops, normalization, pooling windows and softmax are excluded.
"""

from __future__ import annotations

from dataclasses import dataclass

from .blocks import (
    INFERENCE,
    TRAIN,
    AttentionBlock,
    ConvFFNBlock,
    CPEBlock,
    MobileOneUnit,
    PoolingMixerBlock,
    RepMixerBlock,
)
from .errors import ConfigError
from .model import Model
from .params import ConvParams
from .tensor_ops import conv_output_hw


@dataclass
class LayerCost:
    name: str
    kind: str
    params: int
    macs: int


@dataclass
class CostReport:
    rows: list
    mode: str
    input_hw: tuple[int, int]
    batch: int

    @property
    def total_params(self) -> int:
        return sum(r.params for r in self.rows)

    @property
    def total_macs(self) -> int:
        return sum(r.macs for r in self.rows)

    def to_json_dict(self) -> dict:
        return {
            "mode": self.mode,
            "input_hw": list(self.input_hw),
            "batch": self.batch,
            "total_params": self.total_params,
            "total_macs": self.total_macs,
            "rows": [
                {"name": r.name, "kind": r.kind, "params": r.params, "macs": r.macs}
                for r in self.rows
            ],
        }

    def to_text(self) -> str:
        name_w = max(len("layer"), max((len(r.name) for r in self.rows), default=0))
        lines = [
            f"{'layer':<{name_w}}  {'kind':<12} {'params':>12} {'macs':>14}",
            "-" * (name_w + 44),
        ]
        for r in self.rows:
            lines.append(
                f"{r.name:<{name_w}}  {r.kind:<12} {r.params:>12} {r.macs:>14}"
            )
        lines.append("-" * (name_w + 44))
        lines.append(
            f"{'total':<{name_w}}  {'':<12} {self.total_params:>12} "
            f"{self.total_macs:>14}"
        )
        return "\n".join(lines)


def _conv_cost(name: str, conv: ConvParams, hw, batch) -> tuple[LayerCost, tuple]:
    out_hw = conv_output_hw(hw, conv.kernel, conv.stride, conv.padding)
    macs = (
        batch * conv.out_ch * out_hw[0] * out_hw[1]
        * (conv.in_ch // conv.groups) * conv.kernel[0] * conv.kernel[1]
    )
    return LayerCost(name, "conv", conv.n_params, macs), out_hw


def _bn_cost(name: str, bn) -> LayerCost:
    return LayerCost(name, "bn", bn.n_params, 0)


def _mobileone_rows(name, unit: MobileOneUnit, hw, batch):
    rows = []
    if unit.mode == INFERENCE:
        row, out_hw = _conv_cost(f"{name}.conv", unit.conv, hw, batch)
        rows.append(row)
        return rows, out_hw
    out_hw = hw
    for i, br in enumerate(unit.branches):
        row, out_hw = _conv_cost(f"{name}.branch{i}.conv", br.conv, hw, batch)
        rows.append(row)
        rows.append(_bn_cost(f"{name}.branch{i}.bn", br.bn))
    if unit.scale_branch is not None:
        row, _ = _conv_cost(f"{name}.scale.conv", unit.scale_branch.conv, hw, batch)
        rows.append(row)
        rows.append(_bn_cost(f"{name}.scale.bn", unit.scale_branch.bn))
    if unit.identity is not None:
        rows.append(_bn_cost(f"{name}.identity", unit.identity))
    return rows, out_hw


def _repmixer_rows(name, blk: RepMixerBlock, hw, batch):
    rows = []
    if blk.mode == INFERENCE:
        row, _ = _conv_cost(f"{name}.conv", blk.conv, hw, batch)
        rows.append(row)
        return rows, hw
    rows.append(_bn_cost(f"{name}.bn", blk.bn))
    row, _ = _conv_cost(f"{name}.dw", blk.dw, hw, batch)
    rows.append(row)
    if blk.layer_scale is not None:
        rows.append(LayerCost(f"{name}.layer_scale", "scale",
                              blk.layer_scale.size, 0))
    return rows, hw


def _ffn_rows(name, blk: ConvFFNBlock, hw, batch):
    rows = []
    if blk.dw is not None:
        row, _ = _conv_cost(f"{name}.dw", blk.dw, hw, batch)
        rows.append(row)
    if blk.bn is not None:
        rows.append(_bn_cost(f"{name}.bn", blk.bn))
    row, _ = _conv_cost(f"{name}.pw1", blk.pw1, hw, batch)
    rows.append(row)
    row, _ = _conv_cost(f"{name}.pw2", blk.pw2, hw, batch)
    rows.append(row)
    return rows, hw


def _cpe_rows(name, blk: CPEBlock, hw, batch):
    conv = blk.conv if blk.mode == INFERENCE else blk.dw
    tag = "conv" if blk.mode == INFERENCE else "dw"
    row, _ = _conv_cost(f"{name}.{tag}", conv, hw, batch)
    return [row], hw


def _attention_rows(name, blk: AttentionBlock, hw, batch):
    rows = []
    if blk.bn is not None:
        rows.append(_bn_cost(f"{name}.bn", blk.bn))
    length = hw[0] * hw[1]
    dim = blk.dim
    rows.append(LayerCost(f"{name}.qkv", "linear", blk.qkv.n_params,
                          batch * length * dim * 3 * dim))
    head_dim = dim // blk.heads
    rows.append(LayerCost(f"{name}.attn", "attention", 0,
                          2 * batch * blk.heads * length * length * head_dim))
    rows.append(LayerCost(f"{name}.proj", "linear", blk.proj.n_params,
                          batch * length * dim * dim))
    return rows, hw


def _pooling_rows(name, blk: PoolingMixerBlock, hw, batch):
    return [LayerCost(f"{name}.pool", "pooling", 0, 0)], hw


_HANDLERS = {
    MobileOneUnit: _mobileone_rows,
    RepMixerBlock: _repmixer_rows,
    ConvFFNBlock: _ffn_rows,
    CPEBlock: _cpe_rows,
    AttentionBlock: _attention_rows,
    PoolingMixerBlock: _pooling_rows,
}


def cost_report(model: Model, input_hw=(256, 256), batch: int = 1) -> CostReport:
    h, w = int(input_hw[0]), int(input_hw[1])
    if h < 32 or w < 32 or h % 32 or w % 32:
        raise ConfigError(
            f"input dims {h}x{w} must be >= 32 and divisible by 32"
        )
    rows = []
    hw = (h, w)
    for name, block in model.named_blocks():
        handler = _HANDLERS[type(block)]
        block_rows, hw = handler(name, block, hw, batch)
        rows.extend(block_rows)
    n_cls, dim = model.head_weight.shape
    rows.append(LayerCost("head", "linear",
                          model.head_weight.size + model.head_bias.size,
                          batch * dim * n_cls))
    return CostReport(rows=rows, mode=model.mode, input_hw=(h, w), batch=batch)


def count_params(model: Model, mode: str | None = None) -> int:
    """Exact parameter count (weights, biases, bn statistics) in `mode`."""
    if mode is not None and mode != model.mode:
        if mode == INFERENCE and model.mode == TRAIN:
            model = model.reparameterize()
        else:
            raise ConfigError(
                f"cannot count {mode!r} parameters of a {model.mode} model"
            )
    return cost_report(model).total_params


def count_macs(model: Model, input_hw=(256, 256), batch: int = 1) -> int:
    return cost_report(model, input_hw, batch).total_macs
