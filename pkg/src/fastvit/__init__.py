"""FastViT: hybrid vision transformer with a structural-reparameterization
engine.

Train-time models are multi-branch (overparameterized convolutions, batch
norms, skip connections); `reparameterize` fuses each block into a single
equivalent convolution for inference.  The package also ships parameter/MAC
accounting, a latency harness, a binary weight archive format, and a CLI
(`fastvit`).
"""

from .analysis import CostReport, LayerCost, cost_report, count_macs, count_params
from .archive import load_tensor, load_weights, save_tensor, save_weights
from .bench import BenchResult, measure, resolution_sweep, write_csv
from .blocks import (
    INFERENCE,
    TRAIN,
    block_forward,
    block_init,
    block_reparameterize,
)
from .errors import ArchiveError, ConfigError, FastViTError, ShapeError
from .model import (
    PRESETS,
    Model,
    VariantConfig,
    build_structure,
    build_variant,
    model_forward,
    reparameterize_model,
)
from .params import BatchNormParams, ConvParams, identity_bn, zeros_conv
from .reparam import (
    FusedConv,
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
from .tensor_ops import (
    activation,
    batchnorm_eval,
    conv2d,
    global_avg_pool,
    linear,
    mhsa,
    pooling_mixer,
)

__version__ = "0.1.0"
