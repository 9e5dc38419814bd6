"""Transformer blocks as Lie-splitting steps of a continuous integro-differential model."""

from .adapters import ConvTokenEmbedParams, VitParams, conv_token_embed_substep, vit_forward, vit_post, vit_pre
from .attention import (
    ConvHeadWeights,
    MultiHeadWeights,
    SingleHeadWeights,
    attention_substep,
    conv_attention_substep,
    conv_qkv,
    multihead_substep,
    qkv,
    scores,
)
from .feedforward import FfnLayerParams, ffn_stack, ffn_substep
from .grid import DimensionError, inner_product_y, matmul, softmax2
from .projection import NormTarget, oracle_s1, project_s1, project_s2
from .splitting import (
    BlockParams,
    ModelParams,
    SplitTrace,
    block_step,
    lie_solve,
    parallel_solve,
    propagate,
)

__version__ = "0.1.0"
