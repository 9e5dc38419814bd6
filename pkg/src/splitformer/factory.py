"""Seeded random parameter construction for tests, demos and the CLI."""

from __future__ import annotations

import numpy as np

from .adapters import ConvTokenEmbedParams, VitParams
from .attention import ConvHeadWeights, MultiHeadWeights, SingleHeadWeights
from .feedforward import FfnLayerParams
from .projection import NormTarget
from .splitting import BlockParams, ModelParams

__all__ = ["random_block", "random_model", "random_vit", "zero_block"]


def _mat(rng, n, m, scale):
    return scale * rng.standard_normal((n, m)) / np.sqrt(max(n, 1))


def random_block(
    rng: np.random.Generator,
    n_x: int,
    n_y: int,
    J: int = 2,
    mode: str = "vanilla",
    n_heads: int = 2,
    patch_shape: tuple[int, int] | None = None,
    kernel_size: int = 3,
    scale: float = 1.0,
    conv_embed: bool | None = None,
    constant_bias: bool = False,
) -> BlockParams:
    """Draw one block with Gaussian weights of variance ``scale**2 / n_y``.

    ``constant_bias`` makes every FFN bias a constant vector, which keeps the
    block equivariant under token permutations.
    """
    if mode == "vanilla":
        attn = SingleHeadWeights(*(_mat(rng, n_y, n_y, scale) for _ in range(3)))
    elif mode == "multihead":
        attn = MultiHeadWeights(
            [SingleHeadWeights(*(_mat(rng, n_y, n_y, scale) for _ in range(3))) for _ in range(n_heads)]
        )
    elif mode == "cvt":
        if patch_shape is None:
            raise ValueError("cvt mode needs a patch_shape")
        ks = kernel_size
        attn = ConvHeadWeights(*(scale * rng.standard_normal((ks, ks)) / ks for _ in range(3)), patch_shape=patch_shape)
    else:
        raise ValueError(f"unknown mode {mode!r}")

    def bias():
        if constant_bias:
            return np.full(n_x, 0.1 * rng.standard_normal())
        return 0.1 * rng.standard_normal(n_x)

    ffn = [FfnLayerParams(_mat(rng, n_y, n_y, scale), bias()) for _ in range(J)]
    embed = None
    if conv_embed if conv_embed is not None else mode == "cvt":
        ks = kernel_size
        embed = ConvTokenEmbedParams(scale * rng.standard_normal((ks, ks)) / ks, 0.1 * rng.standard_normal(n_x), patch_shape)
    norm1 = NormTarget(0.0, 1.0)
    norm2 = NormTarget(0.0, 1.0)
    return BlockParams(attn, norm1, norm2, ffn, embed)


def zero_block(n_x: int, n_y: int, J: int = 2) -> BlockParams:
    """Single-head block with every weight and bias zero and norms (0, 1)."""
    z = np.zeros((n_y, n_y))
    return BlockParams(
        SingleHeadWeights(z, z, z),
        NormTarget(),
        NormTarget(),
        [FfnLayerParams(z, np.zeros(n_x)) for _ in range(J)],
    )


def random_model(
    seed: int,
    n_x: int,
    n_y: int,
    J: int = 2,
    n_t: int = 1,
    mode: str = "vanilla",
    skip_mode: str = "average",
    **kw,
) -> ModelParams:
    rng = np.random.default_rng(seed)
    blocks = [random_block(rng, n_x, n_y, J, mode, **kw) for _ in range(n_t)]
    return ModelParams(blocks, mode=mode, skip_mode=skip_mode)


def random_vit(seed: int, patch_dim: int, n_y: int, out_dim: int, scale: float = 1.0) -> VitParams:
    rng = np.random.default_rng(seed)
    return VitParams(
        embed=_mat(rng, patch_dim, n_y, scale),
        class_token=scale * rng.standard_normal(n_y),
        head=_mat(rng, n_y, out_dim, scale),
    )
