"""Feedforward substeps: a linear step with built-in residual, then ReLU.

Each layer first computes ``ubar = u + u W_j + b_j`` (explicit part) and
then projects onto the nonnegative set (implicit part).  The bias carries
one value per token row and is broadcast along the embedding axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import DimensionError, as_grid, as_kernel, as_vector, matmul
from .projection import project_s2

__all__ = ["FfnLayerParams", "ffn_linear", "ffn_substep", "ffn_stack"]


@dataclass
class FfnLayerParams:
    """Square weight ``w`` (``n_y x n_y``) and per-token bias ``b`` (``n_x``)."""

    w: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.w = as_kernel(self.w)
        if self.w.shape[0] != self.w.shape[1]:
            raise DimensionError(f"FFN weight must be square, got {self.w.shape}")
        self.b = as_vector(self.b)


def ffn_linear(u, p: FfnLayerParams) -> np.ndarray:
    """Pre-activation ``u + u W + b`` with ``b[k]`` added to all of row ``k``."""
    u = as_grid(u)
    n_x, n_y = u.shape[-2:]
    if p.w.shape[0] != n_y:
        raise DimensionError(f"u has n_y={n_y} but FFN weight is {p.w.shape}")
    if p.b.shape[0] != n_x:
        raise DimensionError(f"u has n_x={n_x} but FFN bias has length {p.b.shape[0]}")
    return u + matmul(u, p.w) + p.b[:, None]


def ffn_substep(u, p: FfnLayerParams) -> np.ndarray:
    return project_s2(ffn_linear(u, p))


def ffn_stack(u, layers) -> np.ndarray:
    """Apply ``ffn_substep`` for each layer in order."""
    layers = list(layers)
    if not layers:
        raise ValueError("ffn_stack needs at least one layer")
    for p in layers:
        u = ffn_substep(u, p)
    return u
