"""Attention as a nonlocal integral operator over the token axis.

Q, K and V are integral transforms of each token row (a matrix product in
the discrete setting, or a 2-D convolution over the patch grid for the
convolutional variant).  Scores are the row-wise softmax of scaled Q.K^T,
and the attention substep is an explicit Euler update with unit step, so
the residual ``u0 + ...`` is part of the substep itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import convolve2d

from .grid import DimensionError, as_grid, as_kernel, matmul, softmax2

__all__ = [
    "SingleHeadWeights",
    "MultiHeadWeights",
    "ConvHeadWeights",
    "qkv",
    "scores",
    "attention_term",
    "attention_substep",
    "multihead_substep",
    "conv2d_tokens",
    "conv_qkv",
    "conv_attention_substep",
]


@dataclass
class SingleHeadWeights:
    """Query/key/value kernels of one head, each ``n_y x n_y``."""

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray

    def __post_init__(self):
        self.w_q = as_kernel(self.w_q)
        n = self.w_q.shape[0]
        if self.w_q.shape != (n, n):
            raise DimensionError(f"w_q must be square, got {self.w_q.shape}")
        self.w_k = as_kernel(self.w_k, (n, n))
        self.w_v = as_kernel(self.w_v, (n, n))

    @property
    def n_y(self) -> int:
        return self.w_q.shape[0]


@dataclass
class MultiHeadWeights:
    heads: list[SingleHeadWeights] = field(default_factory=list)

    def __post_init__(self):
        self.heads = list(self.heads)
        if not self.heads:
            raise ValueError("multi-head attention needs at least one head")
        dims = {h.n_y for h in self.heads}
        if len(dims) != 1:
            raise DimensionError(f"heads disagree on n_y: {sorted(dims)}")

    @property
    def n_y(self) -> int:
        return self.heads[0].n_y


def _check_odd_kernel(k: np.ndarray, what: str) -> np.ndarray:
    k = as_kernel(k)
    if k.shape[0] % 2 == 0 or k.shape[1] % 2 == 0:
        raise DimensionError(f"{what} must have odd height and width, got {k.shape}")
    return k


@dataclass
class ConvHeadWeights:
    """Convolution kernels for Q, K, V acting on each token's patch.

    Every token row of length ``n_y`` is read as a ``patch_shape`` image
    (row-major), so ``patch_shape[0] * patch_shape[1]`` must equal ``n_y``.
    """

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    patch_shape: tuple[int, int]

    def __post_init__(self):
        self.w_q = _check_odd_kernel(self.w_q, "w_q")
        self.w_k = _check_odd_kernel(self.w_k, "w_k")
        self.w_v = _check_odd_kernel(self.w_v, "w_v")
        self.patch_shape = (int(self.patch_shape[0]), int(self.patch_shape[1]))
        if min(self.patch_shape) < 1:
            raise DimensionError(f"invalid patch shape {self.patch_shape}")

    @property
    def n_y(self) -> int:
        return self.patch_shape[0] * self.patch_shape[1]


def qkv(u, w: SingleHeadWeights):
    """Return ``(u W^Q, u W^K, u W^V)``."""
    u = as_grid(u)
    if u.shape[-1] != w.n_y:
        raise DimensionError(f"u has n_y={u.shape[-1]} but weights expect {w.n_y}")
    return matmul(u, w.w_q), matmul(u, w.w_k), matmul(u, w.w_v)


def scores(Q, K, scale_dim: int) -> np.ndarray:
    """Attention scores ``softmax2(Q K^T / sqrt(scale_dim))``.

    Each row of the result is a probability vector over tokens.
    """
    Q = np.asarray(Q, dtype=np.float64)
    K = np.asarray(K, dtype=np.float64)
    if Q.shape != K.shape:
        raise DimensionError(f"Q and K shapes differ: {Q.shape} vs {K.shape}")
    if scale_dim < 1:
        raise ValueError(f"scale_dim must be a positive integer, got {scale_dim}")
    return softmax2(matmul(Q, np.swapaxes(K, -1, -2)) / math.sqrt(scale_dim))


def attention_term(u, w: SingleHeadWeights, scale_dim: int | None = None) -> np.ndarray:
    """The attention increment ``gamma V`` of one head (no residual)."""
    Q, K, V = qkv(u, w)
    return matmul(scores(Q, K, scale_dim or w.n_y), V)


def attention_substep(u0, w: SingleHeadWeights, scale_dim: int | None = None) -> np.ndarray:
    """One explicit step of the attention operator: ``u0 + gamma(u0) V(u0)``.

    ``scale_dim`` defaults to ``n_y``; pass ``1`` for the unscaled score.
    """
    u0 = as_grid(u0)
    return u0 + attention_term(u0, w, scale_dim)


def multihead_substep(u0, w: MultiHeadWeights, scale_dim: int | None = None) -> np.ndarray:
    """``u0`` plus the sum of per-head attention terms.

    The residual is added once, outside the head sum.  Heads are summed in
    list order.
    """
    if not isinstance(w, MultiHeadWeights):
        raise TypeError("multihead_substep expects MultiHeadWeights")
    u0 = as_grid(u0)
    total = attention_term(u0, w.heads[0], scale_dim)
    for head in w.heads[1:]:
        total = total + attention_term(u0, head, scale_dim)
    return u0 + total


def conv2d_tokens(u, kernel: np.ndarray, patch_shape: tuple[int, int]) -> np.ndarray:
    """Convolve every token row, viewed as a ``patch_shape`` image.

    Zero padding, stride one, output the same size as the patch.  This is a
    true convolution (the kernel is flipped), centred on the middle entry
    of the odd-sized kernel.
    """
    u = as_grid(u)
    ph, pw = patch_shape
    if ph * pw != u.shape[-1]:
        raise DimensionError(f"n_y={u.shape[-1]} does not factor as patch grid {ph}x{pw}")
    kernel = _check_odd_kernel(kernel, "kernel")
    imgs = u.reshape(u.shape[:-1] + (ph, pw))
    out = np.empty_like(imgs)
    for idx in np.ndindex(imgs.shape[:-2]):
        out[idx] = convolve2d(imgs[idx], kernel, mode="same", boundary="fill", fillvalue=0.0)
    return out.reshape(u.shape)


def conv_qkv(u, w: ConvHeadWeights):
    return (
        conv2d_tokens(u, w.w_q, w.patch_shape),
        conv2d_tokens(u, w.w_k, w.patch_shape),
        conv2d_tokens(u, w.w_v, w.patch_shape),
    )


def conv_attention_substep(u0, w: ConvHeadWeights, scale_dim: int | None = None) -> np.ndarray:
    """Attention substep with convolutional Q/K/V transforms."""
    u0 = as_grid(u0)
    Q, K, V = conv_qkv(u0, w)
    return u0 + matmul(scores(Q, K, scale_dim or w.n_y), V)
