"""A deliberately naive standard Transformer encoder block.

Everything here is written with explicit Python loops over plain floats and
shares no code with the splitting path.  It exists to be compared against
``block_step``: under the parameter mapping ``W_std = I + W_j`` both should
produce the same output.

The FFN follows the block's conventions rather than the textbook one: a
ReLU after every layer and a bias with one entry per token row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "StdBlockParams",
    "std_attention",
    "std_layer_norm",
    "std_ffn",
    "std_encoder_block",
    "to_std_params",
    "std_conv",
    "std_conv_attention",
]


def _rows(a) -> list[list[float]]:
    return [[float(x) for x in row] for row in np.asarray(a, dtype=np.float64)]


def _sum(xs) -> float:
    s = 0.0
    for x in xs:
        s += x
    return s


def _dot(a, b) -> float:
    s = 0.0
    for x, y in zip(a, b):
        s += x * y
    return s


def _mm(a: list[list[float]], b: list[list[float]]) -> list[list[float]]:
    n, inner, m = len(a), len(b), len(b[0])
    if len(a[0]) != inner:
        raise ValueError("matrix dimensions do not agree")
    out = []
    for i in range(n):
        row = []
        for j in range(m):
            s = 0.0
            for k in range(inner):
                s += a[i][k] * b[k][j]
            row.append(s)
        out.append(row)
    return out


@dataclass
class StdBlockParams:
    """Weights of one encoder block in textbook form.

    ``ln1``/``ln2`` are ``(mean, std)`` pairs; ``ffn_weights`` is a list of
    ``(W_std, b_std)`` with ``b_std`` one scalar per token.
    """

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    ln1: tuple[float, float]
    ln2: tuple[float, float]
    ffn_weights: list[tuple[np.ndarray, np.ndarray]]
    epsilon: float = 1e-12


def std_attention(u, w_q, w_k, w_v, scale_dim: int) -> np.ndarray:
    """softmax(Q K^T / sqrt(scale_dim)) V, computed entry by entry."""
    U = _rows(u)
    Q, K, V = _mm(U, _rows(w_q)), _mm(U, _rows(w_k)), _mm(U, _rows(w_v))
    n_x = len(U)
    root = math.sqrt(scale_dim)
    out = []
    for i in range(n_x):
        logits = [_dot(Q[i], K[j]) / root for j in range(n_x)]
        top = max(logits)
        ex = [math.exp(a - top) for a in logits]
        z = _sum(ex)
        p = [e / z for e in ex]
        row = []
        for c in range(len(V[0])):
            s = 0.0
            for j in range(n_x):
                s += p[j] * V[j][c]
            row.append(s)
        out.append(row)
    return np.array(out)


def std_layer_norm(u, mean: float, std: float, epsilon: float = 1e-12) -> np.ndarray:
    out = []
    for row in _rows(u):
        n = len(row)
        mu = _sum(row) / n
        var = _sum((x - mu) * (x - mu) for x in row) / n
        if var < epsilon:
            out.append([mean] * n)
        else:
            r = math.sqrt(var)
            out.append([std * (x - mu) / r + mean for x in row])
    return np.array(out)


def std_ffn(u, ffn_weights) -> np.ndarray:
    """Stacked ``ReLU(u W + b)`` layers, bias per token row."""
    h = _rows(u)
    for W, b in ffn_weights:
        lin = _mm(h, _rows(W))
        b = [float(x) for x in np.asarray(b, dtype=np.float64)]
        h = []
        for k, row in enumerate(lin):
            pre = [x + b[k] for x in row]
            h.append([x if x > 0.0 else 0.0 for x in pre])
    return np.array(h)


def std_encoder_block(u, p: StdBlockParams, skip_mode: str = "average", scale_dim: int | None = None) -> np.ndarray:
    """Post-norm encoder block: attention + residual, LN, FFN, skip, LN."""
    u = np.asarray(u, dtype=np.float64)
    n_y = u.shape[1]
    att = std_attention(u, p.w_q, p.w_k, p.w_v, scale_dim or n_y)
    u1 = std_layer_norm([[a + b for a, b in zip(r, s)] for r, s in zip(_rows(u), _rows(att))], *p.ln1, p.epsilon)
    u2 = std_ffn(u1, p.ffn_weights)
    if skip_mode == "average":
        mixed = [[0.5 * (a + b) for a, b in zip(r, s)] for r, s in zip(_rows(u2), _rows(u1))]
    elif skip_mode == "add":
        mixed = [[a + b for a, b in zip(r, s)] for r, s in zip(_rows(u2), _rows(u1))]
    else:
        raise ValueError(f"unknown skip_mode {skip_mode!r}")
    return std_layer_norm(mixed, *p.ln2, p.epsilon)


def to_std_params(block) -> StdBlockParams:
    """Map a single-head ``BlockParams`` to textbook form (``W_std = I + W_j``).

    Only attribute reads happen here; none of the splitting code runs.
    """
    n_y = block.attn.w_q.shape[0]
    eye = np.eye(n_y)
    if block.norm1.epsilon != block.norm2.epsilon:
        raise ValueError("reference block uses a single epsilon for both norms")
    return StdBlockParams(
        w_q=np.array(block.attn.w_q),
        w_k=np.array(block.attn.w_k),
        w_v=np.array(block.attn.w_v),
        ln1=(block.norm1.sigma1, block.norm1.sigma2),
        ln2=(block.norm2.sigma1, block.norm2.sigma2),
        ffn_weights=[(eye + layer.w, np.array(layer.b)) for layer in block.ffn],
        epsilon=block.norm1.epsilon,
    )


def std_conv(img, kernel) -> list[list[float]]:
    """Zero-padded 'same' 2-D convolution of one patch, by direct summation."""
    H, W = len(img), len(img[0])
    kh, kw = len(kernel), len(kernel[0])
    ch, cw = kh // 2, kw // 2
    out = []
    for i in range(H):
        row = []
        for j in range(W):
            s = 0.0
            for a in range(kh):
                for b in range(kw):
                    # kernel offset (a - ch, b - cw) reads u at (i - offset)
                    y, x = i - (a - ch), j - (b - cw)
                    if 0 <= y < H and 0 <= x < W:
                        s += kernel[a][b] * img[y][x]
            row.append(s)
        out.append(row)
    return out


def std_conv_attention(u, w_q, w_k, w_v, patch_shape, scale_dim: int | None = None) -> np.ndarray:
    """Convolutional attention increment (no residual), loop by loop."""
    ph, pw = patch_shape
    U = _rows(u)

    def transform(kernel):
        k = _rows(kernel)
        out = []
        for row in U:
            img = [row[r * pw : (r + 1) * pw] for r in range(ph)]
            out.append([x for r in std_conv(img, k) for x in r])
        return out

    Q, K, V = transform(w_q), transform(w_k), transform(w_v)
    n_x, n_y = len(U), ph * pw
    root = math.sqrt(scale_dim or n_y)
    out = []
    for i in range(n_x):
        logits = [_dot(Q[i], K[j]) / root for j in range(n_x)]
        top = max(logits)
        ex = [math.exp(a - top) for a in logits]
        z = _sum(ex)
        out.append([_sum(ex[j] / z * V[j][c] for j in range(n_x)) for c in range(n_y)])
    return np.array(out)
