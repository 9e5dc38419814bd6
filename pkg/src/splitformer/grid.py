"""Grid functions on the discretized token x embedding domain.

A grid function is stored as a float64 array whose last two axes are
``(n_x, n_y)``: row ``k`` holds the embedding vector of token ``k``.  Any
leading axes are treated as a batch.  Grid spacing is fixed at one in both
directions, so discrete integrals are plain sums.

All reductions here run left to right over the summed axis.  This keeps
results bit-identical between runs and lets a naive loop implementation
reproduce them exactly.
"""

from __future__ import annotations

import json
import math
from typing import Any

import numpy as np

__all__ = [
    "DimensionError",
    "as_grid",
    "as_kernel",
    "as_vector",
    "inner_product_y",
    "row_sum",
    "softmax2",
    "matmul",
    "tensor_to_dict",
    "tensor_from_dict",
    "dumps_tensor",
    "loads_tensor",
]


class DimensionError(ValueError):
    """Raised when array shapes do not agree."""


def _finite(arr: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains non-finite entries")
    return arr


def as_grid(values: Any) -> np.ndarray:
    """Validate and return ``values`` as a float64 grid function.

    The array must have at least two axes, non-empty trailing axes and only
    finite entries.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim < 2:
        raise DimensionError(f"grid function needs >= 2 axes, got shape {arr.shape}")
    if arr.shape[-1] < 1 or arr.shape[-2] < 1:
        raise DimensionError(f"grid function has an empty axis: {arr.shape}")
    return _finite(arr, "grid function")


def as_kernel(values: Any, shape: tuple[int, int] | None = None) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"kernel must be a non-empty matrix, got shape {arr.shape}")
    if shape is not None and arr.shape != tuple(shape):
        raise DimensionError(f"kernel shape {arr.shape} != expected {tuple(shape)}")
    return _finite(arr, "kernel")


def as_vector(values: Any, length: int | None = None) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"expected a vector, got shape {arr.shape}")
    if length is not None and arr.shape[0] != length:
        raise DimensionError(f"vector length {arr.shape[0]} != expected {length}")
    return _finite(arr, "vector")


def row_sum(a: np.ndarray) -> np.ndarray:
    """Sum over the last axis, strictly left to right."""
    a = np.asarray(a, dtype=np.float64)
    if a.shape[-1] == 0:
        return np.zeros(a.shape[:-1])
    acc = a[..., 0].copy()
    for l in range(1, a.shape[-1]):
        acc = acc + a[..., l]
    return acc


def inner_product_y(a: Any, b: Any) -> float:
    """Discrete inner product of two embedding rows (unit grid spacing)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or a.shape != b.shape:
        raise DimensionError(f"inner product needs equal-length rows, got {a.shape} and {b.shape}")
    return float(row_sum(a * b)) if a.size else 0.0


def softmax2(scores: Any) -> np.ndarray:
    """Row-wise softmax along the last axis.

    The row maximum is subtracted before exponentiation, which leaves the
    result unchanged mathematically but avoids overflow.
    """
    s = np.asarray(scores, dtype=np.float64)
    _finite(s, "scores")
    shifted = s - np.max(s, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / row_sum(e)[..., None]


def matmul(a: Any, b: Any) -> np.ndarray:
    """Matrix product over the last two axes with a fixed summation order.

    Entry ``(i, j)`` is accumulated as ``a[i,0]*b[0,j] + a[i,1]*b[1,j] + ...``
    in that order, without fused multiply-add.  Leading axes broadcast.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs >= 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"inner dimensions differ: {a.shape} @ {b.shape}")
    inner = a.shape[-1]
    if inner == 0:
        out_shape = np.broadcast_shapes(a.shape[:-2], b.shape[:-2]) + (a.shape[-2], b.shape[-1])
        return np.zeros(out_shape)
    out = a[..., :, 0:1] * b[..., 0:1, :]
    for k in range(1, inner):
        out = out + a[..., :, k : k + 1] * b[..., k : k + 1, :]
    return out


# -- JSON tensor format -------------------------------------------------------


def tensor_to_dict(arr: Any) -> dict:
    arr = np.asarray(arr, dtype=np.float64)
    return {"shape": list(arr.shape), "data": [float(x) for x in arr.ravel(order="C")]}


def tensor_from_dict(obj: dict) -> np.ndarray:
    """Parse ``{"shape": [...], "data": [...]}`` into an array."""
    try:
        shape = [int(n) for n in obj["shape"]]
        data = obj["data"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed tensor object: {exc}") from None
    if any(n < 0 for n in shape):
        raise ValueError(f"negative extent in tensor shape {shape}")
    expected = math.prod(shape)
    if len(data) != expected:
        raise ValueError(f"tensor data has {len(data)} entries but shape {shape} needs {expected}")
    arr = np.array(data, dtype=np.float64).reshape(shape)
    return _finite(arr, "tensor")


def dumps_tensor(arr: Any) -> str:
    return json.dumps(tensor_to_dict(arr))


def loads_tensor(text: str) -> np.ndarray:
    return tensor_from_dict(json.loads(text))
