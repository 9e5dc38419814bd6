"""Pre/post-processing around the propagator: ViT and CvT adapters.

``vit_pre`` builds the initial state from image patches (class token on
top of the embedded patches), ``vit_post`` reads the class-token row out
through a linear head.  ``conv_token_embed_substep`` is the extra explicit
substep that a convolutional token embedding adds in front of attention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import _check_odd_kernel, conv2d_tokens
from .grid import DimensionError, as_grid, as_kernel, as_vector, matmul

__all__ = [
    "VitParams",
    "ConvTokenEmbedParams",
    "vit_pre",
    "vit_post",
    "vit_forward",
    "conv_token_embed_substep",
    "extract_patches",
    "read_pgm",
]


@dataclass
class VitParams:
    """Patch embedding ``embed`` (D x n_y), ``class_token`` (n_y) and ``head`` (n_y x d)."""

    embed: np.ndarray
    class_token: np.ndarray
    head: np.ndarray

    def __post_init__(self):
        self.embed = as_kernel(self.embed)
        self.class_token = as_vector(self.class_token, self.embed.shape[1])
        self.head = as_kernel(self.head)
        if self.head.shape[0] != self.embed.shape[1]:
            raise DimensionError(
                f"head has {self.head.shape[0]} rows but embedding width is {self.embed.shape[1]}"
            )

    @property
    def patch_dim(self) -> int:
        return self.embed.shape[0]

    @property
    def n_y(self) -> int:
        return self.embed.shape[1]

    @property
    def out_dim(self) -> int:
        return self.head.shape[1]


@dataclass
class ConvTokenEmbedParams:
    """Odd-sized 2-D kernel and per-token bias of length ``n_x``."""

    kernel: np.ndarray
    bias: np.ndarray
    patch_shape: tuple[int, int]

    def __post_init__(self):
        self.kernel = _check_odd_kernel(self.kernel, "embedding kernel")
        self.bias = as_vector(self.bias)
        self.patch_shape = (int(self.patch_shape[0]), int(self.patch_shape[1]))


def vit_pre(patches, p: VitParams) -> np.ndarray:
    """Stack the class token on top of ``patches @ embed``.

    ``patches`` has shape ``(..., n_x - 1, D)``; the result has ``n_x`` rows.
    """
    R = np.asarray(patches, dtype=np.float64)
    if R.ndim < 2 or R.shape[-1] != p.patch_dim:
        raise DimensionError(f"patches shape {R.shape} does not match patch dim {p.patch_dim}")
    body = matmul(R, p.embed)
    top = np.broadcast_to(p.class_token, body.shape[:-2] + (1, p.n_y))
    return np.concatenate([top, body], axis=-2)


def vit_post(u, p: VitParams) -> np.ndarray:
    """First token row times the head matrix; shape ``(..., d)``."""
    u = as_grid(u)
    if u.shape[-1] != p.n_y:
        raise DimensionError(f"u has n_y={u.shape[-1]} but head expects {p.n_y}")
    return matmul(u[..., 0:1, :], p.head)[..., 0, :]


def vit_forward(patches, vit: VitParams, m) -> np.ndarray:
    """Head output of the full pipeline ``post(propagate(pre(patches)))``."""
    from .splitting import propagate

    return vit_post(propagate(vit_pre(patches, vit), m), vit)


def conv_token_embed_substep(u0, p: ConvTokenEmbedParams) -> np.ndarray:
    """``u0 + W^C * u0 + b^C`` with the bias broadcast along each token row."""
    u0 = as_grid(u0)
    if p.bias.shape[0] != u0.shape[-2]:
        raise DimensionError(f"bias length {p.bias.shape[0]} != n_x={u0.shape[-2]}")
    return u0 + conv2d_tokens(u0, p.kernel, p.patch_shape) + p.bias[:, None]


def extract_patches(image, patch: int) -> np.ndarray:
    """Cut a 2-D image into non-overlapping ``patch x patch`` crops.

    Crops are taken in row-major order and flattened row-major; trailing
    pixels that do not fill a whole crop are dropped.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise DimensionError(f"expected a grayscale image, got shape {img.shape}")
    if patch < 1 or patch > min(img.shape):
        raise ValueError(f"patch size {patch} does not fit image {img.shape}")
    rows, cols = img.shape[0] // patch, img.shape[1] // patch
    img = img[: rows * patch, : cols * patch]
    crops = img.reshape(rows, patch, cols, patch).swapaxes(1, 2)
    return crops.reshape(rows * cols, patch * patch)


def read_pgm(path) -> np.ndarray:
    """Read an 8-bit grayscale PGM (P2 or P5) into floats in [0, 1]."""
    with open(path, "rb") as fh:
        raw = fh.read()
    tokens: list[bytes] = []
    pos = 0
    # header: magic, width, height, maxval; '#' starts a comment
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"{path}: truncated PGM header")
        tokens.append(raw[start:pos])
    magic, width, height, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval < 1 or maxval > 255:
        raise ValueError(f"{path}: only 8-bit PGM is supported (maxval={maxval})")
    if magic == b"P5":
        pos += 1
        data = np.frombuffer(raw[pos : pos + width * height], dtype=np.uint8)
    elif magic == b"P2":
        data = np.array(raw[pos:].split()[: width * height], dtype=np.int64)
    else:
        raise ValueError(f"{path}: not a PGM file (magic {magic!r})")
    if data.size != width * height:
        raise ValueError(f"{path}: expected {width * height} pixels, found {data.size}")
    return data.reshape(height, width).astype(np.float64) / maxval
