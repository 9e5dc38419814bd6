"""The discrete learning problem at desk scale.

The loss is the mean over a dataset of a per-pair discrepancy between the
propagated input and its target.  Gradients are central finite differences
over a flat view of every trainable scalar, and training is plain gradient
descent.  Pair losses are combined with ``math.fsum`` so the result does
not depend on pair order.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np

from .adapters import VitParams, vit_forward
from .attention import ConvHeadWeights, MultiHeadWeights
from .splitting import ModelParams, propagate

__all__ = [
    "Dataset",
    "FlatParams",
    "NonFiniteLossError",
    "TrainingDiverged",
    "flatten",
    "predict",
    "pair_losses",
    "loss",
    "fd_gradient",
    "train",
    "TrainResult",
    "teacher_student_task",
    "vit_toy_task",
]

LOSS_KINDS = ("mse", "cross_entropy")
MAX_PARAMS = 2000
DIVERGENCE_LIMIT = 1e6


class NonFiniteLossError(FloatingPointError):
    def __init__(self, index: int, value: float):
        super().__init__(f"non-finite loss {value} while perturbing parameter {index}")
        self.index = index
        self.value = value


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class Dataset:
    """Input/target pairs.  Inputs are grids, or patch arrays in ViT mode."""

    pairs: list[tuple[np.ndarray, np.ndarray]]
    loss_kind: str = "mse"

    def __post_init__(self):
        self.pairs = [(np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)) for x, y in self.pairs]
        if not self.pairs:
            raise ValueError("dataset is empty")
        if self.loss_kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss {self.loss_kind!r}; expected one of {LOSS_KINDS}")
        x0, y0 = self.pairs[0]
        for i, (x, y) in enumerate(self.pairs):
            if x.shape != x0.shape or y.shape != y0.shape:
                raise ValueError(f"pair {i} has shapes {x.shape}/{y.shape}, expected {x0.shape}/{y0.shape}")

    def __len__(self) -> int:
        return len(self.pairs)


def _slots(m: ModelParams, vit: VitParams | None, include_norms: bool):
    """Yield ``(name, owner, attribute)`` for each trainable array or scalar."""
    for n, blk in enumerate(m.blocks):
        pre = f"blocks.{n}"
        if blk.conv_embed is not None:
            yield f"{pre}.conv_embed.kernel", blk.conv_embed, "kernel"
            yield f"{pre}.conv_embed.bias", blk.conv_embed, "bias"
        heads = blk.attn.heads if isinstance(blk.attn, MultiHeadWeights) else [blk.attn]
        for h, head in enumerate(heads):
            hp = f"{pre}.attn.heads.{h}" if isinstance(blk.attn, MultiHeadWeights) else f"{pre}.attn"
            for name in ("w_q", "w_k", "w_v"):
                yield f"{hp}.{name}", head, name
        for j, layer in enumerate(blk.ffn):
            yield f"{pre}.ffn.{j}.w", layer, "w"
            yield f"{pre}.ffn.{j}.b", layer, "b"
        if include_norms:
            for which in ("norm1", "norm2"):
                t = getattr(blk, which)
                yield f"{pre}.{which}.sigma1", t, "sigma1"
                yield f"{pre}.{which}.sigma2", t, "sigma2"
    if vit is not None:
        for name in ("embed", "class_token", "head"):
            yield f"vit.{name}", vit, name


@dataclass
class FlatParams:
    """Every trainable scalar as one vector, plus the map back to structure."""

    vector: np.ndarray
    names: list[str]
    shapes: list[tuple[int, ...]]
    template: tuple = field(repr=False)
    include_norms: bool = False

    def __len__(self) -> int:
        return self.vector.shape[0]

    def unflatten(self, vector=None):
        """Return ``(ModelParams, VitParams | None)`` holding ``vector``."""
        vec = self.vector if vector is None else np.asarray(vector, dtype=np.float64)
        if vec.shape != self.vector.shape:
            raise ValueError(f"vector has shape {vec.shape}, expected {self.vector.shape}")
        m, vit = copy.deepcopy(self.template)
        pos = 0
        for (name, owner, attr), shape in zip(_slots(m, vit, self.include_norms), self.shapes):
            size = math.prod(shape)
            chunk = vec[pos : pos + size]
            setattr(owner, attr, float(chunk[0]) if shape == () else chunk.reshape(shape).copy())
            pos += size
        return m, vit

    def labels(self) -> list[str]:
        """Per-coordinate names like ``blocks.0.attn.w_q[1,2]``."""
        out = []
        for name, shape in zip(self.names, self.shapes):
            if shape == ():
                out.append(name)
            else:
                out.extend(f"{name}[{','.join(map(str, idx))}]" for idx in np.ndindex(*shape))
        return out


def flatten(m: ModelParams, vit: VitParams | None = None, include_norms: bool = False) -> FlatParams:
    names, shapes, chunks = [], [], []
    for name, owner, attr in _slots(m, vit, include_norms):
        val = np.asarray(getattr(owner, attr), dtype=np.float64)
        names.append(name)
        shapes.append(val.shape)
        chunks.append(val.ravel())
    vec = np.concatenate(chunks) if chunks else np.zeros(0)
    return FlatParams(vec, names, shapes, copy.deepcopy((m, vit)), include_norms)


def predict(m: ModelParams, inputs, vit: VitParams | None = None) -> np.ndarray:
    """Batched forward pass over stacked inputs."""
    X = np.stack([np.asarray(x, dtype=np.float64) for x in inputs])
    if vit is not None:
        return vit_forward(X, vit, m)
    return propagate(X, m)


def _cross_entropy(logits: np.ndarray, target: np.ndarray) -> float:
    top = float(np.max(logits))
    lse = top + math.log(math.fsum(math.exp(float(z) - top) for z in logits))
    return -math.fsum(float(t) * (float(z) - lse) for z, t in zip(logits, target))


def pair_losses(m: ModelParams, d: Dataset, vit: VitParams | None = None) -> list[float]:
    out = predict(m, [x for x, _ in d.pairs], vit)
    losses = []
    for o, (_, y) in zip(out, d.pairs):
        if o.shape != y.shape:
            raise ValueError(f"model output shape {o.shape} does not match target shape {y.shape}")
        if d.loss_kind == "mse":
            diff = (o - y).ravel()
            losses.append(math.fsum(diff * diff) / diff.size)
        else:
            losses.append(_cross_entropy(o.ravel(), y.ravel()))
    return losses


def loss(m: ModelParams, d: Dataset, vit: VitParams | None = None) -> float:
    """Mean per-pair loss (mse or softmax cross-entropy)."""
    per = pair_losses(m, d, vit)
    return math.fsum(per) / len(per)


def fd_gradient(
    m: ModelParams,
    d: Dataset,
    h: float = 1e-5,
    vit: VitParams | None = None,
    include_norms: bool = False,
    order=None,
    flat: FlatParams | None = None,
) -> np.ndarray:
    """Central-difference gradient of ``loss`` w.r.t. the flat parameters.

    ``order`` optionally permutes the coordinate evaluation order; every
    coordinate is computed independently so the result does not change.
    """
    if h <= 0:
        raise ValueError(f"step h must be positive, got {h}")
    flat = flat or flatten(m, vit, include_norms)
    base = flat.vector
    grad = np.zeros_like(base)
    idx = range(base.size) if order is None else order
    for i in idx:
        vals = []
        for sign in (1.0, -1.0):
            p = base.copy()
            p[i] += sign * h
            mm, vv = flat.unflatten(p)
            val = loss(mm, d, vv)
            if not math.isfinite(val):
                raise NonFiniteLossError(int(i), val)
            vals.append(val)
        grad[i] = (vals[0] - vals[1]) / (2.0 * h)
    return grad


@dataclass
class TrainResult:
    model: ModelParams
    vit: VitParams | None
    losses: list[float]
    seed: int | None = None


def train(
    m: ModelParams,
    d: Dataset,
    steps: int,
    lr: float,
    seed: int | None = None,
    vit: VitParams | None = None,
    h: float = 1e-5,
    include_norms: bool = False,
    max_params: int = MAX_PARAMS,
) -> TrainResult:
    """Gradient descent with a fixed learning rate on finite-difference gradients.

    The update is deterministic; ``seed`` is only carried into the result so
    callers can record how their data and initial model were drawn.
    Returns the trained parameters and the loss before each step plus the
    final loss.
    """
    flat = flatten(m, vit, include_norms)
    if len(flat) > max_params:
        raise ValueError(f"{len(flat)} trainable scalars exceeds the desk-scale cap of {max_params}")
    theta = flat.vector.copy()
    cur_m, cur_v = flat.unflatten(theta)
    losses = [loss(cur_m, d, cur_v)]
    for step in range(steps):
        g = fd_gradient(cur_m, d, h, cur_v, include_norms)
        theta = theta - lr * g
        cur_m, cur_v = flat.unflatten(theta)
        val = loss(cur_m, d, cur_v)
        if not math.isfinite(val) or val > DIVERGENCE_LIMIT:
            raise TrainingDiverged(f"loss {val} at step {step + 1} exceeds {DIVERGENCE_LIMIT}")
        losses.append(val)
    return TrainResult(cur_m, cur_v, losses, seed)


def teacher_student_task(seed: int, n_x: int = 2, n_y: int = 4, J: int = 1, B: int = 8, n_t: int = 1):
    """Regression toy: targets come from a frozen random teacher model.

    Returns ``(student, dataset, teacher)``; teacher and student share the
    architecture but not their weights.
    """
    from .factory import random_model

    rng = np.random.default_rng(seed)
    teacher = random_model(int(rng.integers(2**31)), n_x, n_y, J, n_t)
    student = random_model(int(rng.integers(2**31)), n_x, n_y, J, n_t)
    inputs = rng.standard_normal((B, n_x, n_y))
    targets = propagate(inputs, teacher)
    return student, Dataset(list(zip(inputs, targets)), "mse"), teacher


def vit_toy_task(seed: int, n_patches: int = 2, patch_dim: int = 4, n_y: int = 4, classes: int = 2, J: int = 1, B: int = 8):
    """Classification toy for the ViT composition; labels from a teacher.

    Returns ``(student_model, student_vit, dataset)`` with one-hot targets.
    """
    from .factory import random_model, random_vit

    rng = np.random.default_rng(seed)
    n_x = n_patches + 1
    t_model = random_model(int(rng.integers(2**31)), n_x, n_y, J)
    t_vit = random_vit(int(rng.integers(2**31)), patch_dim, n_y, classes)
    s_model = random_model(int(rng.integers(2**31)), n_x, n_y, J)
    s_vit = random_vit(int(rng.integers(2**31)), patch_dim, n_y, classes)
    patches = rng.standard_normal((B, n_patches, patch_dim))
    labels = np.argmax(vit_forward(patches, t_vit, t_model), axis=-1)
    onehot = np.eye(classes)[labels]
    return s_model, s_vit, Dataset(list(zip(patches, onehot)), "cross_entropy")
