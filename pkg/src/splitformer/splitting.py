"""Lie splitting of the continuous Transformer, and a small splitting toolkit.

One time step of the splitting scheme (unit step) advances the state through
M = 4 + J substeps, in this order:

    attention  ->  norm1  ->  ffn_1 ... ffn_J  ->  skip_avg  ->  norm2

With a convolutional token embedding two more substeps (``conv_embed`` and
``embed_norm``) run first, so M = 6 + J.  Chaining N_t steps gives the
propagator from the initial state to the final one.

The second half of the module is generic: sequential (Lie) and parallel
splitting for ``u_t + sum_k A_k(u) = 0`` with user-supplied substep
solvers, and helpers to measure observed convergence order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import expm

from .adapters import ConvTokenEmbedParams, conv_token_embed_substep
from .attention import (
    ConvHeadWeights,
    MultiHeadWeights,
    SingleHeadWeights,
    attention_substep,
    conv_attention_substep,
    multihead_substep,
)
from .feedforward import FfnLayerParams, ffn_substep
from .grid import DimensionError, as_grid
from .projection import NormTarget, project_s1

__all__ = [
    "MODES",
    "SKIP_MODES",
    "BlockParams",
    "ModelParams",
    "SplitTrace",
    "substep_labels",
    "block_step",
    "propagate",
    "relax",
    "linear_flow",
    "euler_flow",
    "lie_solve",
    "parallel_solve",
    "observed_orders",
    "convergence_study",
    "noncommuting_system",
]

MODES = ("vanilla", "multihead", "cvt")
SKIP_MODES = ("average", "add")

_ATTN_FOR_MODE = {
    "vanilla": SingleHeadWeights,
    "multihead": MultiHeadWeights,
    "cvt": ConvHeadWeights,
}


@dataclass
class BlockParams:
    """Control variables of one time step."""

    attn: SingleHeadWeights | MultiHeadWeights | ConvHeadWeights
    norm1: NormTarget
    norm2: NormTarget
    ffn: list[FfnLayerParams]
    conv_embed: ConvTokenEmbedParams | None = None

    def __post_init__(self):
        self.ffn = list(self.ffn)
        if not self.ffn:
            raise ValueError("a block needs at least one feedforward layer (J >= 1)")
        n_y, n_x = self.n_y, self.n_x
        for j, layer in enumerate(self.ffn, 1):
            if layer.w.shape[0] != n_y:
                raise DimensionError(f"ffn layer {j} weight is {layer.w.shape}, expected n_y={n_y}")
            if layer.b.shape[0] != n_x:
                raise DimensionError(f"ffn layer {j} bias has length {layer.b.shape[0]}, expected n_x={n_x}")
        if self.conv_embed is not None:
            ph, pw = self.conv_embed.patch_shape
            if ph * pw != n_y:
                raise DimensionError(f"embedding patch grid {ph}x{pw} does not match n_y={n_y}")
            if self.conv_embed.bias.shape[0] != n_x:
                raise DimensionError("embedding bias length does not match n_x")

    @property
    def n_x(self) -> int:
        return self.ffn[0].b.shape[0]

    @property
    def n_y(self) -> int:
        return self.attn.n_y

    @property
    def J(self) -> int:
        return len(self.ffn)

    @property
    def mode(self) -> str:
        if isinstance(self.attn, MultiHeadWeights):
            return "multihead"
        if isinstance(self.attn, ConvHeadWeights):
            return "cvt"
        return "vanilla"


@dataclass
class ModelParams:
    """The whole control trajectory: one ``BlockParams`` per time step."""

    blocks: list[BlockParams]
    mode: str = "vanilla"
    skip_mode: str = "average"

    def __post_init__(self):
        self.blocks = list(self.blocks)
        if not self.blocks:
            raise ValueError("a model needs at least one block (N_t >= 1)")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.skip_mode not in SKIP_MODES:
            raise ValueError(f"unknown skip_mode {self.skip_mode!r}; expected one of {SKIP_MODES}")
        want = _ATTN_FOR_MODE[self.mode]
        first = self.blocks[0]
        for n, blk in enumerate(self.blocks, 1):
            if not isinstance(blk.attn, want):
                raise ValueError(f"block {n}: mode {self.mode!r} needs {want.__name__} attention")
            if (blk.n_x, blk.n_y) != (first.n_x, first.n_y):
                raise DimensionError(f"block {n} has dims {(blk.n_x, blk.n_y)}, expected {(first.n_x, first.n_y)}")
            if blk.J != first.J:
                raise ValueError(f"block {n} has J={blk.J}, expected {first.J}")
            if (blk.conv_embed is not None) != (first.conv_embed is not None):
                raise ValueError(f"block {n}: token embedding must be present in all blocks or none")

    @property
    def n_x(self) -> int:
        return self.blocks[0].n_x

    @property
    def n_y(self) -> int:
        return self.blocks[0].n_y

    @property
    def J(self) -> int:
        return self.blocks[0].J

    @property
    def n_t(self) -> int:
        return len(self.blocks)


@dataclass
class SplitTrace:
    """Labelled intermediate states ``u^0, u^{1/M}, ..., u^1`` of a step."""

    labels: list[str] = field(default_factory=list)
    states: list[np.ndarray] = field(default_factory=list)

    def record(self, label: str, state: np.ndarray) -> np.ndarray:
        self.labels.append(label)
        self.states.append(state)
        return state

    def __len__(self) -> int:
        return len(self.states)

    def __iter__(self):
        return iter(zip(self.labels, self.states))

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def extend(self, other: "SplitTrace") -> None:
        """Append ``other``, dropping its input state (it equals our final one)."""
        self.labels.extend(other.labels[1:])
        self.states.extend(other.states[1:])


def substep_labels(J: int, conv_embed: bool = False) -> list[str]:
    """Trace labels for one step, including the leading ``input`` state."""
    labels = ["input"]
    if conv_embed:
        labels += ["conv_embed", "embed_norm"]
    labels += ["attention", "norm1"]
    labels += [f"ffn_{j}" for j in range(1, J + 1)]
    labels += ["skip_avg", "norm2"]
    return labels


def _attention(u, attn, scale_dim):
    if isinstance(attn, MultiHeadWeights):
        return multihead_substep(u, attn, scale_dim)
    if isinstance(attn, ConvHeadWeights):
        return conv_attention_substep(u, attn, scale_dim)
    return attention_substep(u, attn, scale_dim)


def relax(u_ffn, u_norm, skip_mode: str = "average") -> np.ndarray:
    """Skip substep: average (default) or sum of FFN output and normalized state."""
    if skip_mode == "average":
        return 0.5 * (u_ffn + u_norm)
    if skip_mode == "add":
        return u_ffn + u_norm
    raise ValueError(f"unknown skip_mode {skip_mode!r}")


def block_step(u0, p: BlockParams, *, skip_mode: str = "average", scale_dim: int | None = None):
    """Advance one unit time step through all substeps.

    Returns the final state and the ``SplitTrace`` of every intermediate
    state.  The CvT embedding normalization reuses ``p.norm1``.
    """
    u = as_grid(u0)
    if u.shape[-2:] != (p.n_x, p.n_y):
        raise DimensionError(f"state has shape {u.shape[-2:]}, block expects {(p.n_x, p.n_y)}")
    tr = SplitTrace()
    tr.record("input", u)
    if p.conv_embed is not None:
        u = tr.record("conv_embed", conv_token_embed_substep(u, p.conv_embed))
        u = tr.record("embed_norm", project_s1(u, p.norm1))
    u = tr.record("attention", _attention(u, p.attn, scale_dim))
    u_norm = tr.record("norm1", project_s1(u, p.norm1))
    u = u_norm
    for j, layer in enumerate(p.ffn, 1):
        u = tr.record(f"ffn_{j}", ffn_substep(u, layer))
    u = tr.record("skip_avg", relax(u, u_norm, skip_mode))
    u = tr.record("norm2", project_s1(u, p.norm2))
    return u, tr


def propagate(f, m: ModelParams, *, return_trace: bool = False, scale_dim: int | None = None):
    """Compose ``block_step`` over all blocks of ``m``."""
    u = as_grid(f)
    full = None
    for blk in m.blocks:
        u, tr = block_step(u, blk, skip_mode=m.skip_mode, scale_dim=scale_dim)
        if return_trace:
            if full is None:
                full = tr
            else:
                full.extend(tr)
    return (u, full) if return_trace else u


# -- generic splitting toolkit --------------------------------------------------

# A substep solver advances u_t + weight * A_k(u) = 0 from t0 to t1.
SubSolver = Callable[[np.ndarray, float, float, float], np.ndarray]


def linear_flow(A) -> SubSolver:
    """Exact solver for a linear operator ``A_k(u) = A u``.

    ``A`` may be a scalar or a square matrix.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim == 0:
        c = float(A)

        def solve_scalar(u, t0, t1, weight=1.0):
            return np.asarray(u, dtype=np.float64) * math.exp(-weight * c * (t1 - t0))

        return solve_scalar

    def solve(u, t0, t1, weight=1.0):
        return expm(-weight * (t1 - t0) * A) @ np.asarray(u, dtype=np.float64)

    return solve


def euler_flow(op: Callable[[float, np.ndarray], np.ndarray]) -> SubSolver:
    """One explicit Euler step for ``A_k(t, u) = op(t, u)``."""

    def solve(u, t0, t1, weight=1.0):
        u = np.asarray(u, dtype=np.float64)
        return u - weight * (t1 - t0) * np.asarray(op(t0, u))

    return solve


def _steps(t_span, n_steps):
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    t0, t1 = float(t_span[0]), float(t_span[1])
    dt = (t1 - t0) / n_steps
    return [(t0 + n * dt, t0 + (n + 1) * dt) for n in range(n_steps)]


def lie_solve(ops: Sequence[SubSolver], u0, t_span, n_steps: int) -> np.ndarray:
    """Sequential (Lie) splitting over ``n_steps`` uniform steps."""
    ops = list(ops)
    if not ops:
        raise ValueError("need at least one operator")
    u = np.asarray(u0, dtype=np.float64)
    for a, b in _steps(t_span, n_steps):
        for op in ops:
            u = op(u, a, b, 1.0)
    return u


def parallel_solve(ops: Sequence[SubSolver], u0, t_span, n_steps: int) -> np.ndarray:
    """Parallel splitting: each branch solves ``v_t + K A_k(v) = 0`` from
    the shared state, then the K results are averaged (in list order)."""
    ops = list(ops)
    if not ops:
        raise ValueError("need at least one operator")
    K = len(ops)
    u = np.asarray(u0, dtype=np.float64)
    for a, b in _steps(t_span, n_steps):
        branches = [op(u, a, b, float(K)) for op in ops]
        acc = branches[0]
        for v in branches[1:]:
            acc = acc + v
        u = acc / K if K > 1 else acc
    return u


def observed_orders(dts, errors) -> list[float]:
    """``log(e_i / e_{i+1}) / log(dt_i / dt_{i+1})`` for consecutive pairs."""
    out = []
    for (h0, e0), (h1, e1) in zip(zip(dts, errors), zip(dts[1:], errors[1:])):
        out.append(math.log(e0 / e1) / math.log(h0 / h1))
    return out


def noncommuting_system():
    """The fixed test pair ``A = [[0,1],[0,0]]``, ``B = [[0,0],[1,0]]``."""
    return np.array([[0.0, 1.0], [0.0, 0.0]]), np.array([[0.0, 0.0], [1.0, 0.0]])


def convergence_study(scheme: str, ops, u0, T: float, reference, step_counts=(8, 16, 32, 64, 128)) -> dict:
    """Errors and observed orders of a splitting scheme against ``reference``.

    ``scheme`` is ``"lie"`` or ``"parallel"``; errors are max-abs at time T.
    """
    solver = {"lie": lie_solve, "parallel": parallel_solve}.get(scheme)
    if solver is None:
        raise ValueError(f"unknown scheme {scheme!r}")
    ref = np.asarray(reference, dtype=np.float64)
    dts, errs = [], []
    for n in step_counts:
        u = solver(ops, u0, (0.0, T), n)
        dts.append(T / n)
        errs.append(float(np.max(np.abs(u - ref))))
    return {"scheme": scheme, "dt": dts, "error": errs, "order": observed_orders(dts, errs)}
