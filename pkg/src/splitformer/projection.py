"""Projections onto the normalization set S1 and the nonnegative set S2.

S1 holds the grid functions whose every token row has mean ``sigma1`` and
(population) variance ``sigma2**2``.  The nearest point of S1 to a row ``v``
in the Euclidean sense has the closed form

    u = sigma2 * (v - alpha) / sqrt(beta) + sigma1,

with ``alpha`` and ``beta`` the row mean and variance of ``v``; this is the
layer-normalization map.  S2 is the nonnegative orthant, whose projection is
the pointwise ReLU.

The randomized oracles below check the closed form against direct sampling
of the feasible set, without using the closed form to build the samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import as_grid, row_sum

__all__ = [
    "NormTarget",
    "row_moments",
    "project_s1",
    "project_s2",
    "sample_s1",
    "oracle_s1",
    "enumerate_s1_two_point",
    "oracle_s2",
]

DEFAULT_EPSILON = 1e-12


@dataclass
class NormTarget:
    """Target row mean ``sigma1``, target std ``sigma2`` and variance floor."""

    sigma1: float = 0.0
    sigma2: float = 1.0
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        self.sigma1 = float(self.sigma1)
        self.sigma2 = float(self.sigma2)
        self.epsilon = float(self.epsilon)
        if not (math.isfinite(self.sigma1) and math.isfinite(self.sigma2)):
            raise ValueError("norm targets must be finite")
        if self.sigma2 <= 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


def row_moments(v) -> tuple[np.ndarray, np.ndarray]:
    """Row mean and population variance, summed left to right."""
    v = np.asarray(v, dtype=np.float64)
    n = v.shape[-1]
    alpha = row_sum(v) / n
    d = v - alpha[..., None]
    beta = row_sum(d * d) / n
    return alpha, beta


def project_s1(v, t: NormTarget | None = None, *, return_degenerate: bool = False):
    """Project every token row of ``v`` onto S1(sigma1, sigma2).

    Rows whose variance falls below ``t.epsilon`` have no well-defined
    projection; they are mapped to the constant row ``sigma1``.  With
    ``return_degenerate=True`` the boolean mask of such rows is returned as
    a second value.
    """
    t = t or NormTarget()
    v = as_grid(v)
    alpha, beta = row_moments(v)
    degenerate = beta < t.epsilon
    safe = np.where(degenerate, 1.0, beta)
    out = t.sigma2 * (v - alpha[..., None]) / np.sqrt(safe)[..., None] + t.sigma1
    out = np.where(degenerate[..., None], t.sigma1, out)
    if return_degenerate:
        return out, degenerate
    return out


def project_s2(v) -> np.ndarray:
    """Pointwise ``max(v, 0)``; negative zero comes out as ``+0.0``."""
    v = np.asarray(v, dtype=np.float64)
    return np.where(v > 0.0, v, 0.0)


def sample_s1(n_y: int, t: NormTarget, samples: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``samples`` random rows of S1 (centre, rescale, shift)."""
    if n_y < 2:
        raise ValueError("S1 with positive variance needs n_y >= 2")
    z = rng.standard_normal((samples, n_y))
    z -= z.mean(axis=1, keepdims=True)
    std = np.sqrt(np.mean(z * z, axis=1, keepdims=True))
    return t.sigma2 * z / std + t.sigma1


def oracle_s1(v_row, t: NormTarget, samples: int, seed: int, extra=None) -> dict:
    """Certify that ``project_s1(v_row)`` is no farther from ``v_row`` than
    ``samples`` random feasible points.

    ``extra`` optionally supplies additional candidate rows to compare
    against.  The returned record has keys ``input``, ``closed_form_distance``,
    ``best_sampled_distance``, ``min_gap``, ``samples``, ``seed`` and ``pass``.
    """
    v = np.asarray(v_row, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] < 2:
        raise ValueError("oracle_s1 needs a single row with n_y >= 2")
    _, beta = row_moments(v[None, :])
    if beta[0] < t.epsilon:
        raise ValueError("oracle_s1 is undefined for a constant row")
    rng = np.random.default_rng(seed)
    cand = sample_s1(v.shape[0], t, samples, rng)
    if extra is not None:
        cand = np.vstack([cand, np.atleast_2d(np.asarray(extra, dtype=np.float64))])
    proj = project_s1(v[None, :], t)[0]
    closed = float(np.linalg.norm(proj - v))
    dists = np.linalg.norm(cand - v[None, :], axis=1)
    best = float(dists.min())
    ok = bool(np.all(closed <= dists + 1e-9))
    return {
        "input": [float(x) for x in v],
        "sigma1": t.sigma1,
        "sigma2": t.sigma2,
        "closed_form_distance": closed,
        "best_sampled_distance": best,
        "min_gap": best - closed,
        "samples": int(cand.shape[0]),
        "seed": int(seed),
        "pass": ok,
    }


def enumerate_s1_two_point(v_row, t: NormTarget) -> np.ndarray:
    """Nearest point of S1 for ``n_y == 2`` by exhaustive enumeration.

    With two entries the feasible set is exactly
    ``{(s1 + s2, s1 - s2), (s1 - s2, s1 + s2)}``.  Ties keep the first.
    """
    v = np.asarray(v_row, dtype=np.float64)
    if v.shape != (2,):
        raise ValueError("two-point enumeration needs a length-2 row")
    a = np.array([t.sigma1 + t.sigma2, t.sigma1 - t.sigma2])
    b = a[::-1].copy()
    return a if np.sum((a - v) ** 2) <= np.sum((b - v) ** 2) else b


def oracle_s2(v, candidates) -> bool:
    """True when ReLU(v) is no farther from ``v`` than any nonnegative candidate."""
    v = np.asarray(v, dtype=np.float64).ravel()
    cand = np.asarray(candidates, dtype=np.float64).reshape(-1, v.size)
    if np.any(cand < 0):
        raise ValueError("candidates must be nonnegative")
    d_relu = np.linalg.norm(project_s2(v) - v)
    return bool(np.all(d_relu <= np.linalg.norm(cand - v, axis=1) + 1e-12))
