"""Runnable verification suites and their JSON report.

Each suite returns a ``VerifyReport`` whose cases carry a measured error and
the tolerance it must stay under.  Suites are seeded and deterministic.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .adapters import ConvTokenEmbedParams, conv_token_embed_substep, vit_forward, vit_post, vit_pre
from .attention import ConvHeadWeights, MultiHeadWeights, SingleHeadWeights, attention_substep, conv_attention_substep, multihead_substep
from .factory import random_block, random_model, random_vit
from .projection import NormTarget, enumerate_s1_two_point, oracle_s1, project_s1, project_s2, row_moments
from .reference import std_attention, std_conv_attention, std_encoder_block, to_std_params
from .splitting import block_step, convergence_study, lie_solve, linear_flow, noncommuting_system

__all__ = ["Case", "VerifyReport", "SUITES", "run_suite", "splitting_order_table"]


@dataclass
class Case:
    id: str
    description: str
    max_abs_error: float
    tolerance: float
    passed: bool = field(init=False)

    def __post_init__(self):
        self.max_abs_error = float(self.max_abs_error)
        self.passed = bool(self.max_abs_error <= self.tolerance)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "description": self.description,
            "max_abs_error": self.max_abs_error,
            "tolerance": self.tolerance,
            "pass": self.passed,
        }


@dataclass
class VerifyReport:
    suite: str
    seed: int
    config: dict
    cases: list[Case] = field(default_factory=list)
    timestamp: str | None = None

    def add(self, id, description, err, tol) -> Case:
        case = Case(id, description, err, tol)
        self.cases.append(case)
        return case

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.cases)

    def to_dict(self) -> dict:
        n_pass = sum(c.passed for c in self.cases)
        cfg = json.dumps({"suite": self.suite, "seed": self.seed, **self.config}, sort_keys=True)
        return {
            "suite": self.suite,
            "seed": self.seed,
            "config": self.config,
            "config_hash": hashlib.sha256(cfg.encode()).hexdigest()[:16],
            "timestamp": self.timestamp,
            "summary": {"total": len(self.cases), "passed": n_pass, "failed": len(self.cases) - n_pass},
            "pass": self.passed,
            "cases": [c.to_dict() for c in self.cases],
        }


def _maxabs(a, b) -> float:
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def block_equivalence(seed: int = 0, trials: int = 200) -> VerifyReport:
    rep = VerifyReport("block-equivalence", seed, {"trials": trials})
    rng = np.random.default_rng(seed)
    for i in range(trials):
        n_x, n_y = int(rng.integers(1, 9)), int(rng.integers(2, 17))
        blk = random_block(rng, n_x, n_y, J=2)
        u = rng.standard_normal((n_x, n_y))
        ours, _ = block_step(u, blk)
        ref = std_encoder_block(u, to_std_params(blk))
        rep.add(f"trial-{i}", f"block_step vs reference block, n_x={n_x}, n_y={n_y}, J=2", _maxabs(ours, ref), 1e-12)
    return rep


def projection_oracle(seed: int = 0, count: int = 100, samples: int = 10_000) -> VerifyReport:
    rep = VerifyReport("projection-oracle", seed, {"count": count, "samples": samples})
    rng = np.random.default_rng(seed)
    for i in range(count):
        n_y = int(rng.integers(2, 17))
        v = rng.standard_normal(n_y) * rng.uniform(0.1, 10.0) + rng.uniform(-5, 5)
        t = NormTarget(rng.uniform(-3, 3), rng.uniform(0.1, 3))
        cert = oracle_s1(v, t, samples, seed=int(rng.integers(2**31)))
        out = project_s1(v[None, :], t)
        alpha, beta = row_moments(out)
        rep.add(f"certificate-{i}", f"closed form beats {samples} feasible samples (n_y={n_y})",
                max(0.0, cert["closed_form_distance"] - cert["best_sampled_distance"]), 1e-9)
        rep.add(f"mean-{i}", "projected row mean equals sigma1", abs(alpha[0] - t.sigma1), 1e-12)
        rep.add(f"variance-{i}", "projected row variance equals sigma2^2", abs(beta[0] - t.sigma2**2), 1e-10)
    for i in range(count):
        v = rng.standard_normal(2) * 3
        t = NormTarget(rng.uniform(-3, 3), rng.uniform(0.1, 3))
        rep.add(f"two-point-{i}", "closed form equals exhaustive enumeration at n_y=2",
                _maxabs(project_s1(v[None, :], t)[0], enumerate_s1_two_point(v, t)), 1e-12)
    return rep


def splitting_order_table(step_counts=(8, 16, 32, 64, 128)) -> dict:
    """Observed orders of Lie and parallel splitting on the fixed 2x2 system."""
    A, B = noncommuting_system()
    u0 = np.array([1.0, 0.0])
    ref = expm(-(A + B)) @ u0
    ops = [linear_flow(A), linear_flow(B)]
    table = {s: convergence_study(s, ops, u0, 1.0, ref, step_counts) for s in ("lie", "parallel")}
    comm = [linear_flow(-0.5), linear_flow(-0.5)]
    table["commuting"] = {
        "dt": [1.0 / n for n in step_counts],
        "error": [abs(float(lie_solve(comm, 1.0, (0.0, 1.0), n)) - math.e) for n in step_counts],
    }
    return table


def splitting_order(seed: int = 0) -> VerifyReport:
    rep = VerifyReport("splitting-order", seed, {"dt": "2^-3..2^-7"})
    table = splitting_order_table()
    for s in ("lie", "parallel"):
        orders = table[s]["order"]
        rep.add(f"{s}-order", f"{s} splitting observed order is 1 (orders {', '.join(f'{o:.4f}' for o in orders)})",
                max(abs(o - 1.0) for o in orders), 0.2)
    rep.add("commuting-exact", "Lie splitting with commuting exact flows reproduces e", max(table["commuting"]["error"]), 1e-12)
    return rep


def properties(seed: int = 0, trials: int = 20) -> VerifyReport:
    rep = VerifyReport("properties", seed, {"trials": trials})
    rng = np.random.default_rng(seed)

    err = 0.0
    for _ in range(trials):
        n_x, n_y = int(rng.integers(1, 9)), int(rng.integers(2, 17))
        w = SingleHeadWeights(*(rng.standard_normal((n_y, n_y)) / np.sqrt(n_y) for _ in range(3)))
        u = rng.standard_normal((n_x, n_y))
        err = max(err, _maxabs(attention_substep(u, w) - u, std_attention(u, w.w_q, w.w_k, w.w_v, n_y)))
    rep.add("attention-identity", "attention substep minus input equals reference attention", err, 1e-12)

    err = 0.0
    for _ in range(trials):
        n_x, n_y = int(rng.integers(2, 9)), int(rng.integers(2, 17))
        blk = random_block(rng, n_x, n_y, J=2, constant_bias=True)
        u = rng.standard_normal((n_x, n_y))
        perm = rng.permutation(n_x)
        err = max(err, _maxabs(block_step(u[perm], blk)[0], block_step(u, blk)[0][perm]))
    rep.add("permutation-equivariance", "block_step commutes with token permutations", err, 1e-12)

    exact, err = 0.0, 0.0
    for _ in range(trials):
        n_x, n_y = int(rng.integers(1, 9)), int(rng.integers(2, 17))
        w = SingleHeadWeights(*(rng.standard_normal((n_y, n_y)) / np.sqrt(n_y) for _ in range(3)))
        u = rng.standard_normal((n_x, n_y))
        single = attention_substep(u, w)
        exact = max(exact, 0.0 if np.array_equal(multihead_substep(u, MultiHeadWeights([w])), single) else 1.0)
        err = max(err, _maxabs(multihead_substep(u, MultiHeadWeights([w, w])), u + 2 * (single - u)))
    rep.add("multihead-one-head", "one head is bitwise the single-head substep", exact, 0.0)
    rep.add("multihead-two-equal-heads", "two equal heads double the attention term", err, 1e-12)

    err = 0.0
    for _ in range(trials):
        v = rng.standard_normal(int(rng.integers(1, 20))) * 3
        cand = np.abs(rng.standard_normal((1000, v.size))) * 3
        gap = np.linalg.norm(project_s2(v) - v) - np.min(np.linalg.norm(cand - v, axis=1))
        err = max(err, gap, 0.0)
    rep.add("relu-projection", "ReLU is the nearest nonnegative point", err, 0.0)

    err = 0.0
    for _ in range(trials):
        n_x = int(rng.integers(1, 5))
        ph, pw = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        w = ConvHeadWeights(*(rng.standard_normal((3, 3)) / 3 for _ in range(3)), patch_shape=(ph, pw))
        u = rng.standard_normal((n_x, ph * pw))
        err = max(err, _maxabs(conv_attention_substep(u, w) - u, std_conv_attention(u, w.w_q, w.w_k, w.w_v, (ph, pw))))
    rep.add("conv-attention-oracle", "convolutional attention equals the loop oracle", err, 1e-12)

    m = random_model(int(rng.integers(2**31)), 3, 4, J=2, mode="cvt", patch_shape=(2, 2))
    blk = m.blocks[0]
    delta = np.zeros((3, 3))
    delta[1, 1] = 1.0
    u = rng.standard_normal((3, 4))
    doubled = conv_token_embed_substep(u, ConvTokenEmbedParams(delta, np.zeros(3), (2, 2)))
    rep.add("cvt-delta-embedding", "delta-kernel token embedding doubles the state", _maxabs(doubled, 2 * u), 0.0)
    _, tr = block_step(u, blk)
    rep.add("cvt-trace-length", "CvT trace has M = 6 + J substeps", abs(len(tr) - (6 + blk.J + 1)), 0.0)

    err = 0.0
    for _ in range(trials):
        n_p, D, n_y, d = int(rng.integers(1, 5)), int(rng.integers(1, 6)), int(rng.integers(2, 9)), int(rng.integers(1, 4))
        m = random_model(int(rng.integers(2**31)), n_p + 1, n_y, J=2, n_t=2)
        vit = random_vit(int(rng.integers(2**31)), D, n_y, d)
        R = rng.standard_normal((n_p, D))
        u = vit_pre(R, vit)
        for blk in m.blocks:
            u, _ = block_step(u, blk)
        err = max(err, 0.0 if np.array_equal(vit_forward(R, vit, m), vit_post(u, vit)) else 1.0)
    rep.add("vit-composition", "ViT forward equals head(propagate(embed(R)))", err, 0.0)
    return rep


SUITES = {
    "block-equivalence": block_equivalence,
    "projection-oracle": projection_oracle,
    "splitting-order": splitting_order,
    "properties": properties,
}


def run_suite(name: str, seed: int = 0, **kw) -> VerifyReport:
    if name not in SUITES:
        raise KeyError(name)
    return SUITES[name](seed=seed, **kw)
