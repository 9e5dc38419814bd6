"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines inline;
they are also collected into the terminal summary.
"""

import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from splitformer.adapters import ConvTokenEmbedParams, conv_token_embed_substep, vit_forward, vit_post, vit_pre
from splitformer.attention import (
    ConvHeadWeights,
    MultiHeadWeights,
    SingleHeadWeights,
    attention_substep,
    attention_term,
    conv_attention_substep,
    multihead_substep,
)
from splitformer.factory import random_block, random_model, random_vit
from splitformer.projection import NormTarget, enumerate_s1_two_point, oracle_s1, project_s1, project_s2, row_moments
from splitformer.reference import std_attention, std_conv_attention
from splitformer.splitting import block_step, propagate, substep_labels
from splitformer.training import fd_gradient, flatten, teacher_student_task, train
from splitformer.verify import block_equivalence, splitting_order_table

FIXTURES = Path(__file__).parent / "fixtures"
RESULTS: list[str] = []


def report(number, name, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2} {name}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def maxabs(a, b):
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def head(rng, n_y):
    return SingleHeadWeights(*(rng.standard_normal((n_y, n_y)) / np.sqrt(n_y) for _ in range(3)))


def test_01_block_equivalence():
    t0 = time.perf_counter()
    rep = block_equivalence(seed=0, trials=200)
    dt = time.perf_counter() - t0
    err = max(c.max_abs_error for c in rep.cases)
    report(1, "block equivalence", len(rep.cases) == 200 and err <= 1e-12 and dt < 10,
           f"200 draws, max err {err:.2e} (tol 1e-12), {dt:.2f}s (limit 10s)")


def test_02_attention_identity():
    rng = np.random.default_rng(2)
    err = 0.0
    for i in range(100):
        n_x, n_y = int(rng.integers(1, 9)), int(rng.integers(1, 17))
        w, u = head(rng, n_y), rng.standard_normal((n_x, n_y))
        scale = n_y if i % 2 == 0 else 1
        err = max(err, maxabs(attention_substep(u, w, scale_dim=scale) - u, std_attention(u, w.w_q, w.w_k, w.w_v, scale)))
    report(2, "attention identity", err <= 1e-12, f"100 draws, max err {err:.2e} (tol 1e-12)")


def test_03_projection_certificate():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    mean_err = var_err = 0.0
    cert_ok = True
    for _ in range(100):
        n_y = int(rng.integers(2, 17))
        v = rng.standard_normal(n_y) * rng.uniform(0.1, 10) + rng.uniform(-5, 5)
        t = NormTarget(rng.uniform(-3, 3), rng.uniform(0.1, 3))
        alpha, beta = row_moments(project_s1(v[None, :], t))
        mean_err = max(mean_err, abs(alpha[0] - t.sigma1))
        var_err = max(var_err, abs(beta[0] - t.sigma2**2))
        cert_ok &= oracle_s1(v, t, 10_000, seed=int(rng.integers(2**31)))["pass"]
    two_err, same_branch = 0.0, True
    for _ in range(100):
        v = rng.standard_normal(2) * 3
        t = NormTarget(rng.uniform(-3, 3), rng.uniform(0.1, 3))
        ours, enum = project_s1(v[None, :], t)[0], enumerate_s1_two_point(v, t)
        same_branch &= bool(np.array_equal(ours > t.sigma1, enum > t.sigma1))
        two_err = max(two_err, maxabs(ours, enum))
    dt = time.perf_counter() - t0
    ok = mean_err <= 1e-12 and var_err <= 1e-10 and cert_ok and same_branch and two_err <= 1e-12 and dt < 30
    report(3, "projection certificate", ok,
           f"mean err {mean_err:.1e}, var err {var_err:.1e}, 1e4-sample oracle {'ok' if cert_ok else 'beaten'}, "
           f"n_y=2 same point (err {two_err:.1e}), {dt:.2f}s (limit 30s)")


def test_04_relu_projection():
    rng = np.random.default_rng(4)
    worst = -np.inf
    for _ in range(100):
        v = rng.standard_normal(int(rng.integers(1, 20))) * 3
        cand = np.abs(rng.standard_normal((1000, v.size))) * 3
        worst = max(worst, np.linalg.norm(project_s2(v) - v) - np.min(np.linalg.norm(cand - v, axis=1)))
    report(4, "ReLU as projection", worst <= 0.0, f"100 x 1000 candidates, worst gap {worst:.3f} (must be <= 0)")


def test_05_splitting_order():
    table = splitting_order_table()
    lie, par = table["lie"]["order"], table["parallel"]["order"]
    comm = max(table["commuting"]["error"])
    ok = all(abs(o - 1) <= 0.2 for o in lie + par) and comm <= 1e-12
    report(5, "splitting order", ok,
           f"lie {min(lie):.3f}..{max(lie):.3f}, parallel {min(par):.3f}..{max(par):.3f}, commuting err {comm:.1e}")


def test_06_multihead_degeneracy():
    rng = np.random.default_rng(6)
    bitwise, err = True, 0.0
    for _ in range(50):
        n_x, n_y = int(rng.integers(1, 9)), int(rng.integers(1, 17))
        w, u = head(rng, n_y), rng.standard_normal((n_x, n_y))
        bitwise &= bool(np.array_equal(multihead_substep(u, MultiHeadWeights([w])), attention_substep(u, w)))
        err = max(err, maxabs(multihead_substep(u, MultiHeadWeights([w, w])), u + 2 * attention_term(u, w)))
    report(6, "multi-head degeneracy", bitwise and err <= 1e-12,
           f"one head bitwise {bitwise}, two equal heads err {err:.1e} (tol 1e-12)")


def test_07_cvt():
    rng = np.random.default_rng(7)
    delta = np.zeros((3, 3))
    delta[1, 1] = 1.0
    doubled = True
    for _ in range(20):
        u = rng.standard_normal((3, 9))
        doubled &= bool(np.array_equal(conv_token_embed_substep(u, ConvTokenEmbedParams(delta, np.zeros(3), (3, 3))), 2 * u))
    J = 2
    blk = random_block(rng, 3, 4, J=J, mode="cvt", patch_shape=(2, 2))
    _, tr = block_step(rng.standard_normal((3, 4)), blk)
    n_sub = len(tr) - 1
    err = 0.0
    for _ in range(20):
        n_x, ph, pw = int(rng.integers(1, 6)), int(rng.integers(1, 5)), int(rng.integers(1, 5))
        w = ConvHeadWeights(*(rng.standard_normal((3, 3)) / 3 for _ in range(3)), patch_shape=(ph, pw))
        u = rng.standard_normal((n_x, ph * pw))
        err = max(err, maxabs(conv_attention_substep(u, w) - u, std_conv_attention(u, w.w_q, w.w_k, w.w_v, (ph, pw))))
    ok = doubled and n_sub == 6 + J and tr.labels == substep_labels(J, conv_embed=True) and err <= 1e-12
    report(7, "CvT substeps", ok, f"delta doubles exactly {doubled}, M={n_sub} (want {6 + J}), conv oracle err {err:.1e}")


def test_08_vit_composition():
    rng = np.random.default_rng(8)
    bitwise = True
    for _ in range(20):
        n_p, D, n_y, d = int(rng.integers(1, 5)), int(rng.integers(1, 6)), int(rng.integers(2, 9)), int(rng.integers(1, 4))
        m = random_model(int(rng.integers(2**31)), n_p + 1, n_y, J=2, n_t=2)
        vit = random_vit(int(rng.integers(2**31)), D, n_y, d)
        R = rng.standard_normal((n_p, D))
        u = vit_pre(R, vit)
        for blk in m.blocks:
            u, _ = block_step(u, blk)
        bitwise &= bool(np.array_equal(vit_forward(R, vit, m), vit_post(u, vit)))
    shapes = True
    for _ in range(50):
        n_p, D, n_y, d = int(rng.integers(1, 6)), int(rng.integers(1, 8)), int(rng.integers(1, 9)), int(rng.integers(1, 6))
        m = random_model(int(rng.integers(2**31)), n_p + 1, n_y, J=1)
        vit = random_vit(int(rng.integers(2**31)), D, n_y, d)
        shapes &= vit_forward(rng.standard_normal((n_p, D)), vit, m).shape == (d,)
    report(8, "ViT composition", bitwise and shapes, f"20 replays bitwise {bitwise}, 50 output-length draws {shapes}")


def test_09_permutation_equivariance():
    rng = np.random.default_rng(9)
    err = 0.0
    for _ in range(50):
        n_x, n_y = int(rng.integers(2, 9)), int(rng.integers(2, 17))
        blk = random_block(rng, n_x, n_y, J=2, constant_bias=True)
        u, P = rng.standard_normal((n_x, n_y)), rng.permutation(n_x)
        err = max(err, maxabs(block_step(u[P], blk)[0], block_step(u, blk)[0][P]))
    report(9, "permutation equivariance", err <= 1e-12, f"50 permutations, max err {err:.1e} (tol 1e-12)")


def test_10_training():
    t0 = time.perf_counter()
    student, data, _ = teacher_student_task(0)
    n_params = len(flatten(student))
    res = train(student, data, 200, 0.1, seed=0)
    ratio = res.losses[-1] / res.losses[0]
    again = train(student, data, 20, 0.1, seed=0)
    det = again.losses == res.losses[:21]

    probe = student
    probe.blocks[-1].norm2.sigma1, probe.blocks[-1].norm2.sigma2 = 0.3, 1.4
    flat = flatten(probe, include_norms=True)
    g = fd_gradient(probe, data, include_norms=True, flat=flat)
    X, Y = np.stack([x for x, _ in data.pairs]), np.stack([y for _, y in data.pairs])
    O = propagate(X, probe)
    r = O - Y
    analytic = {"sigma1": 2 * np.mean(r), "sigma2": 2 * np.mean(r * (O - 0.3) / 1.4)}
    rel = max(abs(g[k] - analytic[n.rsplit(".", 1)[1]]) / abs(analytic[n.rsplit(".", 1)[1]])
              for k, n in enumerate(flat.labels()) if n.startswith(f"blocks.{len(probe.blocks) - 1}.norm2."))
    dt = time.perf_counter() - t0
    ok = n_params <= 500 and ratio <= 0.5 and det and rel <= 1e-6 and dt < 120
    report(10, "training sanity", ok,
           f"{n_params} params, final/initial loss {ratio:.3f} (<= 0.5), rerun identical {det}, "
           f"probe rel err {rel:.1e} (tol 1e-6), {dt:.1f}s (limit 120s)")


def _cli(args, tmp_path):
    res = subprocess.run([sys.executable, "-m", "splitformer.cli", *args], capture_output=True, cwd=tmp_path)
    return res.returncode, res.stdout


def test_11_cli_determinism(tmp_path):
    model, inp = str(FIXTURES / "golden_model.json"), str(FIXTURES / "golden_input.json")
    commands = {
        "verify": ["verify", "--seed", "3", "--trials", "20"],
        "step": ["step", "--model", model, "--input", inp, "--trace"],
        "converge": ["converge"],
        "train": ["train", "--seed", "1", "--steps", "3"],
        "train-vit": ["train", "--mode", "vit", "--seed", "1", "--steps", "2"],
        "init": ["init", "--seed", "5", "--mode", "cvt", "--n-y", "9"],
    }
    bad = []
    for name, args in commands.items():
        a, b = _cli(args, tmp_path), _cli(args, tmp_path)
        if a[0] != 0 or a != b:
            bad.append(name)
        else:
            json.loads(a[1])
    report(11, "CLI determinism", not bad, f"{len(commands) - len(bad)}/{len(commands)} commands byte-identical"
           + (f"; differing: {', '.join(bad)}" if bad else ""))
