"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -s`` (or execute this file) to see
the lines as they are produced; the terminal summary repeats them either way.

The music and character gates need data on disk. ``RNNOPT_JSB_DIR`` points at
a directory holding train/valid/test ``.jsonl`` piano-rolls (default
``data/jsb``, built by ``notebooks/make_chorales.py``). ``RNNOPT_PTB_DIR``
points at a directory holding ``ptb.train.txt`` and ``ptb.valid.txt``; when
it is missing the character gate fails rather than skipping.
"""

import csv
import os
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from rnnopt.gradients import jacobian_chain
from rnnopt.harness import ExperimentConfig, evaluate, evaluate_model, gradcheck, train
from rnnopt.model import RNNParams, forward, rescale_spectral_radius
from rnnopt.optim import OptimizerState, apply_update, clip_by_norm, global_norm
from rnnopt.outputs import ClassFactorizedOutput, NadeOutput, nade_enumerate
from rnnopt.tasks import lag_memory_task, random_binary_sequences

ROOT = Path(__file__).resolve().parents[1]
JSB_DIR = Path(os.environ.get("RNNOPT_JSB_DIR", ROOT / "data" / "jsb"))
PTB_DIR = os.environ.get("RNNOPT_PTB_DIR")

# character gate settings, tuned on a proxy English corpus of the same size; a
# fixed threshold is used because initial gradients explode at the default
# init and a calibrated one would never bite
CHAR_SETTINGS = dict(lr=0.03, clip_threshold=10.0, init_std=0.05, epochs=20, patience=3)

pytestmark = pytest.mark.acceptance


def test_criterion_1_gradient_correctness(record):
    started = time.perf_counter()
    report = gradcheck(perturbation=1e-5, tolerance=1e-4)
    elapsed = time.perf_counter() - started
    worst = max(report.cases, key=lambda c: c.max_error)
    n = len(report.cases)
    ok = report.passed and n >= 24 and elapsed <= 120
    record(1, ok, f"{n} instances, max rel err {worst.max_error:.2e} ({worst.name}), "
                  f"{sum(c.n_excluded for c in report.cases)} kink coords excluded, {elapsed:.0f}s")


def _quadratic(rng, dim=20):
    q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
    a = q @ np.diag(rng.uniform(0.01, 1.0, dim)) @ q.T
    b = rng.normal(size=dim)
    return lambda th: a @ th - b


def test_criterion_2_momentum_equivalence(record):
    worst = 0.0
    for seed in range(10):
        for mu in (0.5, 0.9, 0.99):
            grad = _quadratic(np.random.default_rng(seed))
            nag = OptimizerState("nag", 0.1, mu)
            simple = OptimizerState("nesterov_simplified", 0.1, mu)
            theta = big_theta = np.random.default_rng(seed + 50).normal(size=20)
            for _ in range(100):
                theta = apply_update(nag, theta, grad)
                big_theta = apply_update(simple, big_theta, grad(big_theta))
                gap = np.abs(big_theta - (theta + nag.mu(nag.step_count) * nag.velocity)).max()
                worst = max(worst, float(gap))
    record(2, worst <= 1e-10, f"max |Theta - (theta + mu v)| = {worst:.2e} over 30 runs x 100 steps")


def test_criterion_3_clipping_contract(record):
    rng = np.random.default_rng(0)
    worst_cos, violations = 0.0, 0
    for i in range(1000):
        g = rng.normal(size=rng.integers(1, 50)) * 10.0 ** rng.uniform(-3, 3)
        n = global_norm(g)
        # every tenth case sits exactly on the boundary
        threshold = n if i % 10 == 0 else float(10.0 ** rng.uniform(-3, 3))
        out = clip_by_norm(g, threshold)
        m = global_norm(out)
        violations += m > threshold
        cos = float(np.dot(out, g) / (m * n))
        worst_cos = max(worst_cos, abs(cos - 1.0))
    ok = violations == 0 and worst_cos <= 1e-12
    record(3, ok, f"1000 gradients, {violations} norm violations, max |cos - 1| = {worst_cos:.1e}")


def test_criterion_4_normalisation(record):
    rng = np.random.default_rng(0)
    worst_cls = worst_nade = 0.0
    for seed in range(5):
        class_of = rng.permutation(np.arange(50) % 7)
        out = ClassFactorizedOutput.init(6, class_of, rng, std=1.0)
        h = rng.normal(size=6)
        H = np.repeat(h[None], 50, axis=0)
        total = np.exp(-out.step_nll(H, np.arange(50))).sum()
        worst_cls = max(worst_cls, abs(total - 1.0))

        nade = NadeOutput.init(6, 8, 5, rng, std=1.0)
        worst_nade = max(worst_nade, abs(nade_enumerate(nade, rng.normal(size=6)).sum() - 1.0))
    ok = worst_cls <= 1e-8 and worst_nade <= 1e-8
    record(4, ok, f"class softmax V=50 |sum - 1| = {worst_cls:.1e}, NADE 2^8 |sum - 1| = {worst_nade:.1e}")


def _lag_norms(radius, leak, n_h=50, n_x=5, T=60):
    rng = np.random.default_rng(0)
    w = rng.normal(0, 1 / np.sqrt(n_h), (n_h, n_h))
    w_in = rng.normal(0, 0.1, (n_h, n_x))
    params = RNNParams(rescale_spectral_radius(w, radius), w_in, np.zeros(n_h), np.full(n_h, leak))
    norms = []
    for k in range(20):
        x = np.random.default_rng(100 + k).normal(size=(T, n_x))
        norms.append(jacobian_chain(params, forward(params, x), T - 20, T).norms)
    m = np.mean(norms, axis=0)
    return m[0], m[19]


def test_criterion_5_vanishing_exploding(record):
    s1, s20 = _lag_norms(0.5, 0.0)
    e1, e20 = _lag_norms(2.0, 0.0)
    _, ls20 = _lag_norms(0.5, 0.9)
    _, le20 = _lag_norms(2.0, 0.9)
    # the leaky comparison is made where credit vanishes; at radius 2.0 the leak
    # damps the per-step gain and is reported only
    ok = s20 < 1e-3 * s1 and e20 > e1 and ls20 > s20
    record(5, ok, f"radius 0.5 lag20/lag1 = {s20 / s1:.1e}; radius 2.0 lag1 {e1:.2f} lag20 {e20:.1f}; "
                  f"leak 0.9 lag20 {ls20:.1e} vs {s20:.1e} at radius 0.5 "
                  f"(radius 2.0, not gated: {le20:.1f} vs {e20:.1f})")


def test_criterion_6_enhancement_ordering(record):
    started = time.perf_counter()
    base = ExperimentConfig(n_h=32, lr=0.3, epochs=500, patience=10**6, chunk_length=51)
    enhanced = base.with_updates(flags="CL", clip_threshold=1.0, leaky_fraction=0.5,
                                 leak_interval=(0.9, 0.99))
    wins, pairs = 0, []
    for seed in range(5):
        losses = []
        for cfg in (base, enhanced):
            task = lag_memory_task()
            report = train(cfg.with_updates(seed=seed), task)
            losses.append(-evaluate_model(report.final_model, task.splits["train"], task.kind).mean_ll)
        wins += losses[1] < losses[0]
        pairs.append(f"{losses[0]:.3f}/{losses[1]:.3f}")
    elapsed = time.perf_counter() - started
    ok = wins >= 3 and elapsed <= 600
    record(6, ok, f"SGD+CL beats SGD on {wins}/5 seeds (final loss SGD/CL: {', '.join(pairs)}), {elapsed:.0f}s")


def test_criterion_7_jsb(record):
    if not (JSB_DIR / "train.jsonl").exists():
        record(7, False, f"no piano-roll data in {JSB_DIR}")
    started = time.perf_counter()
    ds = {"kind": "music", **{s: str(JSB_DIR / f"{s}.jsonl") for s in ("train", "valid", "test")}}
    cfg = ExperimentConfig(flags="C", clip_factor=1.0, n_h=100, lr=0.001, epochs=50,
                           chunk_length=100, output="bernoulli", dataset=ds, seed=0)
    report = train(cfg)
    elapsed = time.perf_counter() - started
    ll = report.test.mean_ll
    ok = ll >= -9.5 and elapsed <= 45 * 60 and len(report.epochs) - 1 <= 50
    record(7, ok, f"test mean_ll {ll:.3f} per frame (gate -9.5), best epoch {report.best_epoch}, "
                  f"accuracy {report.test.frame_accuracy:.3f}, {elapsed:.0f}s")


def test_criterion_8_char_level(record):
    train_path = Path(PTB_DIR or "") / "ptb.train.txt"
    if not PTB_DIR or not train_path.exists():
        record(8, False, "Penn Treebank text not available (set RNNOPT_PTB_DIR to a directory "
                         "with ptb.train.txt and ptb.valid.txt)")
    started = time.perf_counter()
    ds = {"kind": "char", "train": str(train_path), "valid": str(Path(PTB_DIR) / "ptb.valid.txt"),
          "max_train_chars": 500_000, "max_eval_chars": 50_000}
    cfg = ExperimentConfig(flags="C", n_h=200, chunk_length=150, output="softmax", dataset=ds, seed=0,
                           **CHAR_SETTINGS)
    report = train(cfg)
    elapsed = time.perf_counter() - started
    bits = report.best_valid.bits_per_char
    ok = bits <= 2.5 and elapsed <= 60 * 60
    record(8, ok, f"held-out {bits:.3f} bits/char (gate 2.5), best epoch {report.best_epoch}, {elapsed:.0f}s")


def _metric_rows(path):
    with open(path, newline="") as f:
        return [{k: v for k, v in row.items() if k != "wall_clock_s"} for row in csv.DictReader(f)]


def test_criterion_9_determinism_and_round_trip(record, tmp_path):
    task = random_binary_sequences(n_seq=6, length=40, width=10, seed=3, chunk_length=15)
    task.splits["valid"] = random_binary_sequences(n_seq=3, length=40, width=10, seed=4,
                                                   chunk_length=15).splits["train"]
    cfg = ExperimentConfig(flags="C", clip_threshold=5.0, n_h=12, lr=0.05, epochs=6, chunk_length=15, seed=7)
    reports = [train(cfg.with_updates(run_dir=str(tmp_path / f"run{i}")), task) for i in range(2)]
    logs = [_metric_rows(tmp_path / f"run{i}" / "metrics.csv") for i in range(2)]
    identical = logs[0] == logs[1] and len(logs[0]) > 0

    best = reports[0]
    again = evaluate(best.best_checkpoint, task.splits["valid"], "binary")
    gap = abs(again.mean_ll - best.best_valid.mean_ll)
    acc_gap = abs(again.frame_accuracy - best.best_valid.frame_accuracy)
    ok = identical and gap <= 1e-12 and acc_gap <= 1e-12
    record(9, ok, f"{len(logs[0])} metric rows identical across runs: {identical} (wall_clock_s excluded); "
                  f"checkpoint re-evaluation gap {gap:.1e}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-s", *sys.argv[1:]]))
