"""A small polyphonic music model on Bach chorales.

Needs ``data/jsb`` (see ``make_chorales.py``). Trains a 100-unit network
with clipping calibrated from the gradient norms at initialisation, then
compares per-frame log-likelihood with two baselines: independent notes at
their training frequencies, and an untrained network.

    python notebooks/04_chorales.py [epochs]     (about 20 s for 50 epochs)
"""

import sys

import numpy as np

from rnnopt.harness import ExperimentConfig, build_model, evaluate_model, load_task_data, train

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 50
ds = {"kind": "music", "train": "data/jsb/train.jsonl", "valid": "data/jsb/valid.jsonl",
      "test": "data/jsb/test.jsonl"}
cfg = ExperimentConfig(flags="C", clip_factor=1.0, n_h=100, lr=0.001, epochs=epochs,
                       chunk_length=100, dataset=ds)
task = load_task_data(cfg)

untrained = evaluate_model(build_model(cfg, task), task.splits["test"], task.kind)
marginal = evaluate_model(build_model(cfg.with_updates(output_bias_init="marginal", init_std=0.0), task),
                          task.splits["test"], task.kind)
report = train(cfg, task)

print(f"clip threshold (calibrated): {report.clip_threshold:.2f}")
for e in report.epochs[:: max(1, len(report.epochs) // 10)]:
    valid = e.valid.mean_ll if e.valid else float("nan")
    print(f"epoch {e.epoch:3d}  valid ll {valid:8.3f}  grad norm {e.grad_norm_mean:8.2f}  clipped {e.clip_events}")
print(f"\n{'model':28s} {'test ll':>8} {'accuracy':>9}")
for name, m in (("untrained", untrained), ("note frequencies only", marginal), ("trained", report.test)):
    acc = np.nan if m.frame_accuracy is None else m.frame_accuracy
    print(f"{name:28s} {m.mean_ll:8.3f} {acc:9.3f}")
