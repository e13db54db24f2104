"""Clipping and leaky units on a task that needs 50 steps of memory.

One bit is shown at step 0. Fifty steps of distractors follow, identical
for every sequence, and the bit must be reported at the end. With ordinary
units the gradient from the last step has all but vanished by step 0, so
plain SGD sits at chance whether or not it is clipped. Leaky units with
self-weights near 1 carry the bit across the gap. Once the network starts
using it the gradient grows, and clipping keeps the large learning rate
from overshooting.

    python notebooks/03_clipping_on_a_lag_task.py     (about ten seconds)
"""

import numpy as np

from rnnopt.harness import ExperimentConfig, evaluate_model, train
from rnnopt.tasks import lag_memory_task

base = ExperimentConfig(n_h=32, lr=0.3, epochs=300, patience=10**6, chunk_length=51)
variants = {
    "SGD": base,
    "SGD+C": base.with_updates(flags="C", clip_threshold=1.0),
    "SGD+L": base.with_updates(flags="L", leaky_fraction=0.5, leak_interval=(0.9, 0.99)),
    "SGD+CL": base.with_updates(flags="CL", clip_threshold=1.0, leaky_fraction=0.5,
                                leak_interval=(0.9, 0.99)),
}

for name, cfg in variants.items():
    task = lag_memory_task()
    report = train(cfg.with_updates(seed=0), task)
    final = evaluate_model(report.final_model, task.splits["train"], task.kind)
    norms = [e.grad_norm_max for e in report.epochs[1:]]
    clipped = sum(e.clip_events for e in report.epochs)
    print(f"{name:7s} final loss {-final.mean_ll:.4f} nats  max grad norm {np.nanmax(norms):9.2f}  "
          f"clipped updates {clipped}")

# Chance level is ln 2 = 0.693 nats. A model that remembers the bit drives
# the loss toward zero. Leaky units alone reach the bit but then take a
# gradient spike (see the max norm) that throws them back above chance; with
# clipping the same spike is capped. Other seeds vary: within 300 epochs some
# runs of SGD+CL are still at chance, and the acceptance suite uses 500.
