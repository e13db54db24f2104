"""Small synthetic tasks for smoke tests, demos and the optimisation comparisons."""

import numpy as np

from .data import chunk, dataset_from_pairs
from .harness.training import TaskData


def lag_memory_task(lag=50, n_seq=16, n_noise=4, seed=1234):
    """Recall one bit after ``lag`` steps of distractors.

    Step 0 carries the bit on input 0 (as +1/-1) and a marker on input 1;
    steps 1..lag carry a binary distractor pattern shared by every sequence,
    so the bit is the only thing distinguishing them. Only the last step has
    a loss (weight 1), with the bit as its Bernoulli target.
    """
    rng = np.random.default_rng(seed)
    noise = rng.integers(0, 2, (lag, n_noise))
    pairs = []
    for i in range(n_seq):
        bit = i % 2
        x = np.zeros((lag + 1, 2 + n_noise))
        x[0, 0] = 1.0 if bit else -1.0
        x[0, 1] = 1.0
        x[1:, 2:] = noise
        y = np.zeros((lag + 1, 1), dtype=np.int8)
        y[-1, 0] = bit
        w = np.zeros(lag + 1)
        w[-1] = 1.0
        pairs.append((x, y, w))
    return TaskData("binary", {"train": dataset_from_pairs(pairs, lag + 1)}, 2 + n_noise, 1)


def random_binary_sequences(n_seq=8, length=20, width=8, density=0.3, seed=0, chunk_length=None):
    """Random binary frame sequences for next-frame memorisation."""
    rng = np.random.default_rng(seed)
    seqs = [(rng.random((length, width)) < density).astype(float) for _ in range(n_seq)]
    return TaskData("binary", {"train": chunk(seqs, chunk_length or length)}, width, width)
