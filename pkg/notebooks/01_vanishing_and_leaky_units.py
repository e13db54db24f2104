"""How far back does credit reach?

The derivative of a late hidden state with respect to an early one is a
product of per-step Jacobians. Its norm decays geometrically when the
recurrent weights are small and grows when they are large. Leaky units add
``diag(leak)`` to every factor, which keeps the product from collapsing.

    python notebooks/01_vanishing_and_leaky_units.py
"""

import numpy as np

from rnnopt.gradients import jacobian_chain
from rnnopt.model import RNNParams, forward, rescale_spectral_radius

n_h, n_x, T = 50, 5, 60
rng = np.random.default_rng(0)
w = rng.normal(0, 1 / np.sqrt(n_h), (n_h, n_h))
w_in = rng.normal(0, 0.1, (n_h, n_x))
x = rng.normal(size=(T, n_x))


def lag_profile(radius, leak):
    params = RNNParams(rescale_spectral_radius(w, radius), w_in, np.zeros(n_h), np.full(n_h, leak))
    report = jacobian_chain(params, forward(params, x), T - 30, T)
    return report.norms, report.leading_eigenvalue


print("norm of dh_T / dh_{T-k}")
print(f"{'radius':>6} {'leak':>5} {'eig':>6}" + "".join(f"{'k=' + str(k):>10}" for k in (1, 5, 10, 20, 30)))
for radius in (0.5, 1.0, 2.0):
    for leak in (0.0, 0.9):
        norms, eig = lag_profile(radius, leak)
        cells = "".join(f"{norms[k - 1]:10.2e}" for k in (1, 5, 10, 20, 30))
        print(f"{radius:6.1f} {leak:5.1f} {eig:6.2f}{cells}")

# With leak 0 and radius 0.5 the norm drops about a factor of two per step.
# With leak 0.9 every factor is close to 0.9 I, so twenty steps lose far less.
# At radius 2.0 tanh saturation bounds the growth, and leaking slows it further.
