"""Nesterov momentum without the look-ahead gradient.

Classical NAG evaluates the gradient at ``theta + mu * v``. Tracking the
shifted variable ``Theta = theta + mu * v`` instead gives an update that
only needs the gradient at the current point. This script runs both on a
quadratic and prints the gap, which stays at rounding level.

    python notebooks/02_momentum_equivalence.py
"""

import numpy as np

from rnnopt.optim import OptimizerState, apply_update, linear_warmup, nesterov_coefficients

rng = np.random.default_rng(1)
q, _ = np.linalg.qr(rng.normal(size=(20, 20)))
a = q @ np.diag(np.geomspace(0.01, 1.0, 20)) @ q.T
b = rng.normal(size=20)
optimum = np.linalg.solve(a, b)


def grad(th):
    return a @ th - b


schedule = linear_warmup(0.99, 50, start=0.5)
nag = OptimizerState("nag", 0.5, schedule)
simple = OptimizerState("nesterov_simplified", 0.5, schedule)
plain = OptimizerState("sgd", 0.5)
theta = big_theta = sgd_theta = np.zeros(20)

print(f"{'step':>5} {'|NAG - opt|':>12} {'|SGD - opt|':>12} {'gap':>10}")
for t in range(1, 301):
    theta = apply_update(nag, theta, grad)
    big_theta = apply_update(simple, big_theta, grad(big_theta))
    sgd_theta = apply_update(plain, sgd_theta, grad(sgd_theta))
    if t in (1, 10, 50, 100, 200, 300):
        gap = np.abs(big_theta - (theta + schedule(t) * nag.velocity)).max()
        print(f"{t:5d} {np.linalg.norm(theta - optimum):12.3e} "
              f"{np.linalg.norm(sgd_theta - optimum):12.3e} {gap:10.1e}")

# The simplified step uses two coefficients per update.
a_t, b_t = nesterov_coefficients(0.9, 0.95, 0.5)
print(f"\nwith mu_(t-1)=0.9, mu_t=0.95, lr=0.5: velocity term {a_t:.3f}, gradient term {b_t:.3f}")
