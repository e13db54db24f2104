"""First-order update rules, gradient-norm clipping and clip-threshold calibration.

Parameters and gradients are either a single ndarray or a dict of ndarrays
with matching keys (``Gradients.as_tree()`` produces the latter). Updates are
indexed so that the ``t``-th call (``t = state.step_count + 1``) uses
``mu(t-1)`` and ``lr(t-1)``; the simplified Nesterov rule also needs
``mu(t)``.

Velocity starts at zero. Clipping, when configured, rescales the raw
gradient before it enters the velocity.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InputError, NumericalError
from .gradients import Gradients, bptt
from .model import forward

METHODS = ("sgd", "momentum", "nag", "nesterov_simplified")


def _as_tree(g):
    return g.as_tree() if isinstance(g, Gradients) else g


def tree_map(fn, *trees):
    first = trees[0]
    if isinstance(first, dict):
        return {k: fn(*(t[k] for t in trees)) for k in first}
    return fn(*trees)


def tree_leaves(tree):
    return list(tree.values()) if isinstance(tree, dict) else [tree]


def global_norm(g):
    """L2 norm over every entry of every parameter block jointly."""
    return float(np.sqrt(sum(np.sum(np.square(a)) for a in tree_leaves(_as_tree(g)))))


def clip_by_norm(g, threshold):
    """Rescale ``g`` to norm ``threshold`` if its norm exceeds it; direction is kept."""
    if not threshold > 0:
        raise InputError(f"clip threshold must be positive, got {threshold}")
    tree = _as_tree(g)
    if not all(np.all(np.isfinite(a)) for a in tree_leaves(tree)):
        raise NumericalError("cannot clip a non-finite gradient")
    norm = global_norm(tree)
    if norm <= threshold:
        return g
    factor = threshold / norm
    scaled = tree_map(lambda a: a * factor, tree)
    # rounding can leave the rescaled norm an ulp above the threshold
    while global_norm(scaled) > threshold:
        factor = np.nextafter(factor, 0.0)
        scaled = tree_map(lambda a: a * factor, tree)
    if isinstance(g, Gradients):
        return g.scaled(factor)
    return scaled


def constant(value):
    return lambda step: value


def linear_warmup(final, steps, start=0.5):
    """Momentum rising linearly from ``start`` to ``final`` over ``steps`` updates."""
    if steps <= 0:
        return constant(final)
    return lambda step: start + (final - start) * min(step, steps) / steps


class PlateauDecay:
    """Learning rate multiplied by ``factor`` after ``patience`` epochs without improvement.

    Call :meth:`observe` once per epoch with the validation log-likelihood.
    """

    def __init__(self, lr, factor=0.5, patience=None):
        self.lr = float(lr)
        self.factor = factor
        self.patience = patience
        self.best = -np.inf
        self.bad_epochs = 0

    def __call__(self, step):
        return self.lr

    def observe(self, value):
        if value > self.best:
            self.best = value
            self.bad_epochs = 0
            return
        self.bad_epochs += 1
        if self.patience is not None and self.bad_epochs >= self.patience:
            self.lr *= self.factor
            self.bad_epochs = 0


@dataclass
class OptimizerState:
    method: str = "sgd"
    lr: object = 0.01
    momentum: object = 0.0
    clip_threshold: float | None = None
    velocity: object = None
    step_count: int = 0
    clip_events: int = field(default=0, repr=False)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown optimizer method {self.method!r}")
        if not callable(self.lr):
            self.lr = constant(float(self.lr))
        if not callable(self.momentum):
            self.momentum = constant(float(self.momentum))
        if self.clip_threshold is not None and not self.clip_threshold > 0:
            raise ConfigError("clip threshold must be positive")

    def mu(self, step):
        value = float(self.momentum(step))
        if not 0.0 <= value <= 1.0:
            raise ConfigError(f"momentum {value} outside [0, 1] at step {step}")
        return value

    def eps(self, step):
        value = float(self.lr(step))
        if not value > 0:
            raise ConfigError(f"learning rate must be positive, got {value} at step {step}")
        return value

    def ensure_velocity(self, params):
        if self.velocity is None:
            self.velocity = tree_map(np.zeros_like, params)
        return self.velocity


def sgd_step(state, params, g):
    """theta <- theta - lr * g."""
    eps = state.eps(state.step_count)
    new = tree_map(lambda p, d: p - eps * d, params, _as_tree(g))
    state.step_count += 1
    return new


def momentum_step(state, params, g):
    """Classical momentum: v_t = mu v_{t-1} - lr g(theta_{t-1}); theta_t = theta_{t-1} + v_t."""
    t = state.step_count
    mu, eps = state.mu(t), state.eps(t)
    v = tree_map(lambda v, d: mu * v - eps * d, state.ensure_velocity(params), _as_tree(g))
    new = tree_map(lambda p, dv: p + dv, params, v)
    state.velocity = v
    state.step_count += 1
    return new, v


def peek_point(state, params):
    """theta + mu * v, where NAG evaluates its gradient."""
    mu = state.mu(state.step_count)
    return tree_map(lambda p, v: p + mu * v, params, state.ensure_velocity(params))


def nag_step(state, params, grad_fn):
    """Nesterov accelerated gradient in the velocity form.

    ``grad_fn(point)`` must return the gradient at ``point``; it is called
    once, at ``theta_{t-1} + mu_{t-1} v_{t-1}``.
    """
    t = state.step_count
    mu, eps = state.mu(t), state.eps(t)
    g = _as_tree(grad_fn(peek_point(state, params)))
    v = tree_map(lambda v, d: mu * v - eps * d, state.velocity, g)
    new = tree_map(lambda p, dv: p + dv, params, v)
    state.velocity = v
    state.step_count += 1
    return new, v


def nesterov_coefficients(mu_prev, mu_next, eps):
    """(velocity coefficient, gradient coefficient) of the simplified Nesterov update."""
    return mu_next * mu_prev, (1.0 + mu_next) * eps


def nesterov_simplified_step(state, params, g):
    """Nesterov momentum on the peeked-ahead parameters.

    With ``Theta = theta + mu v`` the update needs the gradient only at the
    stored parameters:

        v_t     = mu_{t-1} v_{t-1} - lr_{t-1} g(Theta_{t-1})
        Theta_t = Theta_{t-1} + mu_t mu_{t-1} v_{t-1} - (1 + mu_t) lr_{t-1} g(Theta_{t-1})
    """
    t = state.step_count
    mu_prev, mu_next, eps = state.mu(t), state.mu(t + 1), state.eps(t)
    c_vel, c_grad = nesterov_coefficients(mu_prev, mu_next, eps)
    v_prev = state.ensure_velocity(params)
    g = _as_tree(g)
    new = tree_map(lambda p, v, d: p + c_vel * v - c_grad * d, params, v_prev, g)
    state.velocity = tree_map(lambda v, d: mu_prev * v - eps * d, v_prev, g)
    state.step_count += 1
    return new, state.velocity


def apply_update(state, params, gradient):
    """Clip (if configured) and apply one update of ``state.method``.

    ``gradient`` is a gradient at ``params`` or, for ``nag``, a callable
    returning the gradient at a given point.
    """

    def clipped(g):
        if state.clip_threshold is None:
            return g
        if global_norm(g) > state.clip_threshold:
            state.clip_events += 1
        return clip_by_norm(g, state.clip_threshold)

    if state.method == "nag":
        if not callable(gradient):
            raise InputError("nag needs a gradient function of the evaluation point")
        return nag_step(state, params, lambda point: clipped(gradient(point)))[0]
    g = clipped(gradient(params) if callable(gradient) else gradient)
    if state.method == "sgd":
        return sgd_step(state, params, g)
    if state.method == "momentum":
        return momentum_step(state, params, g)[0]
    return nesterov_simplified_step(state, params, g)[0]


def chunk_gradient_norms(dataset, params, out_model, lambda_l1=0.0):
    """Gradient norm of every chunk, carrying hidden state along ``carry_from`` links."""
    finals = {}
    norms = []
    for i, chunk in enumerate(dataset.chunks):
        h0 = finals.get(chunk.carry_from) if chunk.carry_from is not None else None
        traj = forward(params, chunk.inputs, h0)
        finals[i] = traj.states[-1]
        g = bptt(params, out_model, traj, chunk.targets, lambda_l1, chunk.weights)
        norms.append(g.norm())
    return np.asarray(norms)


def calibrate_clip_threshold(dataset, params, out_model, lambda_l1=0.0, factor=1.0):
    """Mean per-chunk gradient norm over one pass on ``dataset``, times ``factor``."""
    if not len(dataset.chunks):
        raise InputError("cannot calibrate a clip threshold on an empty dataset")
    return float(factor * np.mean(chunk_gradient_norms(dataset, params, out_model, lambda_l1)))
