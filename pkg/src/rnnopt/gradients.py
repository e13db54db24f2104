"""Backpropagation through time, finite-difference oracle and Jacobian-chain norms.

The objective differentiated here, for one chunk of length T, is

    sum_t w_t * nll_t(h_t, y_t) + lambda_l1 * sum_{t=1..T} sum_i |h_{t,i}|

with ``h_0`` treated as a constant (truncated BPTT: carried state is an
input to the chunk, never a path for gradients). Leak coefficients are fixed
and receive no gradient.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, NumericalError
from .model import activate_deriv, as_inputs, forward

EXACT_NORM_MAX_DIM = 64
POWER_ITERATIONS = 30
POWER_TOL = 1e-8
# Central differences with step 1e-5 on O(1) per-step losses resolve a
# derivative only to about 1e-11 absolute (float64 ulp / 2h). Entries much
# below 1e-6 therefore cannot be checked to 1e-4 relative; the relative error
# is measured against this floor instead of their own magnitude.
REL_ERR_FLOOR = 1e-6


@dataclass(eq=False)
class Gradients:
    """Parameter-shaped gradient of one chunk's objective.

    ``rnn`` is keyed like ``RNNParams.TRAINABLE`` and ``out`` like the output
    model's ``PARAMS``. ``grad_h0`` is the gradient w.r.t. the initial state,
    kept for diagnostics; it is never applied as an update.
    """

    rnn: dict
    out: dict
    total_loss: float = 0.0
    l1_penalty_value: float = 0.0
    grad_h0: np.ndarray | None = field(default=None, repr=False)

    def items(self):
        for name, arr in self.rnn.items():
            yield f"rnn.{name}", arr
        for name, arr in self.out.items():
            yield f"out.{name}", arr

    def as_tree(self):
        return dict(self.items())

    @classmethod
    def from_tree(cls, tree, total_loss=0.0, l1_penalty_value=0.0):
        rnn = {k[4:]: v for k, v in tree.items() if k.startswith("rnn.")}
        out = {k[4:]: v for k, v in tree.items() if k.startswith("out.")}
        return cls(rnn, out, total_loss, l1_penalty_value)

    def norm(self):
        with np.errstate(over="ignore"):
            return float(np.sqrt(sum(np.sum(a * a) for _, a in self.items())))

    def scaled(self, factor):
        return Gradients(
            {k: v * factor for k, v in self.rnn.items()},
            {k: v * factor for k, v in self.out.items()},
            self.total_loss,
            self.l1_penalty_value,
            self.grad_h0,
        )

    def flat(self):
        return np.concatenate([a.ravel() for _, a in self.items()])

    def is_finite(self):
        return all(np.all(np.isfinite(a)) for _, a in self.items())


def _l1(states, lambda_l1):
    return lambda_l1 * float(np.sum(np.abs(states[1:]))) if lambda_l1 else 0.0


def objective(params, out_model, inputs, targets, lambda_l1=0.0, h0=None, weights=None):
    """Loss of one chunk and the trajectory that produced it."""
    per_step, traj = step_objective(params, out_model, inputs, targets, lambda_l1, h0, weights)
    return float(np.sum(per_step)), traj


def step_objective(params, out_model, inputs, targets, lambda_l1=0.0, h0=None, weights=None):
    """Per-step terms of ``objective`` (weighted nll plus the L1 term of that step)."""
    traj = forward(params, inputs, h0)
    per_step = _step_weights(weights, len(traj)) * out_model.step_nll(traj.states[1:], targets)
    if lambda_l1:
        per_step = per_step + lambda_l1 * np.sum(np.abs(traj.states[1:]), axis=1)
    return per_step, traj


def _step_weights(weights, n_steps):
    return np.ones(n_steps) if weights is None else np.asarray(weights, dtype=float)


def bptt(params, out_model, traj, targets, lambda_l1=0.0, weights=None):
    """Exact gradient of the chunk objective over the recorded trajectory."""
    n_steps = len(traj)
    if n_steps < 1:
        raise InputError("bptt needs a trajectory of at least one step")
    if lambda_l1 < 0:
        raise InputError("lambda_l1 must be non-negative")
    if len(np.atleast_1d(targets) if not out_model.binary else np.atleast_2d(targets)) != n_steps:
        raise InputError("targets and trajectory lengths differ")

    H = traj.states[1:]
    nll, dH, out_grads = out_model.seq_loss(H, targets, weights)
    if lambda_l1:
        dH = dH + lambda_l1 * np.sign(H)
    penalty = _l1(traj.states, lambda_l1)

    leak, keep = params.leak, 1.0 - params.leak
    act = params.activation
    dpre_all = np.empty_like(traj.preacts)
    carry = np.zeros(params.n_h)
    for t in range(n_steps - 1, -1, -1):
        dh = dH[t] + carry
        pre = traj.preacts[t]
        dpre = dh * keep * activate_deriv(act, pre)
        dpre_all[t] = dpre
        carry = leak * dh + params.w_rec.T @ dpre
    if not np.all(np.isfinite(dpre_all)):
        bad = int(np.argmax(~np.all(np.isfinite(dpre_all), axis=1))) + 1
        raise NumericalError("non-finite gradient", timestep=bad)

    x = traj.inputs
    if x.ndim == 1:
        g_in = np.zeros_like(params.w_in)
        np.add.at(g_in.T, x, dpre_all)
    else:
        g_in = dpre_all.T @ x
    rnn = {
        "w_rec": dpre_all.T @ traj.states[:-1],
        "w_in": g_in,
        "b_h": dpre_all.sum(axis=0),
    }
    grads = Gradients(rnn, out_grads, nll, penalty, grad_h0=carry)
    if not grads.is_finite():
        raise NumericalError("non-finite gradient")
    return grads


def _pattern(traj, params, lambda_l1):
    """Branch signature of the non-smooth pieces (rectifier kink, |h| at 0)."""
    parts = []
    if params.activation == "rectifier":
        parts.append(traj.preacts > 0)
    if lambda_l1:
        parts.append(np.sign(traj.states[1:]))
    return [p.copy() for p in parts]


def _same(a, b):
    return all(np.array_equal(x, y) for x, y in zip(a, b))


def finite_diff_grad(params, out_model, inputs, targets, lambda_l1=0.0, h0=None,
                     perturbation=1e-5, weights=None, return_mask=False):
    """Central-difference estimate of what ``bptt`` computes.

    With ``return_mask=True`` also returns a tree of booleans marking
    coordinates whose +/- perturbation crossed a rectifier kink or a zero of
    ``|h|``; their estimates are not derivatives and should be excluded from
    comparisons.
    """
    if perturbation <= 0:
        raise InputError("perturbation must be positive")
    inputs = as_inputs(inputs, params.n_x)
    base_loss, base_traj = objective(params, out_model, inputs, targets, lambda_l1, h0, weights)
    base_pattern = _pattern(base_traj, params, lambda_l1)

    def probe(make, arr):
        grad = np.zeros_like(arr)
        kink = np.zeros(arr.shape, dtype=bool)
        for idx in np.ndindex(arr.shape):
            vals = []
            for sign in (1.0, -1.0):
                bumped = arr.copy()
                bumped[idx] += sign * perturbation
                p, o = make(bumped)
                per_step, traj = step_objective(p, o, inputs, targets, lambda_l1, h0, weights)
                vals.append(per_step)
                if base_pattern and not _same(_pattern(traj, p, lambda_l1), base_pattern):
                    kink[idx] = True
            # difference step by step before summing: steps the bump does not
            # reach cancel exactly instead of adding rounding noise of the total
            grad[idx] = np.sum(vals[0] - vals[1]) / (2.0 * perturbation)
        return grad, kink

    rnn, out, mask = {}, {}, {}
    for name, arr in params.arrays().items():
        rnn[name], mask[f"rnn.{name}"] = probe(
            lambda a, name=name: (params.with_arrays(**{name: a}), out_model), arr)
    for name, arr in out_model.arrays().items():
        out[name], mask[f"out.{name}"] = probe(
            lambda a, name=name: (params, out_model.with_arrays(**{name: a})), arr)

    grads = Gradients(rnn, out, base_loss - _l1(base_traj.states, lambda_l1),
                      _l1(base_traj.states, lambda_l1))
    return (grads, mask) if return_mask else grads


def relative_errors(analytic, numeric, floor=REL_ERR_FLOOR):
    """Elementwise |a - n| / max(|a|, |n|, floor)."""
    a, n = np.asarray(analytic), np.asarray(numeric)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


@dataclass(frozen=True, eq=False)
class JacobianChainReport:
    """Operator norms of dh_{t2}/dh_{t2-k} for ``lags`` k = 1, 2, ...."""

    t1: int
    t2: int
    lags: np.ndarray
    norms: np.ndarray
    leading_eigenvalue: float


def step_jacobian(params, traj, tau):
    """dh_tau / dh_{tau-1} = diag(leak) + diag((1 - leak) * act'(preact_tau)) @ w_rec."""
    if not 1 <= tau <= len(traj):
        raise InputError(f"tau must lie in [1, {len(traj)}], got {tau}")
    pre = traj.preacts[tau - 1]
    gain = (1.0 - params.leak) * activate_deriv(params.activation, pre)
    return np.diag(params.leak) + gain[:, None] * params.w_rec


def spectral_norm(m, rng=None):
    if max(m.shape) <= EXACT_NORM_MAX_DIM:
        return float(np.linalg.norm(m, 2))
    rng = rng or np.random.default_rng(0)
    v = rng.normal(size=m.shape[1])
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(POWER_ITERATIONS):
        w = m.T @ (m @ v)
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        v = w / nw
        new_sigma = float(np.sqrt(nw))
        if abs(new_sigma - sigma) <= POWER_TOL * max(new_sigma, 1.0):
            sigma = new_sigma
            break
        sigma = new_sigma
    return sigma


def jacobian_chain(params, traj, t1, t2):
    """Norms of the Jacobian products linking ``h_{t2}`` back to ``h_{t1}``.

    ``norms[k-1]`` is the largest singular value of dh_{t2}/dh_{t2-k} for
    ``k = 1..t2-t1``. ``leading_eigenvalue`` is the largest eigenvalue modulus
    of the per-step Jacobian averaged over the span.
    """
    n_steps = len(traj)
    if not (0 <= t1 < t2 <= n_steps):
        raise InputError(f"need 0 <= t1 < t2 <= {n_steps}, got t1={t1}, t2={t2}")
    prod = np.eye(params.n_h)
    mean_jac = np.zeros((params.n_h, params.n_h))
    norms = np.empty(t2 - t1)
    for k, tau in enumerate(range(t2, t1, -1)):
        jac = step_jacobian(params, traj, tau)
        mean_jac += jac
        prod = prod @ jac
        norms[k] = spectral_norm(prod)
    mean_jac /= t2 - t1
    lead = float(np.max(np.abs(np.linalg.eigvals(mean_jac))))
    return JacobianChainReport(t1, t2, np.arange(1, t2 - t1 + 1), norms, lead)
