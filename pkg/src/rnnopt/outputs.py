"""Output probability models on top of the hidden state.

Every model exposes the same sequence-level interface::

    nll, grad_H, grads = model.seq_loss(H, targets, weights=None)

where ``H`` is ``[T, n_h]``, ``nll`` the (weighted) summed negative
log-likelihood in nats, ``grad_H`` its gradient w.r.t. ``H`` and ``grads`` a
dict keyed like ``model.PARAMS``. The single-step functions
(``bernoulli_loss`` and friends) wrap this with ``T = 1``.

Binary targets (Bernoulli, NADE) are ``[T, d]`` arrays of 0/1; categorical
targets (softmax, class-factorized softmax) are ``[T]`` integer ids.
"""

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import log_softmax

from .errors import ConfigError, InputError
from .model import sigmoid

NADE_ENUM_MAX = 12


@dataclass(frozen=True, eq=False)
class LossResult:
    nll: float
    grad_h: np.ndarray
    grad_out_params: dict


def _softplus(z):
    return np.logaddexp(0.0, z)


def _weights(weights, n_steps):
    if weights is None:
        return np.ones(n_steps)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (n_steps,):
        raise InputError(f"weights must have shape ({n_steps},), got {weights.shape}")
    return weights


def _binary_targets(targets, d):
    y = np.asarray(targets, dtype=float)
    if y.ndim == 1:
        y = y[None, :]
    if y.ndim != 2 or y.shape[1] != d:
        raise InputError(f"binary targets must be [T, {d}], got {np.shape(targets)}")
    if np.any((y != 0) & (y != 1)):
        raise InputError("binary targets must contain only 0 and 1")
    return y


class _OutputModel:
    PARAMS = ()

    def arrays(self):
        return {name: getattr(self, name) for name in self.PARAMS}

    def with_arrays(self, **arrays):
        return replace(self, **arrays)

    @property
    def binary(self):
        return False

    def step_loss(self, h, target):
        h = np.asarray(h, dtype=float)
        tgt = np.asarray(target)[None] if self.binary else np.array([target])
        nll, grad_h, grads = self.seq_loss(h[None, :], tgt)
        return LossResult(float(nll), grad_h[0], grads)


@dataclass(frozen=True, eq=False)
class BernoulliOutput(_OutputModel):
    """Independent logistic units, one per output dimension (88 pitches for music)."""

    w_out: np.ndarray
    b_out: np.ndarray

    PARAMS = ("w_out", "b_out")

    @classmethod
    def init(cls, n_h, d, rng, std=0.1):
        return cls(rng.normal(0.0, std, size=(d, n_h)), np.zeros(d))

    @property
    def binary(self):
        return True

    @property
    def dim(self):
        return self.w_out.shape[0]

    def probs(self, H):
        return sigmoid(np.atleast_2d(H) @ self.w_out.T + self.b_out)

    def seq_loss(self, H, targets, weights=None):
        H = np.atleast_2d(np.asarray(H, dtype=float))
        Y = _binary_targets(targets, self.dim)
        w = _weights(weights, H.shape[0])
        Z = H @ self.w_out.T + self.b_out
        nll = float(np.sum(w[:, None] * (_softplus(Z) - Y * Z)))
        dZ = (sigmoid(Z) - Y) * w[:, None]
        grads = {"w_out": dZ.T @ H, "b_out": dZ.sum(axis=0)}
        return nll, dZ @ self.w_out, grads

    def step_nll(self, H, targets):
        """Per-step nll vector, no gradients."""
        Z = np.atleast_2d(H) @ self.w_out.T + self.b_out
        return np.sum(_softplus(Z) - _binary_targets(targets, self.dim) * Z, axis=1)

    def predict(self, H):
        return (self.probs(H) > 0.5).astype(np.int8)


@dataclass(frozen=True, eq=False)
class SoftmaxOutput(_OutputModel):
    w_out: np.ndarray
    b_out: np.ndarray

    PARAMS = ("w_out", "b_out")

    def __post_init__(self):
        if self.w_out.shape[0] < 2:
            raise ConfigError("softmax output needs at least 2 classes")

    @classmethod
    def init(cls, n_h, vocab_size, rng, std=0.1):
        return cls(rng.normal(0.0, std, size=(vocab_size, n_h)), np.zeros(vocab_size))

    @property
    def vocab_size(self):
        return self.w_out.shape[0]

    def _check(self, targets):
        y = np.atleast_1d(np.asarray(targets))
        if not np.issubdtype(y.dtype, np.integer):
            raise InputError("softmax targets must be integer ids")
        if y.size and (y.min() < 0 or y.max() >= self.vocab_size):
            raise InputError(f"target id out of range [0, {self.vocab_size})")
        return y

    def log_probs(self, H):
        return log_softmax(np.atleast_2d(H) @ self.w_out.T + self.b_out, axis=1)

    def seq_loss(self, H, targets, weights=None):
        H = np.atleast_2d(np.asarray(H, dtype=float))
        y = self._check(targets)
        w = _weights(weights, H.shape[0])
        Z = H @ self.w_out.T + self.b_out
        logp = log_softmax(Z, axis=1)
        rows = np.arange(len(y))
        nll = float(-np.sum(w * logp[rows, y]))
        dZ = np.exp(logp)
        dZ[rows, y] -= 1.0
        dZ *= w[:, None]
        grads = {"w_out": dZ.T @ H, "b_out": dZ.sum(axis=0)}
        return nll, dZ @ self.w_out, grads

    def step_nll(self, H, targets):
        y = self._check(targets)
        return -self.log_probs(H)[np.arange(len(y)), y]


@dataclass(frozen=True, eq=False)
class ClassFactorizedOutput(_OutputModel):
    """p(w | h) = p(class(w) | h) * p(w | class(w), h).

    ``class_of[w]`` gives the class of word ``w``. The within-class
    distribution is a softmax restricted to the class members, so a step only
    touches the K class rows and the member rows of the target's class.
    """

    class_weights: np.ndarray
    class_bias: np.ndarray
    word_weights: np.ndarray
    word_bias: np.ndarray
    class_of: np.ndarray

    PARAMS = ("class_weights", "class_bias", "word_weights", "word_bias")

    def __post_init__(self):
        class_of = np.asarray(self.class_of, dtype=np.int64)
        n_classes = self.class_weights.shape[0]
        if class_of.shape != (self.word_weights.shape[0],):
            raise ConfigError("class_of must assign a class to every word")
        if class_of.size and (class_of.min() < 0 or class_of.max() >= n_classes):
            raise ConfigError("class id out of range")
        members = [np.flatnonzero(class_of == k) for k in range(n_classes)]
        if any(len(m) == 0 for m in members):
            raise ConfigError("every class needs at least one member word")
        position = np.empty(len(class_of), dtype=np.int64)
        for m in members:
            position[m] = np.arange(len(m))
        object.__setattr__(self, "class_of", class_of)
        object.__setattr__(self, "_members", members)
        object.__setattr__(self, "_position", position)

    @classmethod
    def init(cls, n_h, class_of, rng, std=0.1):
        class_of = np.asarray(class_of, dtype=np.int64)
        n_classes = int(class_of.max()) + 1
        vocab_size = len(class_of)
        return cls(
            rng.normal(0.0, std, size=(n_classes, n_h)),
            np.zeros(n_classes),
            rng.normal(0.0, std, size=(vocab_size, n_h)),
            np.zeros(vocab_size),
            class_of,
        )

    @property
    def n_classes(self):
        return self.class_weights.shape[0]

    @property
    def vocab_size(self):
        return self.word_weights.shape[0]

    def members(self, k):
        return self._members[k]

    def _check(self, targets):
        y = np.atleast_1d(np.asarray(targets))
        if not np.issubdtype(y.dtype, np.integer):
            raise InputError("targets must be integer ids")
        if y.size and (y.min() < 0 or y.max() >= self.vocab_size):
            raise ConfigError(f"word id outside the class partition [0, {self.vocab_size})")
        return y

    def _forward(self, H, y):
        class_logp = log_softmax(H @ self.class_weights.T + self.class_bias, axis=1)
        cls_ids = self.class_of[y]
        rows = np.arange(len(y))
        word_logp = np.empty(len(y))
        word_dist = {}
        for k in np.unique(cls_ids):
            steps = np.flatnonzero(cls_ids == k)
            mem = self._members[k]
            logits = H[steps] @ self.word_weights[mem].T + self.word_bias[mem]
            lp = log_softmax(logits, axis=1)
            word_logp[steps] = lp[np.arange(len(steps)), self._position[y[steps]]]
            word_dist[k] = (steps, mem, lp)
        return class_logp[rows, cls_ids], class_logp, word_logp, word_dist

    def seq_loss(self, H, targets, weights=None):
        H = np.atleast_2d(np.asarray(H, dtype=float))
        y = self._check(targets)
        w = _weights(weights, H.shape[0])
        cls_lp, class_logp, word_lp, word_dist = self._forward(H, y)
        nll = float(-np.sum(w * (cls_lp + word_lp)))

        rows = np.arange(len(y))
        dZc = np.exp(class_logp)
        dZc[rows, self.class_of[y]] -= 1.0
        dZc *= w[:, None]
        grad_H = dZc @ self.class_weights
        g_ww = np.zeros_like(self.word_weights)
        g_wb = np.zeros_like(self.word_bias)
        for steps, mem, lp in word_dist.values():
            dZ = np.exp(lp)
            dZ[np.arange(len(steps)), self._position[y[steps]]] -= 1.0
            dZ *= w[steps, None]
            grad_H[steps] += dZ @ self.word_weights[mem]
            g_ww[mem] += dZ.T @ H[steps]
            g_wb[mem] += dZ.sum(axis=0)
        grads = {
            "class_weights": dZc.T @ H,
            "class_bias": dZc.sum(axis=0),
            "word_weights": g_ww,
            "word_bias": g_wb,
        }
        return nll, grad_H, grads

    def step_nll(self, H, targets):
        H = np.atleast_2d(np.asarray(H, dtype=float))
        y = self._check(targets)
        cls_lp, _, word_lp, _ = self._forward(H, y)
        return -(cls_lp + word_lp)


@dataclass(frozen=True, eq=False)
class NadeOutput(_OutputModel):
    """NADE over ``d`` binary outputs whose biases are set by the RNN state.

    For visible order ``i = 0..d-1`` and hidden state ``h``::

        b = base_b_visible + cond_b @ h
        a_0 = base_c_hidden + cond_c @ h
        p_i = sigmoid(nade_v[i] @ sigmoid(a_i) + b[i])
        a_{i+1} = a_i + nade_w[:, i] * v_i
    """

    nade_w: np.ndarray
    nade_v: np.ndarray
    base_b_visible: np.ndarray
    base_c_hidden: np.ndarray
    cond_b: np.ndarray
    cond_c: np.ndarray

    PARAMS = ("nade_w", "nade_v", "base_b_visible", "base_c_hidden", "cond_b", "cond_c")

    @classmethod
    def init(cls, n_h, d, n_nade, rng, std=0.1):
        return cls(
            rng.normal(0.0, std, size=(n_nade, d)),
            rng.normal(0.0, std, size=(d, n_nade)),
            np.zeros(d),
            np.zeros(n_nade),
            rng.normal(0.0, std, size=(d, n_h)),
            rng.normal(0.0, std, size=(n_nade, n_h)),
        )

    @property
    def binary(self):
        return True

    @property
    def dim(self):
        return self.nade_w.shape[1]

    def _biases(self, H):
        return self.base_b_visible + H @ self.cond_b.T, self.base_c_hidden + H @ self.cond_c.T

    def _conditionals(self, H, Y):
        """Logits of p(v_i = 1 | v_<i, h) and the NADE hidden activations per step."""
        B, A = self._biases(H)
        n_steps, d = Y.shape
        logits = np.empty((n_steps, d))
        hids = np.empty((d, n_steps, A.shape[1]))
        A = A.copy()
        for i in range(d):
            hid = sigmoid(A)
            hids[i] = hid
            logits[:, i] = hid @ self.nade_v[i] + B[:, i]
            A += np.outer(Y[:, i], self.nade_w[:, i])
        return logits, hids

    def seq_loss(self, H, targets, weights=None):
        H = np.atleast_2d(np.asarray(H, dtype=float))
        Y = _binary_targets(targets, self.dim)
        w = _weights(weights, H.shape[0])
        logits, hids = self._conditionals(H, Y)
        nll = float(np.sum(w[:, None] * (_softplus(logits) - Y * logits)))

        dlogit = (sigmoid(logits) - Y) * w[:, None]
        d = self.dim
        g_v = np.empty_like(self.nade_v)
        g_w = np.zeros_like(self.nade_w)
        dA_later = np.zeros((H.shape[0], self.nade_w.shape[0]))
        for i in range(d - 1, -1, -1):
            hid = hids[i]
            g_v[i] = dlogit[:, i] @ hid
            g_w[:, i] = Y[:, i] @ dA_later
            dA_later += np.outer(dlogit[:, i], self.nade_v[i]) * hid * (1.0 - hid)
        dB, dC = dlogit, dA_later
        grads = {
            "nade_w": g_w,
            "nade_v": g_v,
            "base_b_visible": dB.sum(axis=0),
            "base_c_hidden": dC.sum(axis=0),
            "cond_b": dB.T @ H,
            "cond_c": dC.T @ H,
        }
        return nll, dB @ self.cond_b + dC @ self.cond_c, grads

    def step_nll(self, H, targets):
        H = np.atleast_2d(np.asarray(H, dtype=float))
        Y = _binary_targets(targets, self.dim)
        logits, _ = self._conditionals(H, Y)
        return np.sum(_softplus(logits) - Y * logits, axis=1)

    def predict(self, H):
        """Greedy thresholded sample: v_i = 1 iff p(v_i = 1 | thresholded prefix) > 0.5."""
        H = np.atleast_2d(np.asarray(H, dtype=float))
        B, A = self._biases(H)
        V = np.zeros((H.shape[0], self.dim), dtype=np.int8)
        A = A.copy()
        for i in range(self.dim):
            logit = sigmoid(A) @ self.nade_v[i] + B[:, i]
            V[:, i] = logit > 0
            A += np.outer(V[:, i], self.nade_w[:, i])
        return V


def bernoulli_loss(out, h, target):
    return out.step_loss(h, target)


def softmax_loss(out, h, target):
    return out.step_loss(h, int(target))


def class_softmax_loss(out, h, target):
    return out.step_loss(h, int(target))


def nade_loss(out, h, target):
    return out.step_loss(h, target)


def nade_enumerate(out, h):
    """Exact probability of every binary configuration of the NADE outputs.

    Entry ``k`` of the result is the probability of the configuration whose
    ``i``-th visible unit is ``(k >> i) & 1``.
    """
    d = out.dim
    if d > NADE_ENUM_MAX:
        raise InputError(f"enumeration limited to d <= {NADE_ENUM_MAX}, got d={d}")
    configs = configurations(d)
    H = np.repeat(np.asarray(h, dtype=float)[None, :], len(configs), axis=0)
    return np.exp(-out.step_nll(H, configs))


def configurations(d):
    """All ``2**d`` binary vectors, row ``k`` holding the bits of ``k`` (LSB first)."""
    k = np.arange(2**d)
    return ((k[:, None] >> np.arange(d)) & 1).astype(float)


def frame_accuracy(predictions, targets):
    """Sum_t TP_t / Sum_t (TP_t + FP_t + FN_t) over binary frame matrices."""
    pred = np.asarray(predictions).astype(bool)
    targ = np.asarray(targets).astype(bool)
    if pred.shape != targ.shape:
        raise InputError(f"shape mismatch {pred.shape} vs {targ.shape}")
    tp = np.sum(pred & targ)
    fp = np.sum(pred & ~targ)
    fn = np.sum(~pred & targ)
    denom = tp + fp + fn
    # frames with nothing predicted and nothing sounding add zero to both sums
    return float(tp / denom) if denom else 0.0


__all__ = [
    "BernoulliOutput",
    "ClassFactorizedOutput",
    "LossResult",
    "NadeOutput",
    "SoftmaxOutput",
    "bernoulli_loss",
    "class_softmax_loss",
    "configurations",
    "frame_accuracy",
    "nade_enumerate",
    "nade_loss",
    "softmax_loss",
]
