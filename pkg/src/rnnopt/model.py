"""Recurrent cell with per-unit leaky integration.

The state update is

    h_t = leak * h_{t-1} + (1 - leak) * act(w_rec @ h_{t-1} + w_in @ x_t + b_h)

applied elementwise over units. ``leak = 0`` gives the standard RNN.

Inputs are either a float matrix ``[T, n_x]`` or an integer vector of
token ids ``[T]``, the latter meaning one-hot rows (``w_in @ x`` becomes a
column lookup).
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, InputError, NumericalError

ACTIVATIONS = ("tanh", "sigmoid", "rectifier")
LEAK_MAX = 0.999


@dataclass(frozen=True)
class ModelConfig:
    n_h: int
    n_x: int
    activation: str = "tanh"
    init_std: float = 0.1
    spectral_radius: float | None = None
    leaky_fraction: float = 0.0
    leak_interval: tuple = (0.02, 0.2)

    def validate(self):
        if int(self.n_h) < 1 or int(self.n_x) < 1:
            raise ConfigError(f"n_h and n_x must be >= 1, got {self.n_h}, {self.n_x}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if not 0.0 <= self.leaky_fraction <= 1.0:
            raise ConfigError(f"leaky_fraction must lie in [0, 1], got {self.leaky_fraction}")
        lo, hi = self.leak_interval
        if not lo <= hi:
            raise ConfigError(f"empty leak interval {self.leak_interval}")
        if lo < 0:
            raise ConfigError(f"leak interval must be non-negative, got {self.leak_interval}")
        if self.init_std < 0:
            raise ConfigError("init_std must be non-negative")
        if self.spectral_radius is not None and self.spectral_radius < 0:
            raise ConfigError("spectral_radius must be non-negative")


@dataclass(frozen=True, eq=False)
class RNNParams:
    """Trainable weights of the recurrent map plus the fixed leak vector."""

    w_rec: np.ndarray
    w_in: np.ndarray
    b_h: np.ndarray
    leak: np.ndarray
    activation: str = "tanh"

    TRAINABLE = ("w_rec", "w_in", "b_h")

    def __post_init__(self):
        n_h = self.w_rec.shape[0]
        if self.w_rec.shape != (n_h, n_h):
            raise ConfigError(f"w_rec must be square, got {self.w_rec.shape}")
        if self.w_in.ndim != 2 or self.w_in.shape[0] != n_h:
            raise ConfigError(f"w_in shape {self.w_in.shape} inconsistent with n_h={n_h}")
        if self.b_h.shape != (n_h,) or self.leak.shape != (n_h,):
            raise ConfigError("b_h and leak must have shape (n_h,)")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if np.any(self.leak < 0) or np.any(self.leak > LEAK_MAX):
            raise ConfigError(f"leak entries must lie in [0, {LEAK_MAX}]")

    @property
    def n_h(self):
        return self.w_rec.shape[0]

    @property
    def n_x(self):
        return self.w_in.shape[1]

    def arrays(self):
        return {name: getattr(self, name) for name in self.TRAINABLE}

    def with_arrays(self, **arrays):
        return replace(self, **arrays)

    def is_finite(self):
        return all(np.all(np.isfinite(a)) for a in (self.w_rec, self.w_in, self.b_h, self.leak))


@dataclass(frozen=True, eq=False)
class RNNState:
    h: np.ndarray

    @classmethod
    def zeros(cls, n_h):
        return cls(np.zeros(n_h))


@dataclass(frozen=True, eq=False)
class StateTrajectory:
    """States ``[T+1, n_h]`` (row 0 is the initial state) and pre-activations ``[T, n_h]``."""

    states: np.ndarray
    preacts: np.ndarray
    inputs: np.ndarray = field(repr=False)

    def __len__(self):
        return self.preacts.shape[0]

    @property
    def final_state(self):
        return RNNState(self.states[-1])


def init_params(config, seed):
    """Draw parameters for ``config`` from a generator seeded with ``seed``.

    Weights are i.i.d. Gaussian with standard deviation ``config.init_std`` and
    biases are zero. If ``config.spectral_radius`` is set, ``w_rec`` is rescaled
    so its largest eigenvalue modulus equals it. A ``leaky_fraction`` share of
    the units (chosen at random) get a leak drawn uniformly from
    ``leak_interval``, clipped to ``[0, 0.999]``; the rest get 0.
    """
    config.validate()
    rng = np.random.default_rng(seed)
    n_h, n_x = int(config.n_h), int(config.n_x)
    w_rec = rng.normal(0.0, config.init_std, size=(n_h, n_h))
    w_in = rng.normal(0.0, config.init_std, size=(n_h, n_x))
    if config.spectral_radius is not None:
        w_rec = rescale_spectral_radius(w_rec, config.spectral_radius)

    leak = np.zeros(n_h)
    n_leaky = int(round(config.leaky_fraction * n_h))
    if n_leaky:
        units = rng.permutation(n_h)[:n_leaky]
        lo, hi = config.leak_interval
        leak[units] = np.clip(rng.uniform(lo, hi, size=n_leaky), 0.0, LEAK_MAX)
    return RNNParams(w_rec, w_in, np.zeros(n_h), leak, config.activation)


def rescale_spectral_radius(w, radius):
    current = np.max(np.abs(np.linalg.eigvals(w)))
    if current == 0:
        return w.copy()
    return w * (radius / current)


def activate(kind, preact):
    preact = np.asarray(preact, dtype=float)
    if kind == "tanh":
        return np.tanh(preact)
    if kind == "sigmoid":
        return sigmoid(preact)
    if kind == "rectifier":
        return np.maximum(preact, 0.0)
    raise ConfigError(f"unknown activation {kind!r}")


def activate_deriv(kind, preact, out=None):
    """Derivative of ``activate`` w.r.t. its argument; the rectifier uses 0 at the kink."""
    if out is None:
        out = activate(kind, preact)
    if kind == "tanh":
        return 1.0 - out * out
    if kind == "sigmoid":
        return out * (1.0 - out)
    if kind == "rectifier":
        return (preact > 0).astype(float)
    raise ConfigError(f"unknown activation {kind!r}")


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def input_drive(params, x):
    """``w_in @ x`` for one input: a float vector or an integer token id."""
    if np.ndim(x) == 0:
        idx = int(x)
        if not 0 <= idx < params.n_x:
            raise InputError(f"token id {idx} out of range for n_x={params.n_x}")
        return params.w_in[:, idx]
    x = np.asarray(x, dtype=float)
    if x.shape != (params.n_x,):
        raise InputError(f"input width {x.shape} does not match n_x={params.n_x}")
    return params.w_in @ x


def _advance(params, h_prev, drive):
    preact = params.w_rec @ h_prev + drive + params.b_h
    f = activate(params.activation, preact)
    h = params.leak * h_prev + (1.0 - params.leak) * f
    return h, preact


def step(params, prev, x):
    """One leaky update; returns ``(RNNState, preact)``."""
    h_prev = prev.h if isinstance(prev, RNNState) else np.asarray(prev, dtype=float)
    if h_prev.shape != (params.n_h,):
        raise InputError(f"state shape {h_prev.shape} does not match n_h={params.n_h}")
    with np.errstate(over="ignore", invalid="ignore"):
        h, preact = _advance(params, h_prev, input_drive(params, x))
    if not np.all(np.isfinite(h)):
        raise NumericalError("non-finite hidden state")
    return RNNState(h), preact


def as_inputs(inputs, n_x=None):
    """Normalise an input sequence to a float ``[T, n_x]`` array or int ``[T]`` array."""
    arr = np.asarray(inputs)
    if arr.ndim == 1 and arr.size and np.issubdtype(arr.dtype, np.integer):
        return arr.astype(np.int64)
    if arr.size == 0:
        return np.zeros((0, n_x or 0))
    if arr.ndim != 2:
        raise InputError(f"inputs must be [T, n_x] floats or [T] token ids, got shape {arr.shape}")
    if n_x is not None and arr.shape[1] != n_x:
        raise InputError(f"input width {arr.shape[1]} does not match n_x={n_x}")
    return arr.astype(float)


def forward(params, inputs, h0=None):
    """Run the recurrence over ``inputs`` starting from ``h0`` (zeros by default)."""
    x = as_inputs(inputs, params.n_x)
    n_steps = x.shape[0]
    states = np.empty((n_steps + 1, params.n_h))
    preacts = np.empty((n_steps, params.n_h))
    if h0 is None:
        states[0] = 0.0
    else:
        states[0] = h0.h if isinstance(h0, RNNState) else h0

    tokens = x.ndim == 1
    if tokens and n_steps and (x.min() < 0 or x.max() >= params.n_x):
        raise InputError(f"token ids out of range for n_x={params.n_x}")
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(n_steps):
            drive = params.w_in[:, x[t]] if tokens else params.w_in @ x[t]
            states[t + 1], preacts[t] = _advance(params, states[t], drive)

    if not np.all(np.isfinite(states)):
        bad = int(np.argmax(~np.all(np.isfinite(states), axis=1)))
        raise NumericalError("non-finite hidden state", timestep=bad)
    return StateTrajectory(states, preacts, x)
