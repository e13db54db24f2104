"""Gradient checking across enhancement flags and Jacobian-chain diagnostics."""

import csv
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

import numpy as np

from ..errors import ConfigError, InputError
from ..gradients import bptt, finite_diff_grad, jacobian_chain, relative_errors
from ..model import RNNParams, forward
from ..outputs import BernoulliOutput, ClassFactorizedOutput, NadeOutput, SoftmaxOutput

OUTPUT_KINDS = ("bernoulli", "softmax", "class_softmax", "nade")
DEFAULT_SIZES = {"n_h": 6, "n_x": 3, "d": 4, "T": 10, "n_nade": 5, "vocab": 7, "n_classes": 3}


@dataclass
class GradcheckCase:
    activation: str
    output: str
    leak: bool
    lambda_l1: float
    block_errors: dict
    n_excluded: int
    tolerance: float

    @property
    def max_error(self):
        return max(self.block_errors.values(), default=0.0)

    @property
    def passed(self):
        return self.max_error <= self.tolerance

    @property
    def name(self):
        return f"{self.activation}/{self.output}/leak={'on' if self.leak else 'off'}/l1={self.lambda_l1:g}"


@dataclass
class GradcheckReport:
    cases: list = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.cases)

    def lines(self):
        for c in self.cases:
            blocks = " ".join(f"{k}={v:.1e}" for k, v in c.block_errors.items())
            yield (f"{'PASS' if c.passed else 'FAIL'} {c.name} max={c.max_error:.2e} "
                   f"excluded={c.n_excluded} {blocks}")


def random_instance(activation, output, leak, seed, sizes=None):
    """Small random network, output model, inputs, targets and initial state."""
    s = {**DEFAULT_SIZES, **(sizes or {})}
    rng = np.random.default_rng(seed)
    n_h, n_x, d, T = s["n_h"], s["n_x"], s["d"], s["T"]
    leak_vec = rng.uniform(0.1, 0.9, n_h) if leak else np.zeros(n_h)
    params = RNNParams(rng.normal(0, 0.5, (n_h, n_h)), rng.normal(0, 0.5, (n_h, n_x)),
                       rng.normal(0, 0.3, n_h), leak_vec, activation)
    if output == "bernoulli":
        out = BernoulliOutput(rng.normal(0, 0.5, (d, n_h)), rng.normal(0, 0.3, d))
        targets = rng.integers(0, 2, (T, d))
    elif output == "nade":
        k = s["n_nade"]
        out = NadeOutput(rng.normal(0, 0.5, (k, d)), rng.normal(0, 0.5, (d, k)), rng.normal(0, 0.3, d),
                         rng.normal(0, 0.3, k), rng.normal(0, 0.5, (d, n_h)), rng.normal(0, 0.5, (k, n_h)))
        targets = rng.integers(0, 2, (T, d))
    elif output == "softmax":
        v = s["vocab"]
        out = SoftmaxOutput(rng.normal(0, 0.5, (v, n_h)), rng.normal(0, 0.3, v))
        targets = rng.integers(0, v, T)
    elif output == "class_softmax":
        v, k = s["vocab"], s["n_classes"]
        class_of = rng.permutation(np.arange(v) % k)
        out = ClassFactorizedOutput(rng.normal(0, 0.5, (k, n_h)), rng.normal(0, 0.3, k),
                                    rng.normal(0, 0.5, (v, n_h)), rng.normal(0, 0.3, v), class_of)
        targets = rng.integers(0, v, T)
    else:
        raise InputError(f"unknown output model {output!r}")
    inputs = rng.normal(0, 1.0, (T, n_x))
    h0 = rng.normal(0, 0.3, n_h)
    if activation == "rectifier":
        h0 = np.abs(h0)
    return params, out, inputs, targets, h0


def check_case(activation, output, leak, lambda_l1, seed=0, sizes=None,
               perturbation=1e-5, tolerance=1e-4):
    params, out, inputs, targets, h0 = random_instance(activation, output, leak, seed, sizes)
    analytic = bptt(params, out, forward(params, inputs, h0), targets, lambda_l1).as_tree()
    numeric, mask = finite_diff_grad(params, out, inputs, targets, lambda_l1, h0,
                                     perturbation, return_mask=True)
    numeric = numeric.as_tree()
    errors = {}
    for name, a in analytic.items():
        keep = ~mask[name]
        errs = relative_errors(a, numeric[name])[keep]
        errors[name] = float(errs.max()) if errs.size else 0.0
    excluded = int(sum(m.sum() for m in mask.values()))
    return GradcheckCase(activation, output, leak, lambda_l1, errors, excluded, tolerance)


def gradcheck(flags=None, sizes=None, seed=0, perturbation=1e-5, tolerance=1e-4, outputs=OUTPUT_KINDS):
    """Compare BPTT with central differences over a matrix of small instances.

    ``flags=None`` runs the full matrix (three activations, four output models,
    leak on/off, L1 weight 0 and 1e-4). A flag string narrows it: ``L`` means
    leaky units on (off otherwise), ``R`` means rectifier with L1 1e-4 (tanh and
    sigmoid without L1 otherwise). ``C`` and ``M`` act after the gradient and
    leave it unchanged.
    """
    if flags is None:
        activations, leaks, l1s = ("tanh", "sigmoid", "rectifier"), (False, True), (0.0, 1e-4)
    else:
        flags = flags.upper()
        if set(flags) - set("CLRM"):
            raise ConfigError(f"unknown flags in {flags!r}; allowed: CLRM")
        leaks = (True,) if "L" in flags else (False,)
        if "R" in flags:
            activations, l1s = ("rectifier",), (1e-4,)
        else:
            activations, l1s = ("tanh", "sigmoid"), (0.0,)
    report = GradcheckReport()
    for n, (act, out, leak, l1) in enumerate(product(activations, outputs, leaks, l1s)):
        report.cases.append(check_case(act, out, leak, l1, seed + n, sizes, perturbation, tolerance))
    return report


@dataclass
class DiagnosticTable:
    lags: np.ndarray
    mean_norms: np.ndarray
    min_norms: np.ndarray
    max_norms: np.ndarray
    mean_leading_eigenvalue: float
    n_samples: int

    def write_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["lag", "mean_norm", "min_norm", "max_norm", "n_samples"])
            for row in zip(self.lags, self.mean_norms, self.min_norms, self.max_norms):
                w.writerow([int(row[0]), repr(float(row[1])), repr(float(row[2])), repr(float(row[3])),
                            self.n_samples])
        return path


def diagnose(model, dataset, max_lag, n_positions=20, seed=0, out_path=None):
    """Per-lag Jacobian-product norms averaged over sampled trajectory positions.

    Trajectories are recomputed chunk by chunk with carried state; positions
    ``t2`` are drawn uniformly among those with at least ``max_lag`` steps of
    history inside their chunk.
    """
    if max_lag < 1:
        raise InputError("max_lag must be >= 1 (t1 < t2 required)")
    params = model.params
    finals, trajs = {}, []
    for i, c in enumerate(dataset.chunks):
        h0 = finals.get(c.carry_from) if c.carry_from is not None else None
        traj = forward(params, c.inputs, h0)
        finals[i] = traj.states[-1]
        if len(traj) >= max_lag:
            trajs.append(traj)
    if not trajs:
        raise InputError(f"no chunk has {max_lag} steps")
    rng = np.random.default_rng(seed)
    norms, leads = [], []
    for _ in range(n_positions):
        traj = trajs[rng.integers(len(trajs))]
        t2 = int(rng.integers(max_lag, len(traj) + 1))
        rep = jacobian_chain(params, traj, t2 - max_lag, t2)
        norms.append(rep.norms)
        leads.append(rep.leading_eigenvalue)
    norms = np.array(norms)
    table = DiagnosticTable(np.arange(1, max_lag + 1), norms.mean(axis=0), norms.min(axis=0),
                            norms.max(axis=0), float(np.mean(leads)), len(norms))
    if out_path:
        table.write_csv(out_path)
    return table
