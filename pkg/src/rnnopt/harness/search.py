"""Random hyperparameter search over the enhancement configurations."""

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ConfigError, NumericalError, RNNOptError

log = logging.getLogger(__name__)


class SearchError(RNNOptError):
    """Every trial of a search failed."""


@dataclass(frozen=True)
class SearchSpace:
    """Sampling intervals; ``lr`` and ``lambda_l1`` are log-uniform, the rest linear."""

    n_h: tuple = (100, 400)
    lr: tuple = (1e-4, 1e-1)
    momentum: tuple = (1e-3, 0.95)
    lambda_l1: tuple = (1e-6, 1e-3)
    leaky_fraction: tuple = (0.0, 0.25, 0.5)
    leak_interval: tuple = (0.02, 2.0)

    def __post_init__(self):
        for name in ("n_h", "lr", "momentum", "lambda_l1", "leak_interval"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigError(f"search interval {name} is empty")
        if self.lr[0] <= 0 or self.lambda_l1[0] <= 0:
            raise ConfigError("log-uniform intervals must be strictly positive")
        if not self.leaky_fraction:
            raise ConfigError("leaky_fraction needs at least one category")

    def sample(self, rng, base):
        """Overrides for one trial of ``base``.

        Fields a trial's flags do not use stay at the base value: momentum only
        for momentum methods, the L1 weight only with flag R, leaky units only
        with flag L. A sampled leaky fraction of 0 drops flag L for that trial.
        The leak interval is passed through as configured (per-unit draws are
        clipped to [0, 0.999] at initialisation).
        """

        def log_uniform(lo, hi):
            return float(math.exp(rng.uniform(math.log(lo), math.log(hi))))

        out = {
            "n_h": int(round(rng.uniform(*self.n_h))),
            "lr": log_uniform(*self.lr),
        }
        momentum = float(rng.uniform(*self.momentum))
        lambda_l1 = log_uniform(*self.lambda_l1)
        fraction = float(self.leaky_fraction[rng.integers(len(self.leaky_fraction))])
        if base.method != "sgd":
            out["momentum"] = momentum
        if "R" in base.flags:
            out["lambda_l1"] = lambda_l1
        if "L" in base.flags:
            out["leaky_fraction"] = fraction
            out["leak_interval"] = tuple(self.leak_interval)
            if fraction == 0:
                out["flags"] = base.flags.replace("L", "")
        return out


def _run_trial(args):
    from .training import train

    index, config, task = args
    try:
        report = train(config, task)
    except (NumericalError, FloatingPointError) as e:
        return {"trial": index, "status": "diverged", "error": str(e)}
    valid = report.best_valid.mean_ll if report.best_valid else report.epochs[-1].train.mean_ll
    return {
        "trial": index,
        "status": "ok",
        "valid_mean_ll": valid,
        "test_mean_ll": report.test.mean_ll if report.test else None,
        "best_epoch": report.best_epoch,
        "clip_threshold": report.clip_threshold,
    }


def random_search(space, budget, base_config, seed=0, task=None, parallel=1, out_dir=None):
    """Run ``budget`` trials and rank them by validation log-likelihood.

    Trial ``i`` samples its hyperparameters from ``default_rng(seed + i)`` and
    trains with seed ``seed + i``. Returns ``(best_config, leaderboard)``; the
    leaderboard (one dict per trial, best first, diverged trials last) is also
    written to ``out_dir`` as CSV and JSON when given.
    """
    if budget < 1:
        raise ConfigError("search budget must be >= 1")
    configs = []
    for i in range(budget):
        rng = np.random.default_rng(seed + i)
        overrides = space.sample(rng, base_config)
        run_dir = str(Path(out_dir) / f"trial{i:03d}") if out_dir else None
        configs.append(base_config.with_updates(seed=seed + i, run_dir=run_dir, **overrides))

    jobs = [(i, cfg, task) for i, cfg in enumerate(configs)]
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(_run_trial, jobs))
    else:
        results = [_run_trial(job) for job in jobs]

    for res, cfg in zip(results, configs):
        res["config"] = cfg.to_dict()
    ok = sorted((r for r in results if r["status"] == "ok"), key=lambda r: -r["valid_mean_ll"])
    leaderboard = ok + [r for r in results if r["status"] != "ok"]
    if out_dir:
        _persist(leaderboard, Path(out_dir))
    if not ok:
        raise SearchError(f"all {budget} trials diverged")
    return configs[ok[0]["trial"]], leaderboard


def _persist(leaderboard, out_dir):
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "leaderboard.json").write_text(json.dumps(leaderboard, indent=2, default=str))
    cols = ["trial", "status", "valid_mean_ll", "test_mean_ll", "best_epoch", "n_h", "lr",
            "momentum", "lambda_l1", "leaky_fraction", "flags"]
    with open(out_dir / "leaderboard.csv", "w", newline="") as f:
        writer = csv.DictWriter(f, cols, extrasaction="ignore")
        writer.writeheader()
        for r in leaderboard:
            writer.writerow({**{k: r["config"].get(k) for k in cols[5:]}, **r})
