"""Experiment configuration: fields, flag consistency and file loading.

Config files are YAML (JSON is accepted too, being a YAML subset). Unknown
keys are rejected. Example::

    flags: CL
    n_h: 100
    activation: tanh
    leaky_fraction: 0.5
    leak_interval: [0.02, 0.2]
    lr: 0.01
    clip_factor: 1.0
    chunk_length: 100
    output: bernoulli
    dataset:
      kind: music
      train: data/jsb/train.jsonl
      valid: data/jsb/valid.jsonl
      test: data/jsb/test.jsonl
    epochs: 50
"""

from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import yaml

from ..errors import ConfigError
from ..model import ACTIVATIONS, ModelConfig
from ..optim import METHODS

FLAGS = "CLRM"
FLOAT_FIELDS = {"lambda_l1", "leaky_fraction", "init_std", "spectral_radius", "lr", "momentum",
                "lr_decay_factor", "clip_threshold", "clip_factor"}
INT_FIELDS = {"n_h", "momentum_warmup_steps", "lr_decay_patience", "chunk_length", "n_nade", "n_classes",
              "seed", "epochs", "patience"}
OUTPUTS = ("bernoulli", "nade", "softmax", "class_softmax")
DATASET_KINDS = ("music", "char", "word")
DATASET_KEYS = {"kind", "train", "valid", "test", "max_train_chars", "max_eval_chars", "max_vocab"}


@dataclass(frozen=True)
class ExperimentConfig:
    flags: str = ""
    n_h: int = 100
    activation: str = "tanh"
    lambda_l1: float = 0.0
    leaky_fraction: float = 0.0
    leak_interval: tuple = (0.02, 0.2)
    init_std: float = 0.1
    spectral_radius: float | None = None

    method: str = "sgd"
    lr: float = 0.01
    momentum: float = 0.0
    momentum_warmup_steps: int = 0
    lr_decay_patience: int | None = None
    lr_decay_factor: float = 0.5
    clip_threshold: float | None = None
    clip_factor: float | None = None

    chunk_length: int = 100
    output: str = "bernoulli"
    n_nade: int = 150
    n_classes: int = 30
    output_bias_init: str = "zero"

    dataset: dict | None = None
    seed: int = 0
    epochs: int = 10
    patience: int = 20
    shuffle: bool = True
    run_dir: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "leak_interval", tuple(float(v) for v in self.leak_interval))
        flags = self.flags.upper()
        if set(flags) <= set(FLAGS):
            flags = "".join(f for f in FLAGS if f in flags)
        object.__setattr__(self, "flags", flags)
        self.validate()

    def validate(self):
        bad = set(self.flags) - set(FLAGS)
        if bad:
            raise ConfigError(f"unknown flags {''.join(sorted(bad))!r}; allowed: {FLAGS}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        if self.output not in OUTPUTS:
            raise ConfigError(f"unknown output model {self.output!r}")
        if self.output_bias_init not in ("zero", "marginal"):
            raise ConfigError("output_bias_init must be 'zero' or 'marginal'")
        if self.n_h < 1 or self.chunk_length < 2 or self.epochs < 0 or self.patience < 1:
            raise ConfigError("n_h >= 1, chunk_length >= 2, epochs >= 0, patience >= 1 required")
        if self.lambda_l1 < 0:
            raise ConfigError("lambda_l1 must be non-negative")
        if not self.lr > 0:
            raise ConfigError("lr must be positive")
        if not 0.0 <= self.momentum <= 1.0:
            raise ConfigError("momentum must lie in [0, 1]")
        if self.clip_threshold is not None and self.clip_factor is not None:
            raise ConfigError("give either clip_threshold or clip_factor, not both")
        for name in ("clip_threshold", "clip_factor"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ConfigError(f"{name} must be positive")

        clipped = self.clip_threshold is not None or self.clip_factor is not None
        if ("C" in self.flags) != clipped:
            raise ConfigError("flag C requires a clip threshold source, and clipping requires flag C")
        if ("L" in self.flags) != (self.leaky_fraction > 0):
            raise ConfigError("flag L requires leaky_fraction > 0, and leaky units require flag L")
        if "R" in self.flags and self.activation != "rectifier":
            raise ConfigError("flag R requires the rectifier activation")
        if ("M" in self.flags) != (self.method == "nesterov_simplified"):
            raise ConfigError("flag M means method nesterov_simplified (and vice versa)")
        self.model_config(1).validate()

        if self.dataset is not None:
            unknown = set(self.dataset) - DATASET_KEYS
            if unknown:
                raise ConfigError(f"unknown dataset keys: {sorted(unknown)}")
            if self.dataset.get("kind") not in DATASET_KINDS:
                raise ConfigError(f"dataset kind must be one of {DATASET_KINDS}")
            if "train" not in self.dataset:
                raise ConfigError("dataset needs a train path")

    def model_config(self, n_x):
        return ModelConfig(
            n_h=self.n_h,
            n_x=n_x,
            activation=self.activation,
            init_std=self.init_std,
            spectral_radius=self.spectral_radius,
            leaky_fraction=self.leaky_fraction,
            leak_interval=self.leak_interval,
        )

    def with_updates(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        d = asdict(self)
        d["leak_interval"] = list(self.leak_interval)
        return d

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        data = dict(data)
        for name, value in data.items():
            if value is None or isinstance(value, bool):
                continue
            # YAML 1.1 reads "1e-4" as a string
            try:
                if name in FLOAT_FIELDS:
                    data[name] = float(value)
                elif name in INT_FIELDS:
                    if float(value) != int(float(value)):
                        raise ValueError(value)
                    data[name] = int(float(value))
            except (TypeError, ValueError):
                raise ConfigError(f"{name} must be a number, got {value!r}") from None
        if "leak_interval" in data:
            try:
                data["leak_interval"] = tuple(float(v) for v in data["leak_interval"])
            except (TypeError, ValueError):
                raise ConfigError(f"leak_interval must be two numbers, got {data['leak_interval']!r}") from None
        try:
            return cls(**data)
        except TypeError as e:
            raise ConfigError(str(e)) from None


def load_config(path):
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    except yaml.YAMLError as e:
        raise ConfigError(f"invalid config {path}: {e}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping")
    cfg = ExperimentConfig.from_dict(data)
    if cfg.dataset:
        base = path.parent
        ds = dict(cfg.dataset)
        for split in ("train", "valid", "test"):
            if split in ds and not Path(ds[split]).is_absolute():
                ds[split] = str(base / ds[split])
        cfg = cfg.with_updates(dataset=ds)
    return cfg


def save_config(config, path):
    Path(path).write_text(yaml.safe_dump(config.to_dict(), sort_keys=False), encoding="utf-8")


__all__ = ["ExperimentConfig", "load_config", "save_config"]
