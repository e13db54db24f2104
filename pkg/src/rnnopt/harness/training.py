"""Training loop, evaluation metrics and the model bundle they operate on."""

import csv
import logging
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .. import data as datamod
from ..errors import CheckpointError, ConfigError, NumericalError
from ..gradients import bptt
from ..model import RNNParams, forward, init_params
from ..optim import (
    OptimizerState,
    PlateauDecay,
    calibrate_clip_threshold,
    apply_update,
    constant,
    linear_warmup,
)
from ..outputs import BernoulliOutput, ClassFactorizedOutput, NadeOutput, SoftmaxOutput, frame_accuracy
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ExperimentConfig

log = logging.getLogger(__name__)

OUTPUT_CLASSES = {
    "bernoulli": BernoulliOutput,
    "nade": NadeOutput,
    "softmax": SoftmaxOutput,
    "class_softmax": ClassFactorizedOutput,
}
METRIC_COLUMNS = (
    "epoch", "split", "mean_ll", "accuracy", "perplexity", "bits_per_char",
    "grad_norm_mean", "grad_norm_max", "clip_events", "wall_clock_s",
)


@dataclass(frozen=True, eq=False)
class Model:
    """Recurrent parameters plus output model, addressable as one parameter tree."""

    params: RNNParams
    output: object

    def tree(self):
        t = {f"rnn.{k}": v for k, v in self.params.arrays().items()}
        t.update({f"out.{k}": v for k, v in self.output.arrays().items()})
        return t

    def with_tree(self, tree):
        rnn = {k[4:]: v for k, v in tree.items() if k.startswith("rnn.")}
        out = {k[4:]: v for k, v in tree.items() if k.startswith("out.")}
        return Model(self.params.with_arrays(**rnn), self.output.with_arrays(**out))

    @property
    def output_kind(self):
        return next(k for k, c in OUTPUT_CLASSES.items() if isinstance(self.output, c))

    def is_finite(self):
        return all(np.all(np.isfinite(v)) for v in self.tree().values())


@dataclass
class TaskData:
    """Chunked splits of one task plus what the model needs to know about it."""

    kind: str
    splits: dict
    n_x: int
    out_dim: int
    vocab: list | None = None
    class_of: np.ndarray | None = None


@dataclass(frozen=True)
class Metrics:
    mean_ll: float
    n_targets: int = 0
    frame_accuracy: float | None = None
    perplexity: float | None = None
    bits_per_char: float | None = None


@dataclass
class EpochRecord:
    epoch: int
    train: Metrics | None
    valid: Metrics | None
    grad_norm_mean: float = float("nan")
    grad_norm_max: float = float("nan")
    clip_events: int = 0
    wall_clock_s: float = 0.0


@dataclass
class TrainReport:
    config: ExperimentConfig
    epochs: list = field(default_factory=list)
    best_epoch: int = 0
    best_valid: Metrics | None = None
    best_checkpoint: str | None = None
    clip_threshold: float | None = None
    test: Metrics | None = None
    model: Model | None = field(default=None, repr=False)
    final_model: Model | None = field(default=None, repr=False)

    def metric_rows(self):
        rows = []
        for rec in self.epochs:
            for split, m in (("train", rec.train), ("valid", rec.valid)):
                if m is not None:
                    rows.append(_row(rec, split, m))
        return rows


def _fmt(value):
    return "" if value is None else repr(float(value))


def _row(rec, split, m):
    return {
        "epoch": rec.epoch,
        "split": split,
        "mean_ll": _fmt(m.mean_ll),
        "accuracy": _fmt(m.frame_accuracy),
        "perplexity": _fmt(m.perplexity),
        "bits_per_char": _fmt(m.bits_per_char),
        "grad_norm_mean": _fmt(rec.grad_norm_mean),
        "grad_norm_max": _fmt(rec.grad_norm_max),
        "clip_events": rec.clip_events,
        "wall_clock_s": _fmt(rec.wall_clock_s),
    }


def make_metrics(total_nll, n_targets, task_kind, accuracy=None):
    """Per-target mean log-likelihood plus the derived metric of ``task_kind``."""
    mean_ll = -total_nll / n_targets if n_targets else float("nan")
    kw = {}
    if task_kind in ("music", "binary"):
        kw["frame_accuracy"] = accuracy
    elif task_kind == "word":
        kw["perplexity"] = math.exp(-mean_ll)
    elif task_kind == "char":
        kw["perplexity"] = math.exp(-mean_ll)
        kw["bits_per_char"] = -mean_ll / math.log(2)
    return Metrics(mean_ll, n_targets, **kw)


# ---------------------------------------------------------------------------
# data and model construction


def load_task_data(config, vocab=None):
    """Load and chunk the splits named in ``config.dataset``."""
    ds = config.dataset
    if ds is None:
        raise ConfigError("config has no dataset manifest")
    kind = ds["kind"]
    splits = {}
    try:
        if kind == "music":
            for split in ("train", "valid", "test"):
                if ds.get(split):
                    splits[split] = datamod.chunk(datamod.load_pianoroll(ds[split]), config.chunk_length)
            return TaskData(kind, splits, datamod.N_PITCHES, datamod.N_PITCHES)

        level = "character" if kind == "char" else "word"
        train = datamod.load_text(ds["train"], level, vocab=vocab,
                                  max_vocab=ds.get("max_vocab", datamod.WORD_VOCAB_SIZE),
                                  max_chars=ds.get("max_train_chars"))
        vocab = list(train.vocab)
        if datamod.UNK not in vocab:
            vocab.append(datamod.UNK)
        corpora = {"train": replace(train, vocab=vocab)}
        for split in ("valid", "test"):
            if ds.get(split):
                corpora[split] = datamod.load_text(ds[split], level, vocab=vocab,
                                                   max_chars=ds.get("max_eval_chars"))
    except OSError as e:
        raise datamod.DataError(str(e)) from None
    splits = {k: datamod.chunk(c, config.chunk_length) for k, c in corpora.items()}
    class_of = None
    if config.output == "class_softmax":
        class_of = datamod.build_class_partition(corpora["train"], config.n_classes).class_of
    return TaskData(kind, splits, len(vocab), len(vocab), vocab, class_of)


def _marginal_targets(dataset, out_dim, binary):
    if binary:
        frames = np.concatenate([np.asarray(c.targets, dtype=float) for c in dataset.chunks])
        return frames.mean(axis=0)
    ids = np.concatenate([np.asarray(c.targets) for c in dataset.chunks])
    return np.bincount(ids, minlength=out_dim) / len(ids)


def build_model(config, task, seed=None):
    """Fresh parameters for ``config`` on ``task``; deterministic in the seed."""
    seed = config.seed if seed is None else seed
    init_seq, out_seq = np.random.SeedSequence(seed).spawn(2)
    params = init_params(config.model_config(task.n_x), init_seq)
    rng = np.random.default_rng(out_seq)
    n_h, std = config.n_h, config.init_std
    if config.output == "bernoulli":
        out = BernoulliOutput.init(n_h, task.out_dim, rng, std)
    elif config.output == "nade":
        out = NadeOutput.init(n_h, task.out_dim, config.n_nade, rng, std)
    elif config.output == "softmax":
        out = SoftmaxOutput.init(n_h, task.out_dim, rng, std)
    else:
        if task.class_of is None:
            raise ConfigError("class_softmax output needs a word class partition")
        out = ClassFactorizedOutput.init(n_h, task.class_of, rng, std)

    if config.output_bias_init == "marginal" and "train" in task.splits:
        freq = _marginal_targets(task.splits["train"], task.out_dim, config.output in ("bernoulli", "nade"))
        if config.output in ("bernoulli", "nade"):
            p = np.clip(freq, 1e-4, 1 - 1e-4)
            name = "b_out" if config.output == "bernoulli" else "base_b_visible"
            out = out.with_arrays(**{name: np.log(p / (1 - p))})
        elif config.output == "softmax":
            out = out.with_arrays(b_out=np.log(np.maximum(freq, 1e-8)))
        else:
            cls_mass = np.bincount(out.class_of, weights=freq, minlength=out.n_classes)
            within = freq / np.maximum(cls_mass[out.class_of], 1e-12)
            out = out.with_arrays(class_bias=np.log(np.maximum(cls_mass, 1e-8)),
                                  word_bias=np.log(np.maximum(within, 1e-8)))
    return Model(params, out)


# ---------------------------------------------------------------------------
# evaluation


def evaluate_model(model, dataset, task_kind):
    """Mean per-target log-likelihood with hidden state carried along chunk links."""
    finals = {}
    total, count = 0.0, 0
    predictions, targets = [], []
    binary = model.output.binary
    for i, c in enumerate(dataset.chunks):
        h0 = finals.get(c.carry_from) if c.carry_from is not None else None
        traj = forward(model.params, c.inputs, h0)
        finals[i] = traj.states[-1]
        H = traj.states[1:]
        nll = model.output.step_nll(H, c.targets)
        w = np.ones(len(c)) if c.weights is None else c.weights
        total += float(np.sum(w * nll))
        count += int(np.count_nonzero(w))
        if binary and task_kind in ("music", "binary"):
            predictions.append(model.output.predict(H))
            targets.append(np.asarray(c.targets))
    accuracy = None
    if predictions:
        accuracy = frame_accuracy(np.concatenate(predictions), np.concatenate(targets))
    return make_metrics(total, count, task_kind, accuracy)


def evaluate(checkpoint, dataset, task_kind=None):
    """Evaluate a checkpoint (path or loaded ``(model, meta)``) on a chunked dataset."""
    if isinstance(checkpoint, (str, Path)):
        model, meta = model_from_checkpoint(checkpoint)
    elif isinstance(checkpoint, Model):
        model, meta = checkpoint, {}
    else:
        model, meta = checkpoint
    task_kind = task_kind or meta.get("task_kind", "music")
    _check_shapes(model, dataset)
    return evaluate_model(model, dataset, task_kind)


def _check_shapes(model, dataset):
    if not dataset.chunks:
        return
    x = np.asarray(dataset.chunks[0].inputs)
    if x.ndim == 2 and x.shape[1] != model.params.n_x:
        raise CheckpointError(f"checkpoint expects input width {model.params.n_x}, data has {x.shape[1]}")
    if x.ndim == 1 and x.size and int(x.max()) >= model.params.n_x:
        raise CheckpointError("token ids exceed the checkpoint's input vocabulary")


# ---------------------------------------------------------------------------
# checkpoints


def checkpoint_arrays(model, opt_state=None):
    arrays = {f"rnn.{k}": v for k, v in model.params.arrays().items()}
    arrays["rnn.leak"] = model.params.leak
    arrays.update({f"out.{k}": v for k, v in model.output.arrays().items()})
    if isinstance(model.output, ClassFactorizedOutput):
        arrays["out.class_of"] = model.output.class_of
    if opt_state is not None and opt_state.velocity is not None:
        arrays.update({f"opt.velocity.{k}": v for k, v in opt_state.velocity.items()})
    return arrays


def save_model_checkpoint(path, model, config, task, opt_state=None, rng=None, epoch=0):
    meta = {
        "config": config.to_dict(),
        "activation": model.params.activation,
        "output_kind": model.output_kind,
        "task_kind": task.kind,
        "vocab": task.vocab,
        "epoch": epoch,
        "optimizer": None if opt_state is None else {
            "method": opt_state.method,
            "step_count": opt_state.step_count,
            "lr": float(opt_state.lr(opt_state.step_count)),
            "clip_threshold": opt_state.clip_threshold,
        },
        "rng_state": None if rng is None else rng.bit_generator.state,
    }
    return save_checkpoint(path, checkpoint_arrays(model, opt_state), _jsonable(meta))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def model_from_checkpoint(path):
    arrays, meta = load_checkpoint(path)
    rnn = {k[4:]: v for k, v in arrays.items() if k.startswith("rnn.")}
    params = RNNParams(rnn["w_rec"], rnn["w_in"], rnn["b_h"], rnn["leak"], meta["activation"])
    out_arrays = {k[4:]: v for k, v in arrays.items() if k.startswith("out.")}
    cls = OUTPUT_CLASSES[meta["output_kind"]]
    out = cls(**out_arrays)
    return Model(params, out), meta


# ---------------------------------------------------------------------------
# training


def _optimizer(config, clip_threshold):
    if config.momentum_warmup_steps:
        mu = linear_warmup(config.momentum, config.momentum_warmup_steps)
    else:
        mu = constant(config.momentum)
    lr = PlateauDecay(config.lr, config.lr_decay_factor, config.lr_decay_patience)
    return OptimizerState(config.method, lr, mu, clip_threshold)


def _chunk_order(dataset, rng, shuffle):
    chains = dataset.streams()
    if shuffle and len(chains) > 1:
        chains = [chains[i] for i in rng.permutation(len(chains))]
    return [i for chain in chains for i in chain]


def train(config, task=None):
    """Train per ``config``; ``task`` overrides loading ``config.dataset``.

    Each chunk runs forward from the carried state (zero at stream starts),
    backpropagates within the chunk, optionally clips and applies one update.
    The best model by validation log-likelihood (training log-likelihood when
    there is no validation split) is kept and, with ``run_dir``, checkpointed.
    """
    if task is None:
        task = load_task_data(config)
    train_set = task.splits["train"]
    valid_set = task.splits.get("valid")
    run_dir = Path(config.run_dir) if config.run_dir else None
    if run_dir:
        run_dir.mkdir(parents=True, exist_ok=True)

    model = build_model(config, task)
    shuffle_rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(3)[2])

    clip = config.clip_threshold
    if config.clip_factor is not None:
        clip = calibrate_clip_threshold(train_set, model.params, model.output,
                                        config.lambda_l1, config.clip_factor)
        log.info("calibrated clip threshold %.4g", clip)
    opt = _optimizer(config, clip)
    report = TrainReport(config, clip_threshold=clip)

    valid0 = evaluate_model(model, valid_set, task.kind) if valid_set else None
    report.epochs.append(EpochRecord(0, None, valid0))
    best_score = valid0.mean_ll if valid0 else -np.inf
    report.best_valid, report.model = valid0, model
    if run_dir:
        report.best_checkpoint = str(save_model_checkpoint(
            run_dir / "best.npz", model, config, task, opt, shuffle_rng, 0))
    metrics_path = run_dir / "metrics.csv" if run_dir else None
    if metrics_path:
        with open(metrics_path, "w", newline="") as f:
            csv.DictWriter(f, METRIC_COLUMNS).writeheader()
        _append_rows(metrics_path, report.epochs[-1])

    stale = 0
    for epoch in range(1, config.epochs + 1):
        started = time.perf_counter()
        tree = model.tree()
        finals, norms = {}, []
        total_nll, n_targets = 0.0, 0
        clip_before = opt.clip_events
        for i in _chunk_order(train_set, shuffle_rng, config.shuffle):
            c = train_set.chunks[i]
            h0 = finals.get(c.carry_from) if c.carry_from is not None else None
            current = model.with_tree(tree)
            try:
                traj = forward(current.params, c.inputs, h0)
                g = bptt(current.params, current.output, traj, c.targets, config.lambda_l1, c.weights)
            except NumericalError as e:
                raise NumericalError(f"training diverged in chunk {i} ({c.source})",
                                     e.timestep, _divergence_report(epoch, i, c, norms)) from e
            finals[i] = traj.states[-1]
            total_nll += g.total_loss
            n_targets += len(c) if c.weights is None else int(np.count_nonzero(c.weights))
            norms.append(g.norm())
            if not (np.isfinite(norms[-1]) and np.isfinite(g.total_loss)):
                raise NumericalError(f"gradient norm overflowed in chunk {i} ({c.source})",
                                     report=_divergence_report(epoch, i, c, norms))

            if opt.method == "nag":
                def grad_at(point, c=c, h0=h0):
                    m = model.with_tree(point)
                    return bptt(m.params, m.output, forward(m.params, c.inputs, h0),
                                c.targets, config.lambda_l1, c.weights).as_tree()
                tree = apply_update(opt, tree, grad_at)
            else:
                tree = apply_update(opt, tree, g.as_tree())
            if not all(np.all(np.isfinite(v)) for v in tree.values()):
                raise NumericalError(f"parameters became non-finite after chunk {i} ({c.source})",
                                     report=_divergence_report(epoch, i, c, norms))

        model = model.with_tree(tree)
        train_metrics = make_metrics(total_nll, n_targets, task.kind)
        valid_metrics = evaluate_model(model, valid_set, task.kind) if valid_set else None
        rec = EpochRecord(epoch, train_metrics, valid_metrics,
                          float(np.mean(norms)) if norms else float("nan"),
                          float(np.max(norms)) if norms else float("nan"),
                          opt.clip_events - clip_before, time.perf_counter() - started)
        report.epochs.append(rec)
        if metrics_path:
            _append_rows(metrics_path, rec)

        score = (valid_metrics or train_metrics).mean_ll
        opt.lr.observe(score)
        log.info("epoch %d train ll %.4f valid ll %s", epoch, train_metrics.mean_ll,
                 f"{valid_metrics.mean_ll:.4f}" if valid_metrics else "-")
        if score > best_score:
            best_score, stale = score, 0
            report.best_epoch, report.model = epoch, model
            report.best_valid = valid_metrics
            if run_dir:
                report.best_checkpoint = str(save_model_checkpoint(
                    run_dir / "best.npz", model, config, task, opt, shuffle_rng, epoch))
        else:
            stale += 1
            if stale >= config.patience:
                log.info("early stop after %d epochs without improvement", stale)
                break

    report.final_model = model
    if "test" in task.splits:
        report.test = evaluate_model(report.model, task.splits["test"], task.kind)
    return report


def _divergence_report(epoch, index, chunk, norms):
    return {"epoch": epoch, "chunk": index, "source": chunk.source, "last_grad_norms": norms[-5:]}


def _append_rows(path, rec):
    with open(path, "a", newline="") as f:
        writer = csv.DictWriter(f, METRIC_COLUMNS)
        for split, m in (("train", rec.train), ("valid", rec.valid)):
            if m is not None:
                writer.writerow(_row(rec, split, m))


__all__ = [
    "EpochRecord", "Metrics", "Model", "TaskData", "TrainReport",
    "build_model", "evaluate", "evaluate_model", "load_task_data",
    "make_metrics", "model_from_checkpoint", "save_model_checkpoint", "train",
]
