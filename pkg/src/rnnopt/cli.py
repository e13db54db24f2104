"""Command-line entry point: ``rnnopt {train,evaluate,search,gradcheck,diagnose}``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure (divergence or a failed gradient check).
"""

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from .errors import CheckpointError, ConfigError, DataError, InputError, NumericalError
from .harness import (
    SearchError,
    SearchSpace,
    diagnose,
    evaluate,
    gradcheck,
    load_config,
    load_task_data,
    model_from_checkpoint,
    random_search,
    train,
)
from .harness.config import ExperimentConfig

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _print(obj):
    print(json.dumps(obj, indent=2, default=str))


def _metrics(m):
    return None if m is None else asdict(m)


def cmd_train(args):
    config = load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.run_dir is not None:
        changes["run_dir"] = args.run_dir
    elif config.run_dir is None:
        changes["run_dir"] = str(Path("runs") / Path(args.config).stem)
    config = config.with_updates(**changes)
    report = train(config)
    _print({
        "run_dir": config.run_dir,
        "best_epoch": report.best_epoch,
        "best_checkpoint": report.best_checkpoint,
        "clip_threshold": report.clip_threshold,
        "valid": _metrics(report.best_valid),
        "test": _metrics(report.test),
    })
    return EXIT_OK


def _checkpoint_task(path):
    model, meta = model_from_checkpoint(path)
    config = ExperimentConfig.from_dict(meta["config"])
    task = load_task_data(config, vocab=meta.get("vocab"))
    return model, meta, task


def cmd_evaluate(args):
    model, meta, task = _checkpoint_task(args.checkpoint)
    if args.split not in task.splits:
        raise DataError(f"dataset manifest has no {args.split} split")
    metrics = evaluate((model, meta), task.splits[args.split], task.kind)
    _print({"split": args.split, **asdict(metrics)})
    return EXIT_OK


def cmd_search(args):
    config = load_config(args.config)
    out_dir = args.out or str(Path("runs") / f"{Path(args.config).stem}-search")
    task = load_task_data(config)
    best, board = random_search(SearchSpace(), args.budget, config, seed=args.seed,
                                task=task, parallel=args.parallel, out_dir=out_dir)
    _print({"best": best.to_dict(), "leaderboard": f"{out_dir}/leaderboard.csv",
            "best_valid_mean_ll": board[0].get("valid_mean_ll")})
    return EXIT_OK


def cmd_gradcheck(args):
    report = gradcheck(args.flags)
    for line in report.lines():
        print(line)
    print("PASS" if report.passed else "FAIL")
    return EXIT_OK if report.passed else EXIT_NUMERIC


def cmd_diagnose(args):
    model, _, task = _checkpoint_task(args.checkpoint)
    out = args.out or str(Path(args.checkpoint).with_name("jacobian_norms.csv"))
    table = diagnose(model, task.splits[args.split], args.max_lag, args.positions, args.seed, out)
    _print({"table": out, "mean_leading_eigenvalue": table.mean_leading_eigenvalue,
            "lag1": float(table.mean_norms[0]), f"lag{args.max_lag}": float(table.mean_norms[-1])})
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="rnnopt", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train one configuration")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--run-dir")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("train", "valid", "test"), default="test")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("search", help="random hyperparameter search")
    p.add_argument("--config", required=True)
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--parallel", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("gradcheck", help="BPTT against finite differences")
    p.add_argument("--flags", help="subset of CLRM; omit for the full matrix")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("diagnose", help="Jacobian-product norms per lag")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--max-lag", type=int, required=True)
    p.add_argument("--split", choices=("train", "valid", "test"), default="valid")
    p.add_argument("--positions", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, InputError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CheckpointError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, SearchError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        if getattr(e, "report", None):
            print(json.dumps(e.report, default=str), file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
