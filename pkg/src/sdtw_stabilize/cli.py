"""Command-line interface: ``sdtw-stabilize <command> ...``.

Commands::

    align         cost matrix, soft-DTW cost and soft alignment for two sequences
    prior         diagonal prior matrix
    oracle-check  dynamic program vs. brute-force enumeration
    train         one training run from a JSON config
    sweep         multi-strategy, multi-seed comparison from a JSON config

Matrices are written as headerless CSV, one row per line, with floats in
shortest round-trip form. Every file is written to a temporary name and then
renamed into place.

Exit codes: 0 success, 2 parse error, 3 missing input file, 4 invalid
configuration or shape mismatch, 5 oracle verification failure, 6 training
collapse.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import kernel, oracle, stabilizers
from .model import predictor_forward
from .tasks import SyntheticTaskConfig, generate_task
from .training import (
    COLLAPSE_THRESHOLD,
    LossStrategy,
    TrainConfig,
    default_strategies,
    evaluate,
    loss_targets,
    run_experiment,
    train,
)

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_NOT_FOUND = 3
EXIT_INVALID = 4
EXIT_VERIFY = 5
EXIT_COLLAPSE = 6


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# I/O helpers


def _fmt(x) -> str:
    return repr(float(x))


def _atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def matrix_to_csv(M) -> str:
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    return "".join(",".join(_fmt(v) for v in row) + "\n" for row in M)


def write_matrix(path, M) -> None:
    _atomic_write(path, matrix_to_csv(M))


def write_json(path, obj) -> None:
    _atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_table(path, header, rows) -> None:
    """CSV with a header line; floats rendered in round-trip form."""
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for key in header:
            v = row[key]
            cells.append(_fmt(v) if isinstance(v, (float, np.floating)) else str(v))
        lines.append(",".join(cells))
    _atomic_write(path, "\n".join(lines) + "\n")


def read_matrix(path) -> np.ndarray:
    """Read a headerless numeric CSV into a 2-D float64 array."""
    path = Path(path)
    if not path.is_file():
        raise CliError(f"no such file: {path}", EXIT_NOT_FOUND)
    try:
        with open(path, newline="") as fh:
            rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
    except ValueError as exc:
        raise CliError(f"{path}: {exc}", EXIT_PARSE) from exc
    if not rows:
        raise CliError(f"{path}: empty file", EXIT_PARSE)
    if len({len(r) for r in rows}) != 1:
        raise CliError(f"{path}: ragged rows", EXIT_PARSE)
    return np.array(rows, dtype=np.float64)


def read_config(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise CliError(f"no such file: {path}", EXIT_NOT_FOUND)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: {exc}", EXIT_PARSE) from exc
    if not isinstance(doc, dict):
        raise CliError(f"{path}: config must be a JSON object", EXIT_PARSE)
    return doc


def _validated(build, what: str):
    try:
        return build()
    except (TypeError, ValueError, KeyError) as exc:
        raise CliError(f"invalid {what}: {exc}", EXIT_INVALID) from exc


# ---------------------------------------------------------------------------
# commands


def cmd_align(args) -> int:
    X = read_matrix(args.pred)
    Y = read_matrix(args.target)
    if X.shape[1] != Y.shape[1]:
        raise CliError(f"dimension mismatch: pred has {X.shape[1]} columns, target {Y.shape[1]}", EXIT_INVALID)
    if not args.gamma > 0:
        raise CliError("gamma must be positive", EXIT_INVALID)
    C = kernel.cost_matrix(X, Y)
    C_used = C
    omega = args.prior_omega
    if omega > 0:
        P = _validated(lambda: stabilizers.diagonal_prior(*C.shape, args.prior_nu), "prior")
        C_used = stabilizers.apply_prior(C, P, omega)
    result = kernel.sdtw_forward(C_used, args.gamma)
    E = kernel.soft_alignment(result, C_used)

    out = Path(args.out)
    write_matrix(out / "cost_matrix.csv", C)
    write_matrix(out / "alignment.csv", E)
    write_matrix(out / "cost.csv", [[result.cost]])
    write_json(out / "meta.json", {
        "gamma": args.gamma,
        "omega": omega,
        "nu": args.prior_nu if omega > 0 else None,
        "pred_shape": list(X.shape),
        "target_shape": list(Y.shape),
        "cost_matrix_shape": list(C.shape),
        "cost": result.cost,
    })
    print(f"cost {_fmt(result.cost)}  ({C.shape[0]}x{C.shape[1]}, gamma={args.gamma:g}, omega={omega:g})")
    return EXIT_OK


def cmd_prior(args) -> int:
    P = _validated(lambda: stabilizers.diagonal_prior(args.rows, args.cols, args.nu), "prior")
    write_matrix(args.out, P)
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    limit = oracle.ENUMERATION_LIMIT
    if not (1 <= args.max_n <= limit and 1 <= args.max_m <= limit):
        raise CliError(f"sizes must lie in [1, {limit}]", EXIT_INVALID)
    if args.trials < 0:
        raise CliError("trials must be nonnegative", EXIT_INVALID)
    try:
        gammas = tuple(float(g) for g in args.gammas.split(","))
    except ValueError as exc:
        raise CliError(f"bad --gammas: {exc}", EXIT_PARSE) from exc
    if not all(g > 0 for g in gammas):
        raise CliError("gammas must be positive", EXIT_INVALID)
    report = oracle.oracle_check(args.max_n, args.max_m, args.trials, gammas, seed=args.seed)
    print(json.dumps(report.to_dict(), indent=2))
    print("PASS" if report.passed else "FAIL")
    return EXIT_OK if report.passed else EXIT_VERIFY


def _task_from(doc) -> SyntheticTaskConfig:
    return _validated(lambda: SyntheticTaskConfig.from_dict(doc.get("task", {})), "task config")


def _snapshot(params, example, strategy, epoch, context):
    gamma = strategy.gamma_at(epoch)
    omega = strategy.omega_at(epoch)
    X = predictor_forward(params, example.input, context)
    C = kernel.cost_matrix(X, loss_targets(example, strategy))
    if omega > 0:
        C = stabilizers.apply_prior(C, stabilizers.diagonal_prior(*C.shape, strategy.prior.nu), omega)
    return kernel.soft_alignment(kernel.sdtw_forward(C, gamma), C)


HISTORY_COLUMNS = ("epoch", "train_loss", "val_loss", "gamma", "omega", "learning_rate")


def cmd_train(args) -> int:
    doc = read_config(args.config)
    task_cfg = _task_from(doc)
    config = _validated(lambda: TrainConfig.from_dict(doc.get("train", {})), "train config")
    snapshots = bool(doc.get("snapshots", False))
    task = generate_task(task_cfg)
    out = Path(args.out)

    callback = None
    if snapshots and config.strategy.kind != "strong_mse":
        held_out = task.val[0]

        def callback(epoch, params, gamma, omega):
            E = _snapshot(params, held_out, config.strategy, epoch, config.context_frames)
            write_matrix(out / "snapshots" / f"epoch_{epoch:03d}.csv", E)

    model = train(task, config, on_epoch_end=callback)
    f = evaluate(model, task.test)
    collapsed = bool(model.collapsed or f < COLLAPSE_THRESHOLD)
    write_table(out / "history.csv", HISTORY_COLUMNS, model.history)
    write_json(out / "metrics.json", {
        "strategy": config.strategy.name,
        "test_f_measure": f,
        "best_epoch": model.best_epoch,
        "epochs_run": len(model.history),
        "stop_reason": model.stop_reason,
        "non_finite": model.collapsed,
        "collapsed": collapsed,
    })
    write_json(out / "config.json", {"task": task_cfg.to_dict(), "train": config.to_dict(), "snapshots": snapshots})
    print(f"{config.strategy.name}: test F {f:.4f}, best epoch {model.best_epoch}, {model.stop_reason}")
    return EXIT_COLLAPSE if collapsed else EXIT_OK


def cmd_sweep(args) -> int:
    doc = read_config(args.config)
    task_cfg = _task_from(doc)

    def build():
        base = TrainConfig.from_dict(doc.get("base", {}))
        if "strategies" in doc:
            strategies = [LossStrategy.from_dict(s) for s in doc["strategies"]]
        else:
            strategies = default_strategies()
        n_seeds = int(doc.get("n_seeds", 10))
        if n_seeds < 1 or not strategies:
            raise ValueError("need n_seeds >= 1 and at least one strategy")
        if len({s.name for s in strategies}) != len(strategies):
            raise ValueError("duplicate strategies")
        return base, strategies, n_seeds, int(doc.get("master_seed", 0))

    base, strategies, n_seeds, master_seed = _validated(build, "sweep config")
    summary = run_experiment(generate_task(task_cfg), strategies, n_seeds, master_seed, base)

    out = Path(args.out)
    write_table(out / "summary.csv", ("strategy", "mean_f", "std_f", "collapse_count"), summary.table())
    write_table(out / "per_seed.csv",
                ("strategy", "seed", "f_measure", "collapsed", "best_epoch", "epochs_run", "stop_reason"),
                summary.runs)
    write_json(out / "summary.json", summary.to_dict())
    write_json(out / "config.json", {
        "task": task_cfg.to_dict(),
        "base": {k: v for k, v in base.to_dict().items() if k not in ("strategy", "seed")},
        "strategies": [s.to_dict() for s in strategies],
        "n_seeds": n_seeds,
        "master_seed": master_seed,
    })
    for row in summary.table():
        print(f"{row['strategy']:32s} mean F {row['mean_f']:.3f}  std {row['std_f']:.3f}  "
              f"collapses {row['collapse_count']}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sdtw-stabilize", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("align", help="soft alignment between two CSV sequences")
    p.add_argument("--pred", required=True, help="CSV, one frame per row")
    p.add_argument("--target", required=True, help="CSV, one frame per row")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--prior-nu", type=float, default=1000.0)
    p.add_argument("--prior-omega", type=float, default=0.0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("prior", help="diagonal prior matrix as CSV")
    p.add_argument("--rows", type=int, required=True)
    p.add_argument("--cols", type=int, required=True)
    p.add_argument("--nu", type=float, default=1000.0)
    p.add_argument("--out", required=True, help="output CSV file")
    p.set_defaults(func=cmd_prior)

    p = sub.add_parser("oracle-check", help="compare the DP against brute-force enumeration")
    p.add_argument("--max-n", type=int, default=6)
    p.add_argument("--max-m", type=int, default=6)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--gammas", default="0.1,1,10", help="comma-separated list")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("train", help="single training run")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="strategy x seed comparison")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
