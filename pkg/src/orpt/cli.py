"""``orpt`` command-line entry point.

Exit codes: 0 ok, 2 usage, 3 I/O, 4 state mismatch, 5 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_STATE, EXIT_NUMERIC = 0, 2, 3, 4, 5


class UsageError(Exception):
    pass


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _int_list(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {text!r}") from None


def _common(p):
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--threads", type=_positive_int, default=1, help="worker/BLAS thread cap (default 1)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def _experiment_flags(p):
    p.add_argument("--config", type=Path, help="key=value experiment file; flags override it")
    p.add_argument("--dataset", choices=["mnist", "cifar10"], help="dataset (default mnist)")
    p.add_argument("--cell", choices=["lstm", "rnn", "indrnn"], help="recurrent cell (default lstm)")
    p.add_argument("--direction", choices=["forward", "bidirectional"], help="default forward")
    p.add_argument("--hidden", type=_positive_int, dest="hidden_dim", help="hidden units (default 128)")
    p.add_argument("--batch-size", type=_positive_int, help="minibatch size (default 128)")
    p.add_argument("--epochs", type=_positive_int, help="training epochs (default 5)")
    p.add_argument("--iterations", type=_positive_int, help="stop after this many updates")
    p.add_argument("--lr", type=float, help="Adam learning rate (default 1e-3)")
    p.add_argument("--clip", type=float, help="global gradient-norm clip (default 1)")
    p.add_argument("--train-limit", type=_positive_int, help="use the first N training images")
    p.add_argument("--test-limit", type=_positive_int, help="use the first N test images")
    p.add_argument("--data-dir", help="directory holding the dataset files")
    p.add_argument("--no-eval-train", dest="eval_train", action="store_false", default=None,
                   help="skip the full training-split evaluation")
    p.add_argument("--quick", action="store_true",
                   help="desk-scale profile: hidden 64, 10000 train / 2000 test, 2 epochs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="orpt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("build-matrix", help="write the integer ORPT matrix as text")
    p.add_argument("--n", type=int, required=True, help="matrix size, 1..4096")
    p.add_argument("--out", type=Path, help="output file (default stdout)")
    _common(p)

    p = sub.add_parser("transform", help="subband-transform an image stored as .npy")
    p.add_argument("--d", type=_positive_int, required=True, help="divisor of the image side")
    p.add_argument("--input", type=Path, required=True, help=".npy array (N, N) or (planes, N, N)")
    p.add_argument("--out", type=Path, required=True, help="output .npy")
    p.add_argument("--inverse", action="store_true",
                   help="input is a (planes, d, d, n, n) grid; reconstruct the image")
    _common(p)

    p = sub.add_parser("export-features", help="build a feature-set file from a dataset split")
    p.add_argument("--dataset", choices=["mnist", "cifar10"], required=True)
    p.add_argument("--d", type=_positive_int, required=True, help="divisor of the image side")
    p.add_argument("--split", choices=["train", "test"], required=True)
    p.add_argument("--data-dir", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--limit", type=_positive_int, help="export only the first N images")
    _common(p)

    p = sub.add_parser("train", help="train one classifier and write its report")
    p.add_argument("--d", type=_positive_int, dest="divisor", help="divisor (default 1)")
    _experiment_flags(p)
    p.add_argument("--out", type=Path, default=Path("runs/train"), help="report file prefix")
    p.add_argument("--checkpoint-in", type=Path, help="initialise from this checkpoint")
    p.add_argument("--checkpoint-out", type=Path, help="save final parameters here")
    _common(p)

    p = sub.add_parser("sweep", help="train across divisors and seeds, write CSV tables")
    p.add_argument("--divisors", type=_int_list, required=True, help="e.g. 1,2,4,7")
    p.add_argument("--seeds", type=_int_list, help="comma-separated seeds (default: --seed)")
    _experiment_flags(p)
    p.add_argument("--out", type=Path, default=Path("runs/sweep"), help="output directory")
    _common(p)

    p = sub.add_parser("verify", help="run the invariant suites")
    p.add_argument("--max-n", type=_positive_int, default=128, help="largest N for orthogonality")
    p.add_argument("--suite", action="append", help="run only this suite (repeatable)")
    _common(p)

    p = sub.add_parser("bench", help="time transforms and kernel backends")
    p.add_argument("--batch", type=_positive_int, default=128)
    p.add_argument("--hidden", type=_positive_int, default=128)
    p.add_argument("--min-time", type=float, default=0.2, help="seconds per measurement")
    _common(p)
    return parser


def _config_from_args(args):
    from .harness import ExperimentConfig, load_config, quick

    cfg = ExperimentConfig(seed=args.seed, threads=args.threads)
    if args.config is not None:
        cfg = load_config(args.config, cfg)
    if args.quick:
        cfg = quick(cfg)
    keys = ["dataset", "cell", "direction", "hidden_dim", "batch_size", "epochs", "iterations",
            "lr", "clip", "train_limit", "test_limit", "data_dir", "eval_train"]
    if hasattr(args, "divisor"):
        keys.append("divisor")
    changes = {k: getattr(args, k) for k in keys if getattr(args, k) is not None}
    return cfg.replace(**changes)


def cmd_build_matrix(args):
    from .matrix import MAX_SIZE, build_matrix, format_matrix_text

    if not 1 <= args.n <= MAX_SIZE:
        raise UsageError(f"--n must be in [1, {MAX_SIZE}], got {args.n}")
    R = build_matrix(args.n)
    text = format_matrix_text(R)
    norms = "column norms: " + " ".join(str(int(v)) for v in R.column_norms)
    if args.out is None:
        sys.stdout.write(text)
        print(norms, file=sys.stderr)
    else:
        args.out.write_text(text)
        print(norms)
    return EXIT_OK


def cmd_transform(args):
    from .numtheory import DomainError
    from .subband import inverse_batch, transform_batch

    X = np.load(args.input)
    try:
        if args.inverse:
            if X.ndim == 4:
                X = X[None]
            if X.ndim != 5:
                raise UsageError(f"expected a (planes, d, d, n, n) grid, got {X.shape}")
            out = inverse_batch(X, args.d)
        else:
            if X.ndim == 2:
                X = X[None]
            if X.ndim != 3:
                raise UsageError(f"expected an (N, N) or (planes, N, N) image, got {X.shape}")
            out = transform_batch(X.astype(np.float64), args.d)
    except DomainError as exc:
        raise UsageError(str(exc)) from exc
    np.save(args.out, out)
    print(" ".join(str(s) for s in out.shape))
    return EXIT_OK


def cmd_export_features(args):
    from .datasets import IMAGE_SIDES, build_feature_set, load_dataset

    side = IMAGE_SIDES[args.dataset]
    if side % args.d:
        raise UsageError(f"divisor {args.d} does not divide image side {side}")
    images = load_dataset(args.dataset, args.split, args.data_dir).head(args.limit)
    count, T, F, classes = build_feature_set(images, args.d, args.out, threads=args.threads)
    print(f"{count} {T} {F} {classes}")
    return EXIT_OK


def cmd_train(args):
    from .harness import ConfigError, run_experiment
    from .neural import CheckpointError, load_checkpoint, save_checkpoint

    cfg = _config_from_args(args)
    try:
        cfg.validate()
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc
    ckpt = None
    if args.checkpoint_in is not None:
        try:
            ckpt = load_checkpoint(args.checkpoint_in)
        except CheckpointError as exc:
            print(f"orpt: {exc}", file=sys.stderr)
            return EXIT_STATE
    try:
        report, params = run_experiment(cfg, checkpoint=ckpt)
    except ConfigError as exc:
        print(f"orpt: {exc}", file=sys.stderr)
        return EXIT_STATE
    paths = report.write(args.out)
    if args.checkpoint_out is not None:
        save_checkpoint(params, args.checkpoint_out)
    row = report.summary_row()
    print(" ".join(f"{k}={v}" for k, v in row.items()))
    print(f"wrote {', '.join(str(p) for p in paths.values())}")
    return EXIT_OK


def cmd_sweep(args):
    from .harness import ConfigError, divisor_sweep

    cfg = _config_from_args(args)
    try:
        for d in args.divisors:
            cfg.replace(divisor=d).validate()
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc
    reports = divisor_sweep(cfg, args.divisors, out_dir=args.out, seeds=args.seeds)
    print("d T F params minutes train_eval_pct test_pct")
    for r in reports:
        print(f"{r.config.divisor} {r.timesteps} {r.features} {r.parameters} "
              f"{r.total_minutes:.3f} {r.train_eval_acc:.2f} {r.test_acc:.2f}")
    print(f"wrote {args.out / 'sweep.csv'} and {args.out / 'curves.csv'}")
    return EXIT_OK


def cmd_verify(args):
    from .verify import SUITES, run_suites

    names = args.suite or list(SUITES)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise UsageError(f"unknown suite(s) {unknown}; choose from {sorted(SUITES)}")
    results = run_suites(names, seed=args.seed, max_n=args.max_n)
    width = max(len(r.name) for r in results)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{r.name:<{width}}  {status}  {r.seconds:7.2f}s  {r.detail}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERIC


def cmd_bench(args):
    from . import bench, kernels

    print(f"default kernel backend: {kernels.BACKEND}")
    rows = bench.run(seed=args.seed, batch=args.batch, hidden=args.hidden, min_time=args.min_time)
    width = max(len(r[0]) for r in rows)
    for op, backend, rate in rows:
        print(f"{op:<{width}}  {backend:<7} {rate:14.1f} ops/s")
    return EXIT_OK


COMMANDS = {
    "build-matrix": cmd_build_matrix,
    "transform": cmd_transform,
    "export-features": cmd_export_features,
    "train": cmd_train,
    "sweep": cmd_sweep,
    "verify": cmd_verify,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    from .featureset import FormatError
    from .harness import SweepError
    from .neural import NumericError

    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(message)s",
    )
    try:
        from threadpoolctl import threadpool_limits

        with threadpool_limits(args.threads):
            return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"orpt {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, IsADirectoryError, PermissionError, FormatError) as exc:
        print(f"orpt: {exc}", file=sys.stderr)
        return EXIT_IO
    except SweepError as exc:
        print(f"orpt: {exc}", file=sys.stderr)
        return EXIT_NUMERIC if isinstance(exc.__cause__, NumericError) else EXIT_STATE
    except NumericError as exc:
        print(f"orpt: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
