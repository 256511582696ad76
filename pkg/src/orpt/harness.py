"""Divisor-sweep experiments: feature construction, training, reports."""

from __future__ import annotations

import csv
import dataclasses
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .datasets import IMAGE_SIDES, LabeledImageSet, feature_arrays, load_dataset
from .neural import (
    AdamState,
    NumericError,
    RecurrentParams,
    adam_update,
    init_params,
    loss_and_grad,
    predict,
)
from .numtheory import DomainError

log = logging.getLogger(__name__)

IMAGE_SIDE = IMAGE_SIDES


class ConfigError(ValueError):
    pass


class SweepError(RuntimeError):
    def __init__(self, message, rows):
        super().__init__(message)
        self.rows = rows


@dataclass
class ExperimentConfig:
    dataset: str = "mnist"
    divisor: int = 1
    cell: str = "lstm"
    direction: str = "forward"
    hidden_dim: int = 128
    batch_size: int = 128
    epochs: int = 5
    iterations: int | None = None
    seed: int = 0
    lr: float = 1e-3
    clip: float = 1.0
    train_limit: int | None = None
    test_limit: int | None = None
    data_dir: str = "data"
    threads: int = 1
    eval_train: bool = True

    def validate(self) -> None:
        side = IMAGE_SIDE.get(self.dataset)
        if side is None:
            raise ConfigError(f"unknown dataset {self.dataset!r}")
        if self.divisor < 1 or side % self.divisor:
            raise ConfigError(f"divisor {self.divisor} does not divide {side}")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.direction not in ("forward", "bidirectional"):
            raise ConfigError(f"unknown direction {self.direction!r}")
        if self.cell not in ("rnn", "indrnn", "lstm"):
            raise ConfigError(f"unknown cell {self.cell!r}")
        if self.batch_size < 1 or self.hidden_dim < 1:
            raise ConfigError("batch size and hidden size must be positive")

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


QUICK = dict(hidden_dim=64, train_limit=10000, test_limit=2000, epochs=2)


def quick(cfg: ExperimentConfig) -> ExperimentConfig:
    """Desk-scale profile used for fast checks."""
    return cfg.replace(**QUICK)


def _coerce(f: dataclasses.Field, text: str):
    text = text.strip()
    typ = str(f.type)
    if text.lower() in ("none", "") and "None" in typ:
        return None
    if typ.startswith("bool"):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{f.name}: not a boolean: {text!r}")
    try:
        if typ.startswith("int"):
            return int(text)
        if typ.startswith("float"):
            return float(text)
    except ValueError:
        raise ConfigError(f"{f.name}: cannot parse {text!r}") from None
    return text


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """``key = value`` lines; ``#`` starts a comment."""
    fields = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    changes = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in fields:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        changes[key] = _coerce(fields[key], value)
    return (base or ExperimentConfig()).replace(**changes)


def load_config(path, base=None) -> ExperimentConfig:
    return parse_config(Path(path).read_text(), base)


@dataclass
class TrainReport:
    config: ExperimentConfig
    timesteps: int
    features: int
    parameters: int
    losses: list[float] = field(default_factory=list)
    batch_accuracy: list[float] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)
    train_running_acc: float = float("nan")
    train_eval_acc: float = float("nan")
    test_acc: float = float("nan")
    feature_seconds: float = 0.0

    @property
    def iterations(self) -> int:
        return len(self.losses)

    @property
    def total_minutes(self) -> float:
        return sum(self.epoch_seconds) / 60.0

    @property
    def cumulative_seconds(self) -> list[float]:
        return list(np.cumsum(self.epoch_seconds))

    def summary_row(self, timing: bool = True) -> dict:
        row = {
            "dataset": self.config.dataset,
            "cell": self.config.cell,
            "direction": self.config.direction,
            "d": self.config.divisor,
            "T": self.timesteps,
            "F": self.features,
            "params": self.parameters,
            "seed": self.config.seed,
            "iterations": self.iterations,
        }
        if timing:
            row["minutes"] = repr(self.total_minutes)
        row.update(
            train_running_pct=repr(self.train_running_acc),
            train_eval_pct=repr(self.train_eval_acc),
            test_pct=repr(self.test_acc),
        )
        return row

    def write(self, prefix) -> dict[str, Path]:
        """Write ``<prefix>_summary.csv``, ``_curve.csv`` and ``_timing.csv``.

        Summary and curve files hold no wall-clock values, so a rerun with the
        same seed reproduces them byte for byte.
        """
        prefix = Path(prefix)
        prefix.parent.mkdir(parents=True, exist_ok=True)
        paths = {k: prefix.with_name(f"{prefix.name}_{k}.csv") for k in ("summary", "curve", "timing")}
        summary = self.summary_row(timing=False)
        write_csv(paths["summary"], list(summary), [summary])
        write_csv(
            paths["curve"],
            ["iteration", "loss", "batch_acc_pct"],
            [
                {"iteration": i + 1, "loss": repr(l), "batch_acc_pct": repr(a)}
                for i, (l, a) in enumerate(zip(self.losses, self.batch_accuracy))
            ],
        )
        write_csv(
            paths["timing"],
            ["epoch", "seconds", "cumulative_seconds"],
            [
                {"epoch": i + 1, "seconds": repr(s), "cumulative_seconds": repr(float(c))}
                for i, (s, c) in enumerate(zip(self.epoch_seconds, self.cumulative_seconds))
            ],
        )
        return paths


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=header, lineterminator="\r\n")
        w.writeheader()
        w.writerows(rows)


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def load_splits(cfg: ExperimentConfig):
    train = load_dataset(cfg.dataset, "train", cfg.data_dir).head(cfg.train_limit)
    test = load_dataset(cfg.dataset, "test", cfg.data_dir).head(cfg.test_limit)
    return train, test


def accuracy_pct(p: RecurrentParams, X, y) -> float:
    if len(y) == 0:
        return float("nan")
    return float(np.mean(predict(p, X) == y) * 100.0)


def run_experiment(
    cfg: ExperimentConfig,
    train: LabeledImageSet | None = None,
    test: LabeledImageSet | None = None,
    checkpoint: RecurrentParams | None = None,
) -> tuple[TrainReport, RecurrentParams]:
    """Train one recurrent classifier on ORPT features and evaluate it."""
    cfg.validate()
    if train is None or test is None:
        train, test = load_splits(cfg)
    else:
        train, test = train.head(cfg.train_limit), test.head(cfg.test_limit)
    if train.side % cfg.divisor:
        raise ConfigError(f"divisor {cfg.divisor} does not divide image side {train.side}")

    with threadpool_limits(cfg.threads):
        t0 = time.perf_counter()
        try:
            Xtr, ytr = feature_arrays(train, cfg.divisor, threads=cfg.threads)
            Xte, yte = feature_arrays(test, cfg.divisor, threads=cfg.threads)
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc
        feature_seconds = time.perf_counter() - t0
        T, F = Xtr.shape[1:]
        bi = cfg.direction == "bidirectional"
        if checkpoint is not None:
            want = (cfg.cell, F, cfg.hidden_dim, train.class_count, bi)
            have = (checkpoint.cell_kind, checkpoint.input_dim, checkpoint.hidden_dim,
                    checkpoint.classes, checkpoint.bidirectional)
            if want != have:
                raise ConfigError(f"checkpoint {have} does not match experiment {want}")
            params = checkpoint.astype(np.float32)
        else:
            params = init_params(cfg.cell, F, cfg.hidden_dim, train.class_count, bi, seed=cfg.seed)
        report = TrainReport(cfg, T, F, params.size(), feature_seconds=feature_seconds)
        params = _train(params, Xtr, ytr.astype(np.int64), cfg, report)
        if cfg.eval_train:
            report.train_eval_acc = accuracy_pct(params, Xtr, ytr)
        report.test_acc = accuracy_pct(params, Xte, yte)
    log.info(
        "d=%d %s/%s: %.2f min, train %.2f%%, test %.2f%%",
        cfg.divisor, cfg.cell, cfg.direction, report.total_minutes,
        report.train_eval_acc, report.test_acc,
    )
    return report, params


def _train(params, X, y, cfg, report):
    n = len(y)
    per_epoch = n // cfg.batch_size
    if per_epoch == 0:
        raise ConfigError(f"batch size {cfg.batch_size} exceeds training set of {n}")
    total = cfg.iterations if cfg.iterations is not None else cfg.epochs * per_epoch
    rng = np.random.default_rng(cfg.seed + 1_000_003)
    state = AdamState()
    done = 0
    while done < total:
        order = rng.permutation(n)
        start = time.perf_counter()
        for b in range(per_epoch):
            if done >= total:
                break
            idx = np.sort(order[b * cfg.batch_size : (b + 1) * cfg.batch_size])
            xb, yb = X[idx], y[idx]
            try:
                loss, grad, logits = loss_and_grad(params, xb, yb, with_logits=True)
            except NumericError as exc:
                raise NumericError(f"iteration {done + 1}: {exc}") from exc
            params = adam_update(params, grad, state, lr=cfg.lr, clip=cfg.clip)
            report.losses.append(loss)
            report.batch_accuracy.append(float(np.mean(np.argmax(logits, 1) == yb) * 100.0))
            done += 1
        report.epoch_seconds.append(time.perf_counter() - start)
    window = report.batch_accuracy[-per_epoch:]
    report.train_running_acc = float(np.mean(window))
    return params


SWEEP_COLUMNS = [
    "dataset", "cell", "direction", "d", "T", "F", "params", "seed", "iterations",
    "minutes", "train_running_pct", "train_eval_pct", "test_pct", "status",
]


def divisor_sweep(
    base: ExperimentConfig,
    divisors,
    out_dir=None,
    seeds=None,
    train: LabeledImageSet | None = None,
    test: LabeledImageSet | None = None,
) -> list[TrainReport]:
    """Run one experiment per (divisor, seed), sequentially.

    Writes ``sweep.csv`` (one row per run) and ``curves.csv`` (per-iteration
    loss and minibatch accuracy) into ``out_dir`` when given. A failing run
    stops the sweep; the rows written so far are kept and the failure is
    recorded with ``status=failed`` before :class:`SweepError` is raised.
    """
    divisors = list(divisors)
    seeds = [base.seed] if seeds is None else list(seeds)
    for d in divisors:
        base.replace(divisor=d).validate()
    if divisors and (train is None or test is None):
        train, test = load_splits(base)
    reports, rows, curves = [], [], []
    error = None
    for d in divisors:
        for seed in seeds:
            cfg = base.replace(divisor=d, seed=seed)
            try:
                report, _ = run_experiment(cfg, train, test)
            except Exception as exc:  # noqa: BLE001 - recorded, then re-raised
                row = {k: "" for k in SWEEP_COLUMNS}
                row.update(dataset=cfg.dataset, cell=cfg.cell, direction=cfg.direction,
                           d=d, seed=seed, status="failed")
                rows.append(row)
                error = exc
                break
            reports.append(report)
            rows.append({**report.summary_row(), "status": "ok"})
            curves += [
                {"d": d, "seed": seed, "iteration": i + 1, "loss": repr(l), "batch_acc_pct": repr(a)}
                for i, (l, a) in enumerate(zip(report.losses, report.batch_accuracy))
            ]
        if error is not None:
            break
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "sweep.csv", SWEEP_COLUMNS, rows)
        write_csv(out / "curves.csv", ["d", "seed", "iteration", "loss", "batch_acc_pct"], curves)
    if error is not None:
        raise SweepError(f"sweep aborted at d={rows[-1]['d']}: {error}", rows) from error
    return reports


def timing_ratio(report_a, report_b) -> float:
    """Total training minutes of ``report_b`` divided by those of ``report_a``."""
    a = getattr(report_a, "total_minutes", report_a)
    b = getattr(report_b, "total_minutes", report_b)
    if not a or not b:
        raise NumericError("timing ratio needs non-zero durations")
    return float(b) / float(a)
