"""Ten-fold cross-validation harness and report rendering.

Holdout points never reach any grid, median, split, or search input: each
fold's model is trained on the complement dataset only, and the holdout slice
is touched exactly once, to score the final formula.
"""

from __future__ import annotations

import csv
import io
import json
import math
import multiprocessing
import time
from dataclasses import dataclass
from fractions import Fraction

from . import fsm as fsm_mod
from .dataset import DataTable, EncodedDataset, make_folds, one_hot_encode, scale_to_integers
from .errors import BoolformError
from .formula import Accuracy, Formula, accuracy, render, to_json_obj
from .fsm import FsmConfig, FsmResult
from .propositions import Scheme
from .search import Budget


@dataclass(frozen=True)
class RunConfig:
    data_path: str = ""
    schema_path: str = ""
    scheme: Scheme = Scheme.PIVOT
    seed: int = 0
    k: int = 10
    split_ratio: float = 0.7
    length_cap: int = 20
    per_bound_budget: Budget = Budget()
    total_budget: Budget = Budget()
    output_format: str = "table"
    workers: int = 1
    parallel_folds: bool = False  # workers spread over folds instead of the search

    def __post_init__(self) -> None:
        if self.k < 2:
            raise ValueError("cross-validation needs k >= 2")

    @property
    def deterministic_timing(self) -> bool:
        """Node-limited runs redact wall-clock fields in machine formats."""
        has_nodes = (
            self.per_bound_budget.node_limit is not None
            or self.total_budget.node_limit is not None
        )
        has_time = (
            self.per_bound_budget.time_limit is not None
            or self.total_budget.time_limit is not None
        )
        return has_nodes and not has_time


@dataclass(frozen=True)
class FoldRecord:
    fold: int
    formula_text: str = ""
    formula_rpn: tuple = ()
    chosen_length: int = 0
    formula_size: int = 0
    holdout_accuracy: Accuracy | None = None
    stop_reason: str = ""
    elapsed: float = 0.0
    error: str | None = None


@dataclass(frozen=True)
class CvReport:
    dataset: str
    scheme: Scheme
    seed: int
    k: int
    records: tuple[FoldRecord, ...]
    deterministic_timing: bool = False

    @property
    def complete(self) -> bool:
        return all(r.error is None for r in self.records)

    @property
    def successful(self) -> tuple[FoldRecord, ...]:
        return tuple(r for r in self.records if r.error is None)

    @property
    def mean_accuracy(self) -> Fraction | None:
        good = self.successful
        if not good:
            return None
        return sum((r.holdout_accuracy.value for r in good), Fraction(0)) / len(good)

    @property
    def std_accuracy(self) -> float | None:
        """Sample standard deviation of the fold accuracies."""
        good = self.successful
        if len(good) < 2:
            return None
        mean = self.mean_accuracy
        var = sum(((r.holdout_accuracy.value - mean) ** 2 for r in good), Fraction(0))
        return math.sqrt(var / (len(good) - 1))

    @property
    def mean_size(self) -> Fraction | None:
        good = self.successful
        if not good:
            return None
        return Fraction(sum(r.formula_size for r in good), len(good))


def derive_fold_seed(master_seed: int, fold_index: int) -> int:
    """Deterministic per-fold seed so folds are independent yet reproducible."""
    return (master_seed * 1_000_003 + 10_007 * fold_index + 1) % (2**31 - 1)


def holdout_accuracy(f: Formula, hold: EncodedDataset) -> Accuracy:
    """Score a trained formula on held-out points; thresholds are never refit."""
    return accuracy(f, hold)


def _run_fold(args: tuple) -> FoldRecord:
    fold_index, rest, hold, fsm_cfg, provenance = args
    start = time.monotonic()
    try:
        result: FsmResult = fsm_mod.run_fsm(rest, fsm_cfg)
        return FoldRecord(
            fold=fold_index,
            formula_text=render(result.final, provenance),
            formula_rpn=tuple(to_json_obj(result.final, provenance)["rpn"]),
            chosen_length=result.chosen_length,
            formula_size=result.final.size,
            holdout_accuracy=holdout_accuracy(result.final, hold),
            stop_reason=result.stop_reason,
            elapsed=time.monotonic() - start,
        )
    except BoolformError as exc:
        return FoldRecord(fold=fold_index, elapsed=time.monotonic() - start, error=str(exc))


def cross_validate(table: DataTable, cfg: RunConfig) -> CvReport:
    """Ten-fold (or k-fold) cross-validation of the full training loop.

    The table must already be cleaned; one-hot encoding and integer scaling
    are applied here, once, before folding (both are pure per-column recodings
    fixed by the schema, so they leak nothing about the target).

    Folds run sequentially by default; with ``parallel_folds`` the workers run
    whole folds concurrently (each fold's search then single-threaded, since
    pool workers cannot fork again).  Either way the records are assembled in
    fold order, so reports do not depend on the mode.
    """
    ds = scale_to_integers(one_hot_encode(table))
    if ds.n_points < cfg.k:
        raise BoolformError(f"{ds.n_points} points cannot support {cfg.k} folds")
    plan = make_folds(ds, cfg.k, cfg.seed)
    use_fold_pool = cfg.parallel_folds and cfg.workers > 1
    tasks = []
    for i, fold_ids in enumerate(plan.folds):
        hold = ds.restrict_ids(fold_ids)
        held = frozenset(fold_ids)
        rest = ds.restrict_ids([pid for pid in ds.point_ids if pid not in held])
        fsm_cfg = FsmConfig(
            scheme=cfg.scheme,
            split_ratio=cfg.split_ratio,
            seed=derive_fold_seed(cfg.seed, i),
            per_bound_budget=cfg.per_bound_budget,
            total_budget=cfg.total_budget,
            length_cap=cfg.length_cap,
            workers=1 if use_fold_pool else cfg.workers,
        )
        tasks.append((i, rest, hold, fsm_cfg, ds.provenance))

    if use_fold_pool:
        with multiprocessing.get_context("fork").Pool(min(cfg.workers, cfg.k)) as pool:
            records = pool.map(_run_fold, tasks)
    else:
        records = [_run_fold(task) for task in tasks]
    return CvReport(
        dataset=cfg.data_path,
        scheme=cfg.scheme,
        seed=cfg.seed,
        k=cfg.k,
        records=tuple(records),
        deterministic_timing=cfg.deterministic_timing,
    )


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------


def _elapsed_text(report: CvReport, seconds: float) -> str:
    if report.deterministic_timing:
        return "0.000"
    return f"{seconds:.3f}"


def _fmt_float(x: float | Fraction | None, digits: int = 3) -> str:
    if x is None:
        return ""
    return f"{float(x):.{digits}f}"


def summarize(report: CvReport, fmt: str) -> str:
    """Render a report as a human table, CSV, or JSON text."""
    if fmt == "table":
        return _summarize_table(report)
    if fmt == "csv":
        return _summarize_csv(report)
    if fmt == "json":
        return _summarize_json(report)
    raise ValueError(f"unknown report format {fmt!r}")


def _summarize_table(report: CvReport) -> str:
    lines = [
        f"dataset: {report.dataset or '-'}   scheme: {report.scheme.value}   "
        f"k: {report.k}   seed: {report.seed}",
        "std is the sample standard deviation over fold accuracies",
        "",
        f"{'fold':>4}  {'accuracy':>8}  {'size':>4}  {'L':>2}  {'stop':<10}  "
        f"{'elapsed_s':>9}  formula",
    ]
    for r in report.records:
        if r.error is not None:
            lines.append(f"{r.fold:>4}  {'-':>8}  {'-':>4}  {'-':>2}  {'error':<10}  "
                         f"{r.elapsed:>9.3f}  {r.error}")
            continue
        lines.append(
            f"{r.fold:>4}  {_fmt_float(r.holdout_accuracy.value):>8}  "
            f"{r.formula_size:>4}  {r.chosen_length:>2}  {r.stop_reason:<10}  "
            f"{r.elapsed:>9.3f}  {r.formula_text}"
        )
    lines.append("")
    lines.append(
        f"mean accuracy {_fmt_float(report.mean_accuracy)} "
        f"(std {_fmt_float(report.std_accuracy)}), "
        f"mean formula size {_fmt_float(report.mean_size)}"
        + ("" if report.complete else "  [INCOMPLETE: some folds failed]")
    )
    return "\n".join(lines) + "\n"


def _summarize_csv(report: CvReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["fold", "accuracy", "length", "L", "stop_reason", "elapsed_s", "formula"])
    for r in report.records:
        if r.error is not None:
            writer.writerow([r.fold, "", "", "", "error", _elapsed_text(report, r.elapsed), r.error])
            continue
        writer.writerow(
            [
                r.fold,
                f"{float(r.holdout_accuracy.value):.6f}",
                r.formula_size,
                r.chosen_length,
                r.stop_reason,
                _elapsed_text(report, r.elapsed),
                r.formula_text,
            ]
        )
    writer.writerow(
        [
            "mean",
            _fmt_float(report.mean_accuracy, 6),
            _fmt_float(report.mean_size, 6),
            "",
            "",
            _elapsed_text(report, sum(r.elapsed for r in report.records)),
            f"std={_fmt_float(report.std_accuracy, 6)}",
        ]
    )
    return buf.getvalue()


def _summarize_json(report: CvReport) -> str:
    folds = []
    for r in report.records:
        if r.error is not None:
            folds.append(
                {
                    "fold": r.fold,
                    "error": r.error,
                    "elapsed_s": _elapsed_text(report, r.elapsed),
                }
            )
            continue
        folds.append(
            {
                "fold": r.fold,
                "formula": r.formula_text,
                "rpn": list(r.formula_rpn),
                "L": r.chosen_length,
                "size": r.formula_size,
                "holdout_accuracy": [r.holdout_accuracy.agree, r.holdout_accuracy.total],
                "stop_reason": r.stop_reason,
                "elapsed_s": _elapsed_text(report, r.elapsed),
            }
        )
    mean = report.mean_accuracy
    payload = {
        "dataset": report.dataset,
        "scheme": report.scheme.value,
        "seed": report.seed,
        "k": report.k,
        "std_kind": "sample",
        "complete": report.complete,
        "folds": folds,
        "aggregate": {
            "mean_accuracy": None if mean is None else [mean.numerator, mean.denominator],
            "mean_accuracy_value": None if mean is None else float(mean),
            "std_accuracy": report.std_accuracy,
            "mean_size": None if report.mean_size is None else float(report.mean_size),
        },
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n"
