"""Command-line interface.

Subcommands:
  run      one training run with a held-out slice, reporting the formula,
           its holdout accuracy and the length trace
  cv       k-fold cross-validation with table/csv/json reports
  eval     apply a serialized formula to a CSV and report its accuracy
  inspect  summarize a dataset/schema pair

Exit codes: 0 success, 2 usage, 3 data error, 4 budget expired with no result.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction
from pathlib import Path

from . import __version__
from .dataset import (
    DatasetSpec,
    EncodedDataset,
    Provenance,
    clean,
    load_schema,
    load_table,
    make_folds,
    one_hot_encode,
    scale_to_integers,
)
from .errors import BoolformError, FormulaFormatError, NoIncumbentError
from .formula import accuracy, from_json_obj, render, serialized_leaf_names, to_json_obj
from .fsm import FsmConfig, run_fsm, trace_to_json
from .propositions import Scheme, candidate_grid
from .report import RunConfig, cross_validate, summarize
from .search import Budget

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NO_INCUMBENT = 4

_ENV_PREFIX = "BOOLFORM_"


def _env_float(name: str) -> float | None:
    raw = os.environ.get(_ENV_PREFIX + name)
    return float(raw) if raw else None


def _env_int(name: str) -> int | None:
    raw = os.environ.get(_ENV_PREFIX + name)
    return int(raw) if raw else None


def _add_common(parser: argparse.ArgumentParser, with_scheme: bool = True) -> None:
    parser.add_argument("--data", required=True, help="CSV file with a header row")
    parser.add_argument("--schema", required=True, help="JSON schema file")
    if with_scheme:
        parser.add_argument(
            "--scheme",
            choices=[s.value for s in Scheme],
            default="pivot",
            help="numeric discretization scheme (default pivot)",
        )
        parser.add_argument("--seed", type=int, default=0)
        parser.add_argument("--split-ratio", type=float, default=0.7)
        parser.add_argument("--length-cap", type=int, default=20)
        parser.add_argument(
            "--workers",
            type=int,
            default=_env_int("WORKERS") or 1,
            help="parallel search workers (env BOOLFORM_WORKERS)",
        )
        parser.add_argument(
            "--time-per-length",
            type=float,
            default=_env_float("TIME_PER_LENGTH"),
            help="seconds of search per length bound (env BOOLFORM_TIME_PER_LENGTH)",
        )
        parser.add_argument(
            "--time-total",
            type=float,
            default=_env_float("TIME_TOTAL"),
            help="total seconds across all bounds (env BOOLFORM_TIME_TOTAL)",
        )
        parser.add_argument(
            "--nodes-per-length",
            type=int,
            default=_env_int("NODES_PER_LENGTH"),
            help="search nodes per length bound (env BOOLFORM_NODES_PER_LENGTH)",
        )
        parser.add_argument(
            "--nodes-total",
            type=int,
            default=_env_int("NODES_TOTAL"),
            help="total search nodes (env BOOLFORM_NODES_TOTAL)",
        )


def _budgets(args) -> tuple[Budget, Budget]:
    per_bound = Budget(time_limit=args.time_per_length, node_limit=args.nodes_per_length)
    total = Budget(time_limit=args.time_total, node_limit=args.nodes_total)
    return per_bound, total


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="boolform",
        description="Learn short Boolean formula classifiers from tabular data.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="single training run on a holdout split")
    _add_common(p_run)
    p_run.add_argument(
        "--holdout",
        type=float,
        default=0.1,
        help="fraction held out before training (default 0.1)",
    )
    p_run.add_argument("--formula-out", help="write the formula serialization here")
    p_run.add_argument("--trace-out", help="write the length-trace JSON log here")

    p_cv = sub.add_parser("cv", help="k-fold cross-validation")
    _add_common(p_cv)
    p_cv.add_argument("-k", "--folds", type=int, default=10)
    p_cv.add_argument("--format", choices=["table", "csv", "json"], default="table")
    p_cv.add_argument("--out", help="write the report here instead of stdout")
    p_cv.add_argument(
        "--parallel-folds",
        action="store_true",
        help="spread workers over whole folds instead of each search",
    )

    p_eval = sub.add_parser("eval", help="apply a serialized formula to a CSV")
    _add_common(p_eval, with_scheme=False)
    p_eval.add_argument("--formula", required=True, help="formula JSON file")

    p_inspect = sub.add_parser("inspect", help="summarize a dataset/schema pair")
    _add_common(p_inspect, with_scheme=False)

    return parser


def _load_encoded(args) -> tuple[EncodedDataset, DatasetSpec]:
    spec = load_schema(args.schema)
    table = load_table(args.data, spec)
    cleaned = clean(table, spec.drop_columns, spec.row_filters)
    return scale_to_integers(one_hot_encode(cleaned)), spec


def _require_files(*paths: str) -> None:
    for path in paths:
        if not Path(path).is_file():
            raise _Usage(f"no such file: {path}")


class _Usage(Exception):
    pass


def _cmd_run(args) -> int:
    _require_files(args.data, args.schema)
    if not 0.0 < args.holdout <= 0.5:
        raise _Usage(f"--holdout must be in (0, 0.5], got {args.holdout}")
    ds, _ = _load_encoded(args)
    per_bound, total = _budgets(args)
    plan = make_folds(ds, max(2, round(1.0 / args.holdout)), args.seed)
    held = frozenset(plan.folds[0])
    hold = ds.restrict_ids(plan.folds[0])
    train = ds.restrict_ids([pid for pid in ds.point_ids if pid not in held])
    cfg = FsmConfig(
        scheme=Scheme(args.scheme),
        split_ratio=args.split_ratio,
        seed=args.seed,
        per_bound_budget=per_bound,
        total_budget=total,
        length_cap=args.length_cap,
        workers=args.workers,
    )
    result = run_fsm(train, cfg)
    acc = accuracy(result.final, hold)
    print(f"formula: {render(result.final, ds.provenance)}")
    print(f"chosen length: {result.chosen_length}  size: {result.final.size}")
    print(f"stop reason: {result.stop_reason}")
    print(f"holdout accuracy: {acc} = {float(acc.value):.4f}")
    if args.formula_out:
        payload = to_json_obj(result.final, ds.provenance)
        Path(args.formula_out).write_text(
            json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n",
            encoding="utf-8",
        )
    if args.trace_out:
        Path(args.trace_out).write_text(trace_to_json(result) + "\n", encoding="utf-8")
    return EXIT_OK


def _cmd_cv(args) -> int:
    _require_files(args.data, args.schema)
    spec = load_schema(args.schema)
    table = load_table(args.data, spec)
    cleaned = clean(table, spec.drop_columns, spec.row_filters)
    per_bound, total = _budgets(args)
    cfg = RunConfig(
        data_path=args.data,
        schema_path=args.schema,
        scheme=Scheme(args.scheme),
        seed=args.seed,
        k=args.folds,
        split_ratio=args.split_ratio,
        length_cap=args.length_cap,
        per_bound_budget=per_bound,
        total_budget=total,
        output_format=args.format,
        workers=args.workers,
        parallel_folds=args.parallel_folds,
    )
    report = cross_validate(cleaned, cfg)
    text = summarize(report, args.format)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _augment_missing_categories(
    ds: EncodedDataset, spec: DatasetSpec, names: frozenset[str]
) -> EncodedDataset:
    """Give empty membership to one-hot categories absent from this data.

    A formula trained elsewhere may test a category no evaluation row has;
    semantically that proposition is simply false everywhere here.
    """
    known = {p.display or p.source for p in ds.provenance.values()}
    categorical = {c.name for c in spec.columns if c.kind == "categorical"}
    extra = {}
    next_attr = max(ds.provenance, default=-1) + 1
    for name in sorted(names - known):
        source, sep, category = name.partition("=")
        if sep and source in categorical:
            extra[next_attr] = Provenance(
                source=source, kind="boolean", category=category, display=name
            )
            next_attr += 1
    if not extra:
        return ds
    bool_attrs = dict(ds.bool_attrs)
    for attr in extra:
        bool_attrs[attr] = 0
    provenance = dict(ds.provenance)
    provenance.update(extra)
    return EncodedDataset(
        point_ids=ds.point_ids,
        bool_attrs=bool_attrs,
        num_attrs=ds.num_attrs,
        target=ds.target,
        provenance=provenance,
    )


def _cmd_eval(args) -> int:
    _require_files(args.data, args.schema, args.formula)
    ds, spec = _load_encoded(args)
    try:
        payload = json.loads(Path(args.formula).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormulaFormatError(f"{args.formula}: {exc}") from exc
    ds = _augment_missing_categories(ds, spec, serialized_leaf_names(payload))
    formula = from_json_obj(payload, ds.provenance)
    acc = accuracy(formula, ds)
    print(f"formula: {render(formula, ds.provenance)}")
    print(f"accuracy: {acc} = {float(acc.value):.4f}")
    return EXIT_OK


def _cmd_inspect(args) -> int:
    _require_files(args.data, args.schema)
    spec = load_schema(args.schema)
    table = load_table(args.data, spec)
    cleaned = clean(table, spec.drop_columns, spec.row_filters)
    ds = scale_to_integers(one_hot_encode(cleaned))
    grid = candidate_grid(ds)
    print(f"rows: {table.n_rows} raw, {cleaned.n_rows} after cleaning")
    print(f"target: {spec.target}  positives: {bin(ds.target).count('1')}/{ds.n_points}")
    print(f"encoded attributes: {len(ds.provenance)} "
          f"({len(ds.bool_attrs)} boolean, {len(ds.num_attrs)} numeric)")
    for attr in sorted(ds.provenance):
        prov = ds.provenance[attr]
        if prov.kind == "boolean":
            count = (ds.bool_attrs[attr]).bit_count()
            print(f"  [{attr}] {prov.display}  boolean  true on {count}/{ds.n_points}")
        else:
            values = grid.values[attr]
            lo = Fraction(values[0], prov.factor)
            hi = Fraction(values[-1], prov.factor)
            print(
                f"  [{attr}] {prov.display}  numeric  {len(values)} distinct values "
                f"in [{float(lo):g}, {float(hi):g}] (scale 1/{prov.factor})"
            )
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "cv": _cmd_cv,
        "eval": _cmd_eval,
        "inspect": _cmd_inspect,
    }
    try:
        return handlers[args.command](args)
    except _Usage as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NoIncumbentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_INCUMBENT
    except BoolformError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
