"""Acceptance suite: one test per criterion, one pass line per criterion.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the pass lines.
Criteria 7 and 8 need the real BreastCancer/Hepatitis CSV files (see
data/README.md for fetch instructions); without them those tests skip and
say so.
"""

import csv
import io
import json
import os
import random
from fractions import Fraction
from pathlib import Path

import pytest

from boolform.cli import main
from boolform.dataset import clean, load_schema, load_table
from boolform.formula import Formula, Op, accuracy, negate, size
from boolform.fsm import LengthTrace, TraceEntry, early_stop_check, select_length
from boolform.propositions import (
    PropKind,
    Scheme,
    bool_attr,
    candidate_grid,
    interval,
    pivot,
    prop_mask,
)
from boolform.report import RunConfig, cross_validate
from boolform.search import Budget, SearchConfig, best_formula
from util import (
    make_ds,
    oracle_best_accuracy,
    random_ds,
    random_formula,
    scheme_leaves,
)

DATA_DIR = Path(os.environ.get("BOOLFORM_DATA_DIR", Path(__file__).parent.parent / "data"))
REPRO_TIME = float(os.environ.get("BOOLFORM_REPRO_TIME_PER_LENGTH", "600"))
REPRO_WORKERS = int(os.environ.get("BOOLFORM_WORKERS", "4"))

MISSING_DATA = (
    "requires the raw UCI dataset files, which this environment cannot download "
    "(network is restricted to package mirrors); see data/README.md to fetch "
    "{names} and re-run"
)


def passed(criterion: int, message: str) -> None:
    print(f"\nACCEPTANCE {criterion:2d} PASS: {message}")


def test_criterion_01_oracle_equivalence():
    """best_formula equals a brute-force oracle on 1000 random datasets."""
    rng = random.Random(20250810)
    datasets = [random_ds(rng) for _ in range(1000)]
    checked = 0
    for ds in datasets:
        for scheme in Scheme:
            for bound in range(1, 6):
                got = best_formula(ds, SearchConfig(length_bound=bound, scheme=scheme))
                assert got.proved_optimal
                want = oracle_best_accuracy(ds, scheme, bound)
                assert got.train_accuracy.value == want, (
                    f"scheme={scheme} bound={bound}: search "
                    f"{got.train_accuracy.value} != oracle {want}"
                )
                checked += 1
    passed(1, f"search accuracy equals the RPN brute-force oracle on {checked} "
              f"(dataset, scheme, bound) instances, exact rational equality")


def test_criterion_02_size_semantics():
    """size counts every proposition occurrence and connective."""
    p, r = bool_attr(0), bool_attr(2)
    assert size(Formula((p, r, Op.AND, Op.NOT))) == 4
    passed(2, "size(¬(p∧r)) = 4")


def test_criterion_03_grid_sufficiency():
    """Observed-value thresholds realize every integer-threshold Booleanization.

    The comparison set is the grid plus max+1 (the one extra threshold whose
    Booleanization is empty); for intervals, gaps between observed values can
    also realize emptiness, which no grid pair produces.
    """
    rng = random.Random(33)
    pivots_checked = 0
    intervals_checked = 0
    for _ in range(60):
        ds = random_ds(rng)
        grid = candidate_grid(ds)
        for attr in ds.num_attrs:
            gvals = grid.values[attr]
            lo, hi = gvals[0], gvals[-1]
            grid_masks = {prop_mask(pivot(attr, r), ds) for r in gvals}
            grid_masks.add(prop_mask(pivot(attr, hi + 1), ds))
            for r in range(lo - 1, hi + 2):
                assert prop_mask(pivot(attr, r), ds) in grid_masks
                pivots_checked += 1
            all_masks = {prop_mask(pivot(attr, r), ds) for r in range(lo - 1, hi + 2)}
            assert all_masks == grid_masks
            pair_masks = {
                prop_mask(interval(attr, a, b), ds)
                for i, a in enumerate(gvals)
                for b in gvals[i:]
            }
            for a in range(lo - 1, hi + 2):
                for b in range(a, hi + 2):
                    mask = prop_mask(interval(attr, a, b), ds)
                    assert mask in pair_masks or mask == 0
                    intervals_checked += 1
    passed(3, f"{pivots_checked} integer pivots and {intervals_checked} integer "
              f"intervals all matched by grid thresholds (exact set equality)")


def test_criterion_04_dominance_and_monotonicity():
    """Training accuracy is monotone in the bound and interval >= pivot >= median."""
    rng = random.Random(44)
    for _ in range(120):
        ds = random_ds(rng)
        accs = {}
        for scheme in Scheme:
            per_bound = [
                best_formula(ds, SearchConfig(length_bound=b, scheme=scheme))
                .train_accuracy.value
                for b in range(1, 6)
            ]
            assert all(a <= b for a, b in zip(per_bound, per_bound[1:]))
            accs[scheme] = per_bound
        for i in range(5):
            assert accs[Scheme.INTERVAL][i] >= accs[Scheme.PIVOT][i] >= accs[Scheme.MEDIAN][i]
    passed(4, "monotone in the length bound and interval >= pivot >= median on "
              "120 datasets at bounds 1..5, exact comparisons")


def test_criterion_05_complement_law():
    """accuracy(f) + accuracy(not f) = 1, exactly, on 1000 random pairs."""
    rng = random.Random(55)
    for _ in range(1000):
        ds = random_ds(rng)
        scheme = rng.choice(list(Scheme))
        f = random_formula(rng, scheme_leaves(ds, scheme), 7)
        assert accuracy(f, ds).value + accuracy(negate(f), ds).value == Fraction(1)
    passed(5, "accuracy(f) + accuracy(¬f) = 1 on 1000 random (formula, dataset) pairs")


def _write_determinism_dataset(tmp_path: Path):
    rng = random.Random(66)
    lines = ["a,b,c,y"]
    for _ in range(50):
        a, b = rng.randint(0, 15), rng.randint(0, 15)
        c = rng.choice(["u", "v"])
        y = (a >= 8) ^ (c == "v") if rng.random() < 0.8 else rng.random() < 0.5
        lines.append(f"{a},{b},{c},{int(y)}")
    data = tmp_path / "det.csv"
    data.write_text("\n".join(lines) + "\n", encoding="utf-8")
    schema = tmp_path / "det.schema.json"
    schema.write_text(
        json.dumps(
            {
                "columns": [
                    {"name": "a", "kind": "numeric"},
                    {"name": "b", "kind": "numeric"},
                    {"name": "c", "kind": "categorical"},
                    {"name": "y", "kind": "boolean"},
                ],
                "target": "y",
            }
        ),
        encoding="utf-8",
    )
    return data, schema


def test_criterion_06_determinism(tmp_path):
    """cv at workers 1 and 8 yields byte-identical machine reports."""
    data, schema = _write_determinism_dataset(tmp_path)
    outputs = {}
    for fmt in ("csv", "json"):
        for workers in (1, 8):
            for attempt in (0, 1):
                out = tmp_path / f"r_{fmt}_{workers}_{attempt}"
                code = main(
                    [
                        "cv", "--data", str(data), "--schema", str(schema),
                        "--scheme", "interval", "--seed", "9", "-k", "5",
                        "--length-cap", "4",
                        "--nodes-per-length", "20000", "--nodes-total", "60000",
                        "--workers", str(workers),
                        "--format", fmt, "--out", str(out),
                    ]
                )
                assert code == 0
                outputs[(fmt, workers, attempt)] = out.read_bytes()
    for fmt in ("csv", "json"):
        reference = outputs[(fmt, 1, 0)]
        for key, blob in outputs.items():
            if key[0] == fmt:
                assert blob == reference, f"report bytes diverge at {key}"
    passed(6, "cv reports are byte-identical across worker counts 1 and 8 and "
              "across repeated runs (csv and json, node-count budgets)")


# ---------------------------------------------------------------------------
# Criteria 7 and 8: desk-scale reproduction on the real datasets.
# ---------------------------------------------------------------------------

_BC = DATA_DIR / "breast_cancer.csv"
_HEP = DATA_DIR / "hepatitis.csv"


def _cv_on(data_name: str, scheme: Scheme, k: int = 10, seed: int = 1) -> "CvReport":
    spec = load_schema(DATA_DIR / f"{data_name}.schema.json")
    table = load_table(DATA_DIR / f"{data_name}.csv", spec)
    cleaned = clean(table, spec.drop_columns, spec.row_filters)
    cfg = RunConfig(
        data_path=data_name,
        scheme=scheme,
        seed=seed,
        k=k,
        per_bound_budget=Budget(time_limit=REPRO_TIME),
        length_cap=12,
        workers=REPRO_WORKERS,
    )
    return cross_validate(cleaned, cfg)


@pytest.mark.skipif(
    not _BC.is_file(), reason=MISSING_DATA.format(names="breast_cancer.csv")
)
def test_criterion_07a_breast_cancer_reproduction():
    """BreastCancer ten-fold means within +-4pp of the reported 95.5/95.9/95.4."""
    targets = {Scheme.PIVOT: 95.5, Scheme.INTERVAL: 95.9, Scheme.MEDIAN: 95.4}
    results = {}
    for scheme, target in targets.items():
        report = _cv_on("breast_cancer", scheme)
        assert report.complete
        mean_pct = float(report.mean_accuracy) * 100
        assert abs(mean_pct - target) <= 4.0, (
            f"{scheme.value}: mean {mean_pct:.1f} not within 4pp of {target}"
        )
        assert float(report.mean_size) <= 10.0
        results[scheme.value] = mean_pct
    passed(7, "BreastCancer means within tolerance: "
              + ", ".join(f"{k} {v:.1f}" for k, v in results.items()))


@pytest.mark.skipif(
    not _HEP.is_file(), reason=MISSING_DATA.format(names="hepatitis.csv")
)
def test_criterion_07b_hepatitis_reproduction():
    """Hepatitis ten-fold pivot mean within +-6pp of the reported 82.2."""
    report = _cv_on("hepatitis", Scheme.PIVOT)
    assert report.complete
    mean_pct = float(report.mean_accuracy) * 100
    assert abs(mean_pct - 82.2) <= 6.0, f"pivot mean {mean_pct:.1f} not within 6pp of 82.2"
    passed(7, f"Hepatitis pivot mean {mean_pct:.1f} within 6pp of 82.2")


@pytest.mark.skipif(
    not _BC.is_file(), reason=MISSING_DATA.format(names="breast_cancer.csv")
)
def test_criterion_08_formula_shape_regression():
    """First BreastCancer fold under pivot: a negated disjunction of 2-4 pivots."""
    spec = load_schema(DATA_DIR / "breast_cancer.schema.json")
    table = load_table(_BC, spec)
    cleaned = clean(table, spec.drop_columns, spec.row_filters)
    from boolform.dataset import make_folds, one_hot_encode, scale_to_integers
    from boolform.fsm import FsmConfig, run_fsm

    ds = scale_to_integers(one_hot_encode(cleaned))
    plan = make_folds(ds, 10, seed=1)
    held = frozenset(plan.folds[0])
    rest = ds.restrict_ids([pid for pid in ds.point_ids if pid not in held])
    result = run_fsm(
        rest,
        FsmConfig(
            scheme=Scheme.PIVOT,
            seed=1,
            per_bound_budget=Budget(time_limit=REPRO_TIME),
            length_cap=12,
            workers=REPRO_WORKERS,
        ),
    )
    rpn = result.final.rpn
    assert rpn[-1] is Op.NOT, f"expected a negated formula, got {rpn}"
    body = rpn[:-1]
    leaves = [t for t in body if not isinstance(t, Op)]
    ors = [t for t in body if t is Op.OR]
    assert 2 <= len(leaves) <= 4
    assert len(ors) == len(leaves) - 1
    assert all(t.kind is PropKind.PIVOT for t in leaves)
    passed(8, f"first-fold pivot formula is ¬(disjunction of {len(leaves)} pivot leaves)")


def test_criterion_09_fsm_trace_suite():
    """The worked traces for early stopping, back-off, and timeout fallback."""

    def trace_of(*vals):
        entries = []
        for i, v in enumerate(vals):
            acc = type(accuracy(Formula((bool_attr(0),)), make_ds(bools={0: [True]}, target=[True])))(
                agree=round(v * 100), total=100
            )
            entries.append(TraceEntry(i + 1, acc, acc, True, 0.0))
        return LengthTrace(tuple(entries))

    # two strikes and the recovery counterexample
    assert early_stop_check(trace_of(0.9, 0.8, 0.8)) is True
    for upto in range(1, 4):
        assert early_stop_check(trace_of(*(0.9, 0.8, 0.9)[:upto])) is False
    assert early_stop_check(trace_of(0.6)) is False

    # the worked four-entry trace: stop after l=4, delta .85, back off to L=2
    worked = (0.80, 0.85, 0.83, 0.84)
    for upto in range(1, 4):
        assert early_stop_check(trace_of(*worked[:upto])) is False
    final = trace_of(*worked)
    assert early_stop_check(final) is True
    assert final.best_validation == Fraction(85, 100)
    assert select_length(final) == 2

    # back-off selection rules, including the timeout fallback reading
    assert select_length(trace_of(0.7, 0.85, 0.85, 0.8, 0.8)) == 2
    assert select_length(trace_of(0.8, 0.8, 0.8)) == 1
    assert select_length(trace_of(0.6)) == 1
    passed(9, "two-strikes stop, delta back-off, and timeout fallback traces all exact")


def test_criterion_10_no_leakage(monkeypatch):
    """Instrumented cv: zero holdout ids reach grid/median/split/search calls."""
    import boolform.fsm as fsm_module
    import boolform.propositions as propositions_module
    import boolform.search as search_module
    from boolform.dataset import make_folds, one_hot_encode, scale_to_integers

    rng = random.Random(77)
    from boolform.dataset import AttributeSchema, DataTable
    from decimal import Decimal

    rows = []
    for _ in range(50):
        a, b = rng.randint(0, 12), rng.randint(0, 12)
        flag = rng.random() < 0.5
        y = (a >= 6) or flag if rng.random() < 0.8 else rng.random() < 0.5
        rows.append((Decimal(a), Decimal(b), flag, y))
    table = DataTable(
        (
            AttributeSchema("a", "numeric"),
            AttributeSchema("b", "numeric"),
            AttributeSchema("flag", "boolean"),
            AttributeSchema("y", "boolean"),
        ),
        tuple(rows),
        "y",
    )

    observed: list[frozenset] = []

    real_grid = propositions_module.candidate_grid
    real_median = propositions_module.median_of
    real_split = fsm_module.split_train_validation
    real_best = search_module.best_formula

    monkeypatch.setattr(
        propositions_module, "candidate_grid",
        lambda ds: (observed.append(frozenset(ds.point_ids)), real_grid(ds))[1],
    )
    monkeypatch.setattr(
        search_module, "candidate_grid",
        lambda ds: (observed.append(frozenset(ds.point_ids)), real_grid(ds))[1],
    )
    monkeypatch.setattr(
        propositions_module, "median_of",
        lambda ds, attr: (observed.append(frozenset(ds.point_ids)), real_median(ds, attr))[1],
    )
    monkeypatch.setattr(
        fsm_module, "split_train_validation",
        lambda ds, ratio, seed: (observed.append(frozenset(ds.point_ids)), real_split(ds, ratio, seed))[1],
    )
    monkeypatch.setattr(
        search_module, "best_formula",
        lambda ds, cfg: (observed.append(frozenset(ds.point_ids)), real_best(ds, cfg))[1],
    )

    per_fold: list[list[frozenset]] = []
    real_run = fsm_module.run_fsm

    def tracking_run(ds, cfg):
        observed.clear()
        try:
            return real_run(ds, cfg)
        finally:
            per_fold.append(list(observed) + [frozenset(ds.point_ids)])

    monkeypatch.setattr(fsm_module, "run_fsm", tracking_run)

    cfg = RunConfig(
        scheme=Scheme.MEDIAN,
        seed=4,
        k=5,
        length_cap=3,
        per_bound_budget=Budget(node_limit=3000),
    )
    cross_validate(table, cfg)

    plan = make_folds(scale_to_integers(one_hot_encode(table)), cfg.k, cfg.seed)
    assert len(per_fold) == cfg.k
    violations = 0
    calls = 0
    for fold_ids, fold_observed in zip(plan.folds, per_fold):
        held = frozenset(fold_ids)
        assert fold_observed
        for ids in fold_observed:
            calls += 1
            violations += len(ids & held)
    assert violations == 0
    passed(10, f"zero holdout-point leaks across {calls} instrumented "
               f"grid/median/split/search calls in {cfg.k} folds")
