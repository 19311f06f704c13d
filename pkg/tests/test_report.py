import csv
import io
import json
import math
import random
from decimal import Decimal
from fractions import Fraction

import pytest

import boolform.fsm
import boolform.report
import boolform.search
from boolform.dataset import AttributeSchema, DataTable
from boolform.formula import Formula, accuracy
from boolform.propositions import Scheme, bool_attr, pivot
from boolform.report import (
    CvReport,
    FoldRecord,
    RunConfig,
    cross_validate,
    derive_fold_seed,
    holdout_accuracy,
    summarize,
)
from boolform.search import Budget
from util import make_ds


def separable_table(n=100, seed=6):
    """Synthetic table where one boolean column equals the target."""
    rng = random.Random(seed)
    schema = (
        AttributeSchema("flag", "boolean"),
        AttributeSchema("noise", "numeric"),
        AttributeSchema("y", "boolean"),
    )
    rows = []
    for _ in range(n):
        y = rng.random() < 0.5
        rows.append((y, Decimal(rng.randint(0, 30)), y))
    return DataTable(schema, tuple(rows), "y")


def noisy_table(n=60, seed=16):
    rng = random.Random(seed)
    schema = (
        AttributeSchema("a", "numeric"),
        AttributeSchema("b", "numeric"),
        AttributeSchema("y", "boolean"),
    )
    rows = []
    for _ in range(n):
        a, b = rng.randint(0, 20), rng.randint(0, 20)
        y = (a + b > 20) if rng.random() < 0.85 else (rng.random() < 0.5)
        rows.append((Decimal(a), Decimal(b), y))
    return DataTable(schema, tuple(rows), "y")


FAST = RunConfig(
    data_path="synthetic",
    scheme=Scheme.PIVOT,
    seed=11,
    k=5,
    length_cap=4,
    per_bound_budget=Budget(node_limit=4000),
    total_budget=Budget(node_limit=20000),
)


class TestHoldoutAccuracy:
    def test_base_rate_for_constant_true(self):
        hold = make_ds(
            nums={0: [3, 5, 9, 2, 7]},
            target=[True, True, True, False, False],
        )
        always_true = Formula((pivot(0, 2),))
        assert holdout_accuracy(always_true, hold).value == Fraction(3, 5)

    def test_perfect_formula(self):
        hold = make_ds(bools={0: [True, False]}, target=[True, False])
        assert holdout_accuracy(Formula((bool_attr(0),)), hold).value == 1

    def test_complement_law_on_folds(self):
        rng = random.Random(21)
        from boolform.formula import negate

        for _ in range(20):
            n = rng.randint(3, 10)
            hold = make_ds(
                nums={0: [rng.randint(0, 9) for _ in range(n)]},
                target=[rng.random() < 0.5 for _ in range(n)],
            )
            f = Formula((pivot(0, rng.randint(0, 9)),))
            assert (
                holdout_accuracy(f, hold).value + holdout_accuracy(negate(f), hold).value
                == 1
            )


class TestCrossValidate:
    def test_perfectly_separable(self):
        report = cross_validate(separable_table(), FAST)
        assert report.complete
        assert len(report.records) == 5
        assert report.mean_accuracy == 1
        assert report.std_accuracy == 0
        assert report.mean_size == 1

    def test_aggregates_recomputable(self):
        report = cross_validate(noisy_table(), FAST)
        values = [r.holdout_accuracy.value for r in report.records]
        mean = sum(values, Fraction(0)) / len(values)
        var = sum(((v - mean) ** 2 for v in values), Fraction(0)) / (len(values) - 1)
        assert report.mean_accuracy == mean
        assert report.std_accuracy == math.sqrt(var)
        assert report.mean_size == Fraction(
            sum(r.formula_size for r in report.records), len(report.records)
        )

    def test_fold_seeds_differ_but_derive_deterministically(self):
        assert derive_fold_seed(7, 0) != derive_fold_seed(7, 1)
        assert derive_fold_seed(7, 3) == derive_fold_seed(7, 3)

    def test_too_few_points(self):
        from boolform.errors import BoolformError

        with pytest.raises(BoolformError):
            cross_validate(separable_table(n=4), FAST)

    def test_failed_fold_marks_report_incomplete(self, monkeypatch):
        from boolform.errors import NoIncumbentError

        calls = {"n": 0}
        real = boolform.fsm.run_fsm

        def flaky(ds, cfg):
            calls["n"] += 1
            if calls["n"] == 2:
                raise NoIncumbentError("injected failure")
            return real(ds, cfg)

        monkeypatch.setattr(boolform.fsm, "run_fsm", flaky)
        report = cross_validate(separable_table(), FAST)
        assert not report.complete
        failed = [r for r in report.records if r.error is not None]
        assert len(failed) == 1 and "injected" in failed[0].error

    def test_no_leakage(self, monkeypatch):
        """Holdout ids must never reach grids, medians, splits, or searches."""
        import boolform.propositions

        seen: list[frozenset] = []

        real_grid = boolform.propositions.candidate_grid
        real_median = boolform.propositions.median_of
        real_split = boolform.fsm.split_train_validation
        real_best = boolform.search.best_formula

        def spy_grid(ds):
            seen.append(frozenset(ds.point_ids))
            return real_grid(ds)

        def spy_median(ds, attr):
            seen.append(frozenset(ds.point_ids))
            return real_median(ds, attr)

        def spy_split(ds, ratio, seed):
            seen.append(frozenset(ds.point_ids))
            return real_split(ds, ratio, seed)

        def spy_best(ds, cfg):
            seen.append(frozenset(ds.point_ids))
            return real_best(ds, cfg)

        monkeypatch.setattr(boolform.propositions, "candidate_grid", spy_grid)
        monkeypatch.setattr(boolform.search, "candidate_grid", spy_grid)
        monkeypatch.setattr(boolform.propositions, "median_of", spy_median)
        monkeypatch.setattr(boolform.fsm, "split_train_validation", spy_split)
        monkeypatch.setattr(boolform.search, "best_formula", spy_best)

        table = noisy_table(n=40)
        cfg = RunConfig(
            scheme=Scheme.MEDIAN,
            seed=2,
            k=4,
            length_cap=3,
            per_bound_budget=Budget(node_limit=2000),
        )

        from boolform.dataset import make_folds, one_hot_encode, scale_to_integers

        ds_all = scale_to_integers(one_hot_encode(table))
        plan = make_folds(ds_all, cfg.k, cfg.seed)

        per_fold_seen: list[list[frozenset]] = []
        original_run = boolform.fsm.run_fsm

        def tracking_run(ds, fsm_cfg):
            seen.clear()
            try:
                return original_run(ds, fsm_cfg)
            finally:
                per_fold_seen.append(list(seen) + [frozenset(ds.point_ids)])

        monkeypatch.setattr(boolform.fsm, "run_fsm", tracking_run)
        cross_validate(table, cfg)

        assert len(per_fold_seen) == cfg.k
        violations = 0
        for fold_ids, observed in zip(plan.folds, per_fold_seen):
            held = frozenset(fold_ids)
            assert observed, "instrumentation saw no calls"
            for ids in observed:
                violations += len(ids & held)
        assert violations == 0


class TestSummarize:
    def report(self):
        return cross_validate(separable_table(), FAST)

    def test_table_has_aggregate_with_three_decimals(self):
        text = summarize(self.report(), "table")
        assert "mean accuracy 1.000 (std 0.000), mean formula size 1.000" in text

    def test_csv_shape(self):
        text = summarize(self.report(), "csv")
        rows = list(csv.reader(io.StringIO(text)))
        assert rows[0] == ["fold", "accuracy", "length", "L", "stop_reason", "elapsed_s", "formula"]
        assert len(rows) == 1 + 5 + 1  # header, folds, aggregate
        assert rows[-1][0] == "mean"

    def test_json_mirrors_report(self):
        report = self.report()
        payload = json.loads(summarize(report, "json"))
        assert payload["k"] == 5
        assert payload["complete"] is True
        assert len(payload["folds"]) == 5
        assert payload["aggregate"]["mean_accuracy"] == [1, 1]
        for fold in payload["folds"]:
            assert fold["holdout_accuracy"][0] <= fold["holdout_accuracy"][1]

    def test_unknown_format_is_usage_error(self):
        with pytest.raises(ValueError):
            summarize(self.report(), "xml")

    def test_machine_formats_are_reproducible_bytes(self):
        a = cross_validate(separable_table(), FAST)
        b = cross_validate(separable_table(), FAST)
        assert summarize(a, "csv") == summarize(b, "csv")
        assert summarize(a, "json") == summarize(b, "json")

    def test_timing_redaction_only_in_node_budget_mode(self):
        report = self.report()
        assert report.deterministic_timing
        assert '"elapsed_s":"0.000"' in summarize(report, "json")
        timed = RunConfig(
            scheme=Scheme.PIVOT,
            seed=11,
            k=5,
            length_cap=3,
            per_bound_budget=Budget(time_limit=5.0),
        )
        report2 = cross_validate(separable_table(), timed)
        assert not report2.deterministic_timing


class TestParallelFolds:
    def test_fold_pool_matches_sequential_reports(self):
        sequential = cross_validate(noisy_table(), FAST)
        parallel_cfg = RunConfig(
            data_path=FAST.data_path,
            scheme=FAST.scheme,
            seed=FAST.seed,
            k=FAST.k,
            length_cap=FAST.length_cap,
            per_bound_budget=FAST.per_bound_budget,
            total_budget=FAST.total_budget,
            workers=4,
            parallel_folds=True,
        )
        parallel = cross_validate(noisy_table(), parallel_cfg)
        assert summarize(sequential, "csv") == summarize(parallel, "csv")
        assert summarize(sequential, "json") == summarize(parallel, "json")
