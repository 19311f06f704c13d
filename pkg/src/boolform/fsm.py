"""The formula-size training loop.

Split the data, search the best formula at increasing length bounds, watch
validation accuracy, stop after two consecutive bounds fail to reach the best
validation accuracy seen so far, back off to the smallest bound that achieved
it, and refit on the full data at that bound.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from fractions import Fraction

from . import search as search_mod
from .dataset import EncodedDataset, split_train_validation
from .errors import NoIncumbentError
from .formula import Accuracy, Formula, accuracy
from .propositions import Scheme
from .search import Budget, SearchConfig, SearchOutcome

STOP_EARLY = "early_stop"
STOP_TIMEOUT = "timeout"
STOP_LENGTH_CAP = "length_cap"


@dataclass(frozen=True)
class FsmConfig:
    scheme: Scheme
    split_ratio: float = 0.7
    seed: int = 0
    per_bound_budget: Budget = Budget()
    total_budget: Budget = Budget()
    length_cap: int = 20
    workers: int = 1

    def __post_init__(self) -> None:
        if not 0.0 < self.split_ratio < 1.0:
            raise ValueError("split_ratio must be in (0, 1)")
        if self.length_cap < 1:
            raise ValueError("length_cap must be at least 1")


@dataclass(frozen=True)
class TraceEntry:
    length: int
    train_accuracy: Accuracy
    validation_accuracy: Accuracy
    proved_optimal: bool
    elapsed: float


@dataclass(frozen=True)
class LengthTrace:
    entries: tuple[TraceEntry, ...]

    def __post_init__(self) -> None:
        for i, entry in enumerate(self.entries):
            if entry.length != i + 1:
                raise ValueError("trace lengths must run 1, 2, ... without gaps")

    @property
    def best_validation(self) -> Fraction | None:
        """Delta: the best validation accuracy seen so far."""
        if not self.entries:
            return None
        return max(e.validation_accuracy.value for e in self.entries)

    @property
    def best_length(self) -> int | None:
        best = self.best_validation
        if best is None:
            return None
        for entry in self.entries:
            if entry.validation_accuracy.value == best:
                return entry.length
        return None


@dataclass(frozen=True)
class FsmResult:
    final: Formula
    chosen_length: int
    trace: LengthTrace
    stop_reason: str
    full_data_accuracy: Accuracy

    def __post_init__(self) -> None:
        if self.final.size > self.chosen_length:
            raise ValueError("final formula exceeds the chosen length bound")


def early_stop_check(trace: LengthTrace) -> bool:
    """Two strikes: the last two validation accuracies both below the best so far."""
    if len(trace.entries) < 2:
        return False
    best = trace.best_validation
    last_two = trace.entries[-2:]
    return all(e.validation_accuracy.value < best for e in last_two)


def select_length(trace: LengthTrace) -> int:
    """Smallest traced length whose validation accuracy equals the best seen."""
    if not trace.entries:
        raise ValueError("cannot select a length from an empty trace")
    return trace.best_length


def finalize(
    full_data: EncodedDataset,
    chosen_length: int,
    cfg: FsmConfig,
    budget: Budget | None = None,
) -> SearchOutcome:
    """Refit on the union of training and validation data at the chosen bound.

    Grids and medians are recomputed on the union: the final search owns the
    full data.
    """
    if chosen_length < 1:
        raise ValueError("chosen length must be at least 1")
    return search_mod.best_formula(
        full_data,
        SearchConfig(
            length_bound=chosen_length,
            scheme=cfg.scheme,
            budget=budget if budget is not None else cfg.per_bound_budget,
            workers=cfg.workers,
            seed=cfg.seed,
        ),
    )


class _TotalBudget:
    """Tracks the remaining share of the total budget across length bounds."""

    def __init__(self, total: Budget):
        self.deadline = (
            time.monotonic() + total.time_limit if total.time_limit else None
        )
        self.node_limit = total.node_limit
        self.nodes_used = 0

    def spent(self) -> bool:
        if self.deadline is not None and time.monotonic() >= self.deadline:
            return True
        if self.node_limit is not None and self.nodes_used >= self.node_limit:
            return True
        return False

    def per_bound(self, bound_budget: Budget) -> Budget:
        time_limit = bound_budget.time_limit
        if self.deadline is not None:
            remaining = max(self.deadline - time.monotonic(), 0.001)
            time_limit = min(time_limit, remaining) if time_limit else remaining
        node_limit = bound_budget.node_limit
        if self.node_limit is not None:
            remaining_nodes = max(self.node_limit - self.nodes_used, 1)
            node_limit = (
                min(node_limit, remaining_nodes) if node_limit else remaining_nodes
            )
        return Budget(time_limit=time_limit, node_limit=node_limit)

    def remainder_or(self, fallback: Budget) -> Budget:
        """Remaining total budget, or the fallback once it is used up."""
        if self.spent():
            return fallback
        return self.per_bound(fallback)


def run_fsm(data: EncodedDataset, cfg: FsmConfig) -> FsmResult:
    """Execute the full training loop on one dataset."""
    train, validation = split_train_validation(data, cfg.split_ratio, cfg.seed)
    total = _TotalBudget(cfg.total_budget)
    entries: list[TraceEntry] = []
    stop_reason = STOP_LENGTH_CAP

    for bound in range(1, cfg.length_cap + 1):
        if total.spent():
            stop_reason = STOP_TIMEOUT
            break
        try:
            outcome = search_mod.best_formula(
                train,
                SearchConfig(
                    length_bound=bound,
                    scheme=cfg.scheme,
                    budget=total.per_bound(cfg.per_bound_budget),
                    workers=cfg.workers,
                    seed=cfg.seed,
                ),
            )
        except NoIncumbentError:
            # total budget died mid-bound with nothing to show for this bound
            stop_reason = STOP_TIMEOUT
            break
        total.nodes_used += outcome.nodes_explored
        entries.append(
            TraceEntry(
                length=bound,
                train_accuracy=outcome.train_accuracy,
                validation_accuracy=accuracy(outcome.best, validation),
                proved_optimal=outcome.proved_optimal,
                elapsed=outcome.elapsed,
            )
        )
        if total.spent():
            stop_reason = STOP_TIMEOUT
            break
        if early_stop_check(LengthTrace(tuple(entries))):
            stop_reason = STOP_EARLY
            break

    trace = LengthTrace(tuple(entries))
    if not trace.entries:
        raise NoIncumbentError("total budget expired before any length bound completed")
    chosen = select_length(trace)
    final_outcome = finalize(
        data, chosen, cfg, budget=total.remainder_or(cfg.per_bound_budget)
    )
    return FsmResult(
        final=final_outcome.best,
        chosen_length=chosen,
        trace=trace,
        stop_reason=stop_reason,
        full_data_accuracy=final_outcome.train_accuracy,
    )


def trace_to_json(result: FsmResult) -> str:
    """Machine-readable run log of the length trace."""
    best = result.trace.best_validation
    payload = {
        "entries": [
            {
                "length": e.length,
                "train_accuracy": [e.train_accuracy.agree, e.train_accuracy.total],
                "validation_accuracy": [
                    e.validation_accuracy.agree,
                    e.validation_accuracy.total,
                ],
                "proved_optimal": e.proved_optimal,
                "elapsed_s": round(e.elapsed, 3),
            }
            for e in result.trace.entries
        ],
        "best_validation": [best.numerator, best.denominator] if best is not None else None,
        "chosen_length": result.chosen_length,
        "stop_reason": result.stop_reason,
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))
