"""Leaf predicates and the three numeric discretization schemes.

A proposition is either a boolean attribute, a pivot test ``attr >= r``, or an
inclusive interval test ``attr in [l, u]``.  Candidate thresholds are always
drawn from the grid of values observed in the training data: point
classification is piecewise constant in the threshold, so the observed-value
grid realizes every Booleanization the search could need.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Mapping

from .dataset import EncodedDataset


class Scheme(str, enum.Enum):
    """Numeric discretization variant."""

    MEDIAN = "median"
    PIVOT = "pivot"
    INTERVAL = "interval"


class PropKind(enum.IntEnum):
    BOOL = 0
    PIVOT = 1
    INTERVAL = 2


@dataclass(frozen=True)
class Proposition:
    kind: PropKind
    attr: int
    lo: int | None = None
    hi: int | None = None

    def __post_init__(self) -> None:
        if self.kind is PropKind.BOOL and (self.lo is not None or self.hi is not None):
            raise ValueError("boolean propositions carry no thresholds")
        if self.kind is PropKind.PIVOT and (self.lo is None or self.hi is not None):
            raise ValueError("pivot propositions carry exactly one threshold")
        if self.kind is PropKind.INTERVAL:
            if self.lo is None or self.hi is None:
                raise ValueError("interval propositions carry two endpoints")
            if self.lo > self.hi:
                raise ValueError(f"interval endpoints out of order: [{self.lo}, {self.hi}]")

    def key(self) -> tuple[int, ...]:
        """Total order on leaves: attribute, then variant, then thresholds."""
        if self.kind is PropKind.BOOL:
            return (self.attr, 0)
        if self.kind is PropKind.PIVOT:
            return (self.attr, 1, self.lo)
        return (self.attr, 2, self.lo, self.hi)


def bool_attr(attr: int) -> Proposition:
    return Proposition(PropKind.BOOL, attr)


def pivot(attr: int, r: int) -> Proposition:
    return Proposition(PropKind.PIVOT, attr, lo=r)


def interval(attr: int, lo: int, hi: int) -> Proposition:
    return Proposition(PropKind.INTERVAL, attr, lo=lo, hi=hi)


def eval_prop(p: Proposition, ds: EncodedDataset, point_id: int) -> bool:
    """Truth of one proposition at one data point (inclusive endpoints)."""
    pos = ds.position(point_id)
    if p.kind is PropKind.BOOL:
        return bool(ds.bool_attrs[p.attr] >> pos & 1)
    value = ds.num_attrs[p.attr][pos]
    if p.kind is PropKind.PIVOT:
        return value >= p.lo
    return p.lo <= value <= p.hi


def prop_mask(p: Proposition, ds: EncodedDataset) -> int:
    """Membership bitmask of a proposition over all points of ``ds``."""
    if p.kind is PropKind.BOOL:
        return ds.bool_attrs[p.attr]
    values = ds.num_attrs[p.attr]
    mask = 0
    if p.kind is PropKind.PIVOT:
        for pos, v in enumerate(values):
            if v >= p.lo:
                mask |= 1 << pos
    else:
        for pos, v in enumerate(values):
            if p.lo <= v <= p.hi:
                mask |= 1 << pos
    return mask


@dataclass(frozen=True)
class CandidateGrid:
    """Per numeric attribute: sorted distinct observed values."""

    values: Mapping[int, tuple[int, ...]]

    def __post_init__(self) -> None:
        for attr, vals in self.values.items():
            if not vals:
                raise ValueError(f"empty grid for attribute {attr}")
            if any(a >= b for a, b in zip(vals, vals[1:])):
                raise ValueError(f"grid for attribute {attr} is not strictly increasing")

    def minimum(self, attr: int) -> int:
        return self.values[attr][0]

    def maximum(self, attr: int) -> int:
        return self.values[attr][-1]


def candidate_grid(ds: EncodedDataset) -> CandidateGrid:
    """Sorted distinct observed values per numeric attribute."""
    if ds.n_points < 1:
        raise ValueError("candidate_grid needs a nonempty dataset")
    return CandidateGrid(
        values={attr: tuple(sorted(set(vals))) for attr, vals in ds.num_attrs.items()}
    )


def median_of(ds: EncodedDataset, attr: int) -> int:
    """Lower median: the element at 1-based position ceil(n/2) of the sorted values.

    The lower median is always an observed value, so the median scheme's fixed
    threshold is one of the pivot scheme's grid choices.
    """
    values = sorted(ds.num_attrs[attr])
    if not values:
        raise ValueError("median of an empty attribute")
    return values[(len(values) + 1) // 2 - 1]


def scheme_leaf_space(
    scheme: Scheme, grid: CandidateGrid, ds: EncodedDataset
) -> dict[int, tuple[Proposition, ...]]:
    """Admissible leaf propositions per attribute under a scheme.

    Boolean attributes contribute themselves under every scheme.  Numeric
    attributes contribute one median pivot, all grid pivots, or all grid
    intervals with lo <= hi, depending on the scheme.
    """
    space: dict[int, tuple[Proposition, ...]] = {}
    for attr in sorted(ds.bool_attrs):
        space[attr] = (bool_attr(attr),)
    for attr in sorted(ds.num_attrs):
        values = grid.values[attr]
        if scheme is Scheme.MEDIAN:
            space[attr] = (pivot(attr, median_of(ds, attr)),)
        elif scheme is Scheme.PIVOT:
            space[attr] = tuple(pivot(attr, r) for r in values)
        else:
            space[attr] = tuple(
                interval(attr, lo, hi)
                for i, lo in enumerate(values)
                for hi in values[i:]
            )
    return space
