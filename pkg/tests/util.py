"""Shared test helpers: dataset builders and independent brute-force oracles.

The oracles here deliberately avoid the package's search machinery: they
enumerate raw RPN token sequences (or their reachable denotations) directly,
so agreement between the two is meaningful evidence.
"""

from __future__ import annotations

import random
from fractions import Fraction

from boolform.dataset import EncodedDataset, Provenance
from boolform.formula import Formula, Op, well_formed
from boolform.propositions import (
    CandidateGrid,
    PropKind,
    Proposition,
    Scheme,
    bool_attr,
    candidate_grid,
    interval,
    median_of,
    pivot,
    prop_mask,
    scheme_leaf_space,
)


def make_ds(
    bools: dict[int, list[bool]] | None = None,
    nums: dict[int, list[int]] | None = None,
    target: list[bool] | None = None,
    names: dict[int, str] | None = None,
) -> EncodedDataset:
    """Build an encoded dataset from plain per-attribute value lists."""
    bools = bools or {}
    nums = nums or {}
    names = names or {}
    n = len(target)
    bool_attrs = {}
    provenance = {}
    for attr, values in bools.items():
        assert len(values) == n
        mask = 0
        for pos, v in enumerate(values):
            if v:
                mask |= 1 << pos
        bool_attrs[attr] = mask
        label = names.get(attr, f"b{attr}")
        provenance[attr] = Provenance(source=label, kind="boolean", display=label)
    num_attrs = {}
    for attr, values in nums.items():
        assert len(values) == n
        num_attrs[attr] = tuple(int(v) for v in values)
        label = names.get(attr, f"v{attr}")
        provenance[attr] = Provenance(source=label, kind="numeric", display=label)
    target_mask = 0
    for pos, v in enumerate(target):
        if v:
            target_mask |= 1 << pos
    return EncodedDataset(
        point_ids=tuple(range(n)),
        bool_attrs=bool_attrs,
        num_attrs=num_attrs,
        target=target_mask,
        provenance=provenance,
    )


def random_ds(
    rng: random.Random,
    max_points: int = 8,
    max_attrs: int = 3,
    value_range: tuple[int, int] = (0, 9),
) -> EncodedDataset:
    """Random small mixed dataset in the acceptance-test regime."""
    n = rng.randint(2, max_points)
    n_attrs = rng.randint(1, max_attrs)
    bools = {}
    nums = {}
    for attr in range(n_attrs):
        if rng.random() < 0.4:
            bools[attr] = [rng.random() < 0.5 for _ in range(n)]
        else:
            lo, hi = value_range
            nums[attr] = [rng.randint(lo, hi) for _ in range(n)]
    target = [rng.random() < 0.5 for _ in range(n)]
    return make_ds(bools, nums, target)


def scheme_leaves(ds: EncodedDataset, scheme: Scheme) -> list[Proposition]:
    """Every admissible leaf proposition (grid thresholds) under a scheme."""
    grid = candidate_grid(ds)
    space = scheme_leaf_space(scheme, grid, ds)
    return [p for attr in sorted(space) for p in space[attr]]


def oracle_best_accuracy(ds: EncodedDataset, scheme: Scheme, bound: int) -> Fraction:
    """Max training accuracy over every well-formed RPN sequence of size <= bound.

    Works on denotations: any well-formed sequence of size s is either a leaf,
    a negation of a size s-1 sequence, or two sequences plus a connective, so
    the reachable truth-value masks per size cover the whole space.
    """
    n = ds.n_points
    full = ds.full_mask
    leaf_masks = {prop_mask(p, ds) for p in scheme_leaves(ds, scheme)}
    by_size: dict[int, set[int]] = {1: set(leaf_masks)}
    for s in range(2, bound + 1):
        masks: set[int] = {full ^ m for m in by_size[s - 1]}
        for left in range(1, s - 1):
            right = s - 1 - left
            for a in by_size[left]:
                for b in by_size[right]:
                    masks.add(a & b)
                    masks.add(a | b)
        by_size[s] = masks
    best = 0
    for s in range(1, bound + 1):
        for m in by_size.get(s, ()):
            agree = n - (m ^ ds.target).bit_count()
            if agree > best:
                best = agree
    return Fraction(best, n)


def random_formula(rng: random.Random, leaves: list[Proposition], max_size: int) -> Formula:
    """Uniform-ish random well-formed RPN sequence; not necessarily canonical."""
    tokens: list = []
    depth = 0
    size = rng.randint(1, max_size)
    while len(tokens) < size or depth != 1:
        room = size - len(tokens)
        choices = []
        if depth < room:  # pushing a leaf still allows closing the stack
            choices.append("leaf")
        if depth >= 1 and room >= 1 and depth <= room:
            choices.append("not")
        if depth >= 2 and room >= 1:
            choices.append("op")
        if not choices:
            break
        pick = rng.choice(choices)
        if pick == "leaf":
            tokens.append(rng.choice(leaves))
            depth += 1
        elif pick == "not":
            tokens.append(Op.NOT)
        else:
            tokens.append(rng.choice([Op.AND, Op.OR]))
            depth -= 1
    assert well_formed(tokens)
    return Formula(tuple(tokens))


def all_rpn_sequences(leaves: list[Proposition], max_size: int):
    """Every well-formed RPN token sequence of size <= max_size, explicitly."""
    results: list[tuple] = []

    def extend(seq: list, depth: int):
        if depth == 1 and seq:
            results.append(tuple(seq))
        if len(seq) == max_size:
            return
        for p in leaves:
            seq.append(p)
            extend(seq, depth + 1)
            seq.pop()
        if depth >= 1:
            seq.append(Op.NOT)
            extend(seq, depth)
            seq.pop()
        if depth >= 2:
            for op in (Op.AND, Op.OR):
                seq.append(op)
                extend(seq, depth - 1)
                seq.pop()

    extend([], 0)
    assert all(well_formed(seq) for seq in results)
    return results
