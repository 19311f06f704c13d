"""Exact/anytime search for the most accurate formula at a length bound.

The search is skeleton-first: canonical formula shapes are enumerated in
(size, lexicographic) order with numeric thresholds left as free slots, then
each skeleton's slots are optimized exactly over the observed-value grid.
A three-valued evaluation (true / false / still-open) gives an admissible
accuracy bound that prunes skeletons and partial assignments which cannot
beat the incumbent.

Determinism: skeletons stream tier by tier (one tier per size).  Within a
tier the stream is split into fixed chunks scanned independently, each
seeded with the best result of the *previous* tiers, and merged in stream
order under the global tie-break (higher accuracy, smaller size,
lexicographically smallest RPN).  Node budgets cut the stream at chunk
boundaries.  None of this depends on scheduling, so results and node counts
are identical for any worker count.
"""

from __future__ import annotations

import multiprocessing
import time
from bisect import bisect_left
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Mapping, NamedTuple, Sequence

from .dataset import EncodedDataset
from .errors import NoIncumbentError
from .formula import Accuracy, Formula, Op, Token
from .propositions import (
    CandidateGrid,
    PropKind,
    Proposition,
    Scheme,
    candidate_grid,
    interval,
    pivot,
    scheme_leaf_space,
)

CHUNK_SIZE = 128
SEED_MAX_SIZE = 2
_DEADLINE_STRIDE = 255  # deadline polled roughly every 256 nodes


@dataclass(frozen=True)
class Budget:
    """Wall-clock and/or node-count limits; both optional."""

    time_limit: float | None = None
    node_limit: int | None = None

    def __post_init__(self) -> None:
        if self.time_limit is not None and self.time_limit <= 0:
            raise ValueError("time limit must be positive")
        if self.node_limit is not None and self.node_limit <= 0:
            raise ValueError("node limit must be positive")


@dataclass(frozen=True)
class SearchConfig:
    length_bound: int
    scheme: Scheme
    budget: Budget = Budget()
    workers: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.length_bound < 1:
            raise ValueError("length bound must be at least 1")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")


@dataclass(frozen=True)
class SearchOutcome:
    best: Formula
    train_accuracy: Accuracy
    proved_optimal: bool
    nodes_explored: int
    elapsed: float


@dataclass(frozen=True)
class FreeSlot:
    """A numeric leaf whose attribute is fixed but whose thresholds are open."""

    kind: PropKind
    attr: int

    def __post_init__(self) -> None:
        if self.kind is PropKind.BOOL:
            raise ValueError("boolean leaves have no free thresholds")

    def key(self) -> tuple[int, ...]:
        return (self.attr, int(self.kind))


SkeletonToken = Proposition | FreeSlot | Op


@dataclass(frozen=True)
class Skeleton:
    """Canonical RPN shape; free slots instantiate to grid thresholds."""

    rpn: tuple[SkeletonToken, ...]

    @property
    def size(self) -> int:
        return len(self.rpn)

    @property
    def free_slots(self) -> tuple[FreeSlot, ...]:
        return tuple(t for t in self.rpn if isinstance(t, FreeSlot))


# ---------------------------------------------------------------------------
# Canonical skeleton enumeration
# ---------------------------------------------------------------------------

_NOT_KEY = (1,)
_CHAIN_KEY = {2: ((2,),), 3: ((3,),)}  # AND, OR token keys, ready for repetition


class _Node(NamedTuple):
    # shape: (0, leafspec) | (1, child) | (2|3, elems)
    shape: tuple
    size: int
    key: tuple
    free: bool


def _leaf_node(spec: Proposition | FreeSlot) -> _Node:
    return _Node(
        shape=(0, spec),
        size=1,
        key=((0, *spec.key()),),
        free=isinstance(spec, FreeSlot),
    )


class TierBuildTimeout(Exception):
    """Raised when the deadline passes while a tier is being enumerated."""


class _SkeletonSpace:
    """Graded, memoized enumeration of canonical skeletons.

    Tier ``s`` holds every canonical shape of size exactly ``s``, sorted by
    RPN key.  Chains are built with non-decreasing elements; repeating an
    element is only allowed when it contains a free slot (the threshold
    assignment then restores strict order).

    Deep tiers can hold millions of shapes, so construction itself honors the
    deadline: with one set, a build in progress aborts rather than exhausting
    memory long past the time budget.
    """

    def __init__(self, leaves: Sequence[Proposition | FreeSlot], deadline: float | None = None):
        tier1 = sorted((_leaf_node(spec) for spec in leaves), key=lambda n: n.key)
        self._tiers: dict[int, tuple[_Node, ...]] = {1: tuple(tier1)}
        self._pools: dict[tuple[int, int], tuple[_Node, ...]] = {}
        self.deadline = deadline
        self._emitted = 0

    def _build_tick(self) -> None:
        self._emitted += 1
        if (
            self.deadline is not None
            and self._emitted & 0x0FFF == 0
            and time.monotonic() > self.deadline
        ):
            raise TierBuildTimeout

    def tier(self, size: int) -> tuple[_Node, ...]:
        if size in self._tiers:
            return self._tiers[size]
        if size < 1:
            return ()
        items: list[_Node] = []
        for child in self.tier(size - 1):
            if child.shape[0] != 1:  # no double negation
                items.append(
                    _Node((1, child), size, child.key + (_NOT_KEY,), child.free)
                )
                self._build_tick()
        for op in (2, 3):
            items.extend(self._chains(op, size))
        items.sort(key=lambda n: n.key)
        result = tuple(items)
        self._tiers[size] = result
        return result

    def _pool(self, op: int, size: int) -> tuple[_Node, ...]:
        cached = self._pools.get((op, size))
        if cached is None:
            cached = tuple(n for n in self.tier(size) if n.shape[0] != op)
            self._pools[(op, size)] = cached
        return cached

    def _chains(self, op: int, size: int) -> list[_Node]:
        out: list[_Node] = []
        for count in range(2, (size + 1) // 2 + 1):
            content = size - (count - 1)
            self._chain_rec(op, count, content, 1, 0, [], out)
        return out

    def _chain_rec(
        self,
        op: int,
        remaining: int,
        budget: int,
        min_size: int,
        min_idx: int,
        acc: list[_Node],
        out: list[_Node],
    ) -> None:
        if remaining == 1:
            if budget < min_size:
                return
            pool = self._pool(op, budget)
            start = min_idx if budget == min_size else 0
            for i in range(start, len(pool)):
                self._emit_chain(op, acc + [pool[i]], out)
            return
        max_size = budget // remaining
        for elem_size in range(min_size, max_size + 1):
            pool = self._pool(op, elem_size)
            start = min_idx if elem_size == min_size else 0
            for i in range(start, len(pool)):
                elem = pool[i]
                acc.append(elem)
                nxt = i if elem.free else i + 1
                self._chain_rec(op, remaining - 1, budget - elem_size, elem_size, nxt, acc, out)
                acc.pop()

    def _emit_chain(self, op: int, elems: list[_Node], out: list[_Node]) -> None:
        key: tuple = ()
        for e in elems:
            key = key + e.key
        key = key + _CHAIN_KEY[op] * (len(elems) - 1)
        size = sum(e.size for e in elems) + len(elems) - 1
        out.append(_Node((op, tuple(elems)), size, key, any(e.free for e in elems)))
        self._build_tick()


def _node_rpn(node: _Node) -> tuple[SkeletonToken, ...]:
    out: list[SkeletonToken] = []

    def emit(n: _Node) -> None:
        kind = n.shape[0]
        if kind == 0:
            out.append(n.shape[1])
        elif kind == 1:
            emit(n.shape[1])
            out.append(Op.NOT)
        else:
            for e in n.shape[1]:
                emit(e)
            out.extend([Op.AND if kind == 2 else Op.OR] * (len(n.shape[1]) - 1))

    emit(node)
    return tuple(out)


def _scheme_leafspecs(
    vocab: Mapping[int, Sequence[Proposition]], scheme: Scheme
) -> list[Proposition | FreeSlot]:
    """Turn a leaf space into enumeration leaves: concrete props or free slots."""
    specs: list[Proposition | FreeSlot] = []
    for attr in sorted(vocab):
        props = vocab[attr]
        if not props:
            continue
        first = props[0]
        if first.kind is PropKind.BOOL or scheme is Scheme.MEDIAN:
            specs.append(first)
        elif scheme is Scheme.PIVOT:
            specs.append(FreeSlot(PropKind.PIVOT, attr))
        else:
            specs.append(FreeSlot(PropKind.INTERVAL, attr))
    specs.sort(key=lambda s: s.key())
    return specs


def enumerate_skeletons(
    vocab: Mapping[int, Sequence[Proposition]], length_bound: int, scheme: Scheme
) -> Iterator[Skeleton]:
    """Every canonical skeleton of size <= length_bound, exactly once.

    The stream is deterministic: sizes ascend and shapes are in lexicographic
    RPN order within a size, so it partitions into independent chunks.
    """
    if length_bound < 1:
        return
    space = _SkeletonSpace(_scheme_leafspecs(vocab, scheme))
    for s in range(1, length_bound + 1):
        for node in space.tier(s):
            yield Skeleton(_node_rpn(node))


# ---------------------------------------------------------------------------
# Mask tables and compiled skeletons
# ---------------------------------------------------------------------------

_T_MASK, _T_SLOT, _T_NOT, _T_AND, _T_OR = 0, 1, 2, 3, 4


class _Compiled(NamedTuple):
    tokens: tuple
    spec: tuple
    slots: tuple  # (attr, kind) per free slot, in RPN order
    size: int


class _Tables:
    """Per-dataset mask tables shared by bound evaluation and slot scanning."""

    def __init__(self, ds: EncodedDataset, grid: CandidateGrid | None = None):
        self.n = ds.n_points
        self.full = ds.full_mask
        self.target = ds.target
        self.bool_masks = dict(ds.bool_attrs)
        self.grid = grid if grid is not None else candidate_grid(ds)
        self.ge_masks: dict[int, tuple[int, ...]] = {}
        for attr, values in ds.num_attrs.items():
            gvals = self.grid.values[attr]
            index = {v: i for i, v in enumerate(gvals)}
            if all(v in index for v in values):
                # grid drawn from this data: bucket points, then suffix-or
                buckets = [0] * len(gvals)
                for pos, v in enumerate(values):
                    buckets[index[v]] |= 1 << pos
                masks = [0] * len(gvals)
                running = 0
                for j in range(len(gvals) - 1, -1, -1):
                    running |= buckets[j]
                    masks[j] = running
            else:
                # foreign grid (validation data against a training grid)
                masks = [
                    sum(1 << pos for pos, v in enumerate(values) if v >= g)
                    for g in gvals
                ]
            self.ge_masks[attr] = tuple(masks)
        self._pivot_cands: dict[int, tuple[tuple, tuple]] = {}
        self._interval_cands: dict[int, tuple[tuple, tuple]] = {}

    def mask_ge(self, attr: int, r: int) -> int:
        gvals = self.grid.values[attr]
        i = bisect_left(gvals, r)
        return self.ge_masks[attr][i] if i < len(gvals) else 0

    def prop_mask(self, p: Proposition) -> int:
        if p.kind is PropKind.BOOL:
            return self.bool_masks[p.attr]
        if p.kind is PropKind.PIVOT:
            return self.mask_ge(p.attr, p.lo)
        return self.mask_ge(p.attr, p.lo) & (self.full ^ self.mask_ge(p.attr, p.hi + 1))

    def candidates(self, attr: int, kind: PropKind) -> tuple[tuple, tuple]:
        """(metas, masks) for a slot, in lexicographic threshold order."""
        if kind is PropKind.PIVOT:
            cached = self._pivot_cands.get(attr)
            if cached is None:
                gvals = self.grid.values[attr]
                cached = (tuple((r,) for r in gvals), self.ge_masks[attr])
                self._pivot_cands[attr] = cached
            return cached
        cached = self._interval_cands.get(attr)
        if cached is None:
            gvals = self.grid.values[attr]
            ge = self.ge_masks[attr]
            metas = []
            masks = []
            for i, lo in enumerate(gvals):
                base = ge[i]
                for j in range(i, len(gvals)):
                    metas.append((lo, gvals[j]))
                    hi_excl = ge[j + 1] if j + 1 < len(gvals) else 0
                    masks.append(base & (self.full ^ hi_excl))
            cached = (tuple(metas), tuple(masks))
            self._interval_cands[attr] = cached
        return cached

    def slot_open(self, attr: int, kind: PropKind) -> tuple[int, int]:
        """(can-be-true, can-be-false) masks over all candidate thresholds."""
        gvals = self.grid.values[attr]
        if kind is PropKind.PIVOT:
            return self.ge_masks[attr][0], self.full ^ self.ge_masks[attr][-1]
        in_range = self.ge_masks[attr][0] & (self.full ^ self.mask_ge(attr, gvals[-1] + 1))
        if len(gvals) >= 2:
            return in_range, self.full
        # single grid value: the slot is forced to the interval [g, g]
        return in_range, self.full ^ in_range

    def ctx(self, leafspecs: Sequence[Proposition | FreeSlot]) -> dict:
        """Picklable context for chunk workers; prebuilds all slot tables."""
        candidates = {}
        slot_open = {}
        for spec in leafspecs:
            if isinstance(spec, FreeSlot):
                key = (spec.attr, spec.kind)
                metas, masks = self.candidates(spec.attr, spec.kind)
                negs = tuple(self.full ^ m for m in masks)
                candidates[key] = (metas, masks, negs)
                slot_open[key] = self.slot_open(spec.attr, spec.kind)
        return {
            "n": self.n,
            "full": self.full,
            "target": self.target,
            "candidates": candidates,
            "slot_open": slot_open,
        }


def _compile(node_rpn: Sequence[SkeletonToken], tables: _Tables) -> _Compiled:
    tokens: list[tuple] = []
    slots: list[tuple[int, PropKind]] = []
    for tok in node_rpn:
        if isinstance(tok, FreeSlot):
            tokens.append((_T_SLOT, len(slots)))
            slots.append((tok.attr, tok.kind))
        elif isinstance(tok, Proposition):
            tokens.append((_T_MASK, tables.prop_mask(tok)))
        elif tok is Op.NOT:
            tokens.append((_T_NOT,))
        elif tok is Op.AND:
            tokens.append((_T_AND,))
        else:
            tokens.append((_T_OR,))
    return _Compiled(
        tokens=tuple(tokens),
        spec=tuple(node_rpn),
        slots=tuple(slots),
        size=len(node_rpn),
    )


# ---------------------------------------------------------------------------
# Scanning: exact slot optimization with admissible-bound pruning
# ---------------------------------------------------------------------------


class _BudgetState:
    __slots__ = ("nodes", "deadline", "aborted")

    def __init__(self, deadline: float | None):
        self.nodes = 0
        self.deadline = deadline
        self.aborted = False

    def tick(self, count: int = 1) -> bool:
        """Count explored nodes; returns True once the deadline has passed."""
        self.nodes += count
        if (
            self.deadline is not None
            and (self.nodes & _DEADLINE_STRIDE) < count
            and time.monotonic() > self.deadline
        ):
            self.aborted = True
        return self.aborted


class _Incumbent:
    """Best-so-far under the tie-break (accuracy desc, size asc, RPN key asc)."""

    __slots__ = ("agree", "size", "key", "spec", "metas")

    def __init__(self, seed: tuple | None = None):
        if seed is None:
            self.agree = -1
            self.size = 0
            self.key: tuple | None = None
            self.spec: tuple | None = None
            self.metas: tuple | None = None
        else:
            self.agree, self.size, self.key, self.spec, self.metas = seed

    def admits(self, bound_agree: int, size: int) -> bool:
        """Could a formula of this size with this accuracy bound still win?"""
        if bound_agree > self.agree:
            return True
        return bound_agree == self.agree and size <= self.size

    def offer(self, agree: int, comp: _Compiled, metas: tuple) -> None:
        if agree < self.agree:
            return
        if agree == self.agree:
            if comp.size > self.size:
                return
            key = _instance_key(comp, metas)
            if comp.size == self.size and not (self.key is None or key < self.key):
                return
        else:
            key = _instance_key(comp, metas)
        self.agree = agree
        self.size = comp.size
        self.key = key
        self.spec = comp.spec
        self.metas = metas

    def as_tuple(self) -> tuple | None:
        if self.agree < 0:
            return None
        return (self.agree, self.size, self.key, self.spec, self.metas)


def _instance_key(comp: _Compiled, metas: tuple) -> tuple:
    key = []
    slot = 0
    for tok in comp.spec:
        if isinstance(tok, FreeSlot):
            key.append((0, tok.attr, int(tok.kind), *metas[slot]))
            slot += 1
        elif isinstance(tok, Proposition):
            key.append((0, *tok.key()))
        elif tok is Op.NOT:
            key.append((1,))
        elif tok is Op.AND:
            key.append((2,))
        else:
            key.append((3,))
    return tuple(key)


def _eval_tokens(tokens: tuple, amasks: list, full: int) -> int:
    stack: list[int] = []
    push = stack.append
    pop = stack.pop
    for tok in tokens:
        tag = tok[0]
        if tag == _T_MASK:
            push(tok[1])
        elif tag == _T_SLOT:
            push(amasks[tok[1]])
        elif tag == _T_NOT:
            stack[-1] = full ^ stack[-1]
        elif tag == _T_AND:
            b = pop()
            stack[-1] &= b
        else:
            b = pop()
            stack[-1] |= b
    return stack[-1]


def _bound_agree(comp: _Compiled, amasks: list, ctx: dict) -> int:
    """Admissible agreement bound via three-valued evaluation.

    Unassigned slots contribute (can-be-true, can-be-false) masks; a point
    counts as agreeing if any threshold choice could make it agree, so the
    result never underestimates the best reachable agreement.
    """
    full = ctx["full"]
    slot_open = ctx["slot_open"]
    slots = comp.slots
    ts: list[int] = []
    fs: list[int] = []
    for tok in comp.tokens:
        tag = tok[0]
        if tag == _T_MASK:
            m = tok[1]
            ts.append(m)
            fs.append(full ^ m)
        elif tag == _T_SLOT:
            m = amasks[tok[1]]
            if m is None:
                t, f = slot_open[slots[tok[1]]]
                ts.append(t)
                fs.append(f)
            else:
                ts.append(m)
                fs.append(full ^ m)
        elif tag == _T_NOT:
            ts[-1], fs[-1] = fs[-1], ts[-1]
        elif tag == _T_AND:
            t2 = ts.pop()
            f2 = fs.pop()
            ts[-1] &= t2
            fs[-1] |= f2
        else:
            t2 = ts.pop()
            f2 = fs.pop()
            ts[-1] |= t2
            fs[-1] &= f2
    target = ctx["target"]
    possible = (ts[-1] & target) | (fs[-1] & (full ^ target))
    return possible.bit_count()


def _scan_skeleton(comp: _Compiled, ctx: dict, inc: _Incumbent, state: _BudgetState) -> None:
    if state.tick():
        return
    if not comp.slots:
        mask = _eval_tokens(comp.tokens, [], ctx["full"])
        agree = ctx["n"] - (mask ^ ctx["target"]).bit_count()
        inc.offer(agree, comp, ())
        return
    k = len(comp.slots)
    amasks: list = [None] * k
    if not inc.admits(_bound_agree(comp, amasks, ctx), comp.size):
        return
    _assign(comp, amasks, [None] * k, 0, ctx, inc, state)


def _assign(
    comp: _Compiled,
    amasks: list,
    ametas: list,
    j: int,
    ctx: dict,
    inc: _Incumbent,
    state: _BudgetState,
) -> None:
    n = ctx["n"]
    full = ctx["full"]
    target = ctx["target"]
    metas, masks, negs = ctx["candidates"][comp.slots[j]]
    if j == len(comp.slots) - 1:
        # Shannon expansion on the last slot: evaluate once with the slot
        # forced true and once forced false, then each candidate costs O(1).
        amasks[j] = full
        on = _eval_tokens(comp.tokens, amasks, full)
        amasks[j] = 0
        off = _eval_tokens(comp.tokens, amasks, full)
        amasks[j] = None
        prefix = tuple(ametas[:j])
        best_agree = inc.agree
        size_ok = comp.size <= inc.size
        for i, m in enumerate(masks):
            result = (on & m) | (off & negs[i])
            agree = n - (result ^ target).bit_count()
            if agree > best_agree or (agree == best_agree and size_ok):
                inc.offer(agree, comp, prefix + (metas[i],))
                best_agree = inc.agree
                size_ok = comp.size <= inc.size
        state.tick(2 + len(masks))
        return
    for i, m in enumerate(masks):
        amasks[j] = m
        ametas[j] = metas[i]
        if state.tick():
            break
        if inc.admits(_bound_agree(comp, amasks, ctx), comp.size):
            _assign(comp, amasks, ametas, j + 1, ctx, inc, state)
            if state.aborted:
                break
    amasks[j] = None
    ametas[j] = None


def _scan_chunk(
    comps: Sequence[_Compiled], ctx: dict, seed: tuple | None, deadline: float | None
):
    """Scan one chunk with a chunk-local incumbent; returns (best, nodes, aborted)."""
    inc = _Incumbent(seed)
    state = _BudgetState(deadline)
    for comp in comps:
        _scan_skeleton(comp, ctx, inc, state)
        if state.aborted:
            break
    best = inc.as_tuple()
    if seed is not None and best == seed:
        best = None  # no improvement over the seed
    return best, state.nodes, state.aborted


_WORKER_CTX: dict | None = None
_WORKER_DEADLINE: float | None = None


def _pool_init(ctx: dict, deadline: float | None) -> None:
    global _WORKER_CTX, _WORKER_DEADLINE
    _WORKER_CTX = ctx
    _WORKER_DEADLINE = deadline


def _pool_scan(comps: Sequence[_Compiled], seed: tuple | None):
    return _scan_chunk(comps, _WORKER_CTX, seed, _WORKER_DEADLINE)


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------


def _materialize(spec: tuple, metas: tuple | None) -> Formula:
    rpn: list[Token] = []
    slot = 0
    for tok in spec:
        if isinstance(tok, FreeSlot):
            meta = metas[slot]
            slot += 1
            if tok.kind is PropKind.PIVOT:
                rpn.append(pivot(tok.attr, meta[0]))
            else:
                rpn.append(interval(tok.attr, meta[0], meta[1]))
        else:
            rpn.append(tok)
    return Formula(tuple(rpn))


def _merge(best: tuple | None, candidate: tuple | None) -> tuple | None:
    if candidate is None:
        return best
    if best is None:
        return candidate
    if candidate[0] != best[0]:
        return candidate if candidate[0] > best[0] else best
    if candidate[1] != best[1]:
        return candidate if candidate[1] < best[1] else best
    return candidate if candidate[2] < best[2] else best


class _Driver:
    """Tier-by-tier consumption with deterministic chunking and budgets."""

    def __init__(
        self,
        space: _SkeletonSpace,
        tables: _Tables,
        ctx: dict,
        bound: int,
        node_limit: int | None,
        deadline: float | None,
        workers: int,
    ):
        self.space = space
        self.tables = tables
        self.ctx = ctx
        self.bound = bound
        self.node_limit = node_limit
        self.deadline = deadline
        self.workers = workers
        self.best: tuple | None = None
        self.nodes = 0
        self.exhausted = False  # budget ran out with shapes left unscanned

    def run(self) -> None:
        pool = None
        try:
            for size in range(1, self.bound + 1):
                if self._perfect_below(size):
                    return
                try:
                    if size <= SEED_MAX_SIZE:
                        self._run_sequential_tier(size)
                    elif self.workers == 1:
                        self._run_tier_inline(size)
                    else:
                        if pool is None:
                            pool = multiprocessing.get_context("fork").Pool(
                                self.workers, _pool_init, (self.ctx, self.deadline)
                            )
                        self._run_tier_pooled(size, pool)
                except TierBuildTimeout:
                    self.exhausted = True
                if self.exhausted:
                    return
        finally:
            if pool is not None:
                pool.terminate()
                pool.join()

    def _perfect_below(self, size: int) -> bool:
        return (
            self.best is not None
            and self.best[0] == self.ctx["n"]
            and self.best[1] < size
        )

    def _over_node_limit(self) -> bool:
        return self.node_limit is not None and self.nodes >= self.node_limit

    def _past_deadline(self) -> bool:
        return self.deadline is not None and time.monotonic() > self.deadline

    def _run_sequential_tier(self, size: int) -> None:
        """Warm-up tiers: rolling incumbent, per-skeleton budget checks."""
        inc = _Incumbent(self.best)
        state = _BudgetState(self.deadline)
        tier = self.space.tier(size)
        for i, node in enumerate(tier):
            if self._past_deadline():
                self.exhausted = True
                break
            _scan_skeleton(_compile(_node_rpn(node), self.tables), self.ctx, inc, state)
            if state.aborted:
                self.exhausted = True
                break
            if self.node_limit is not None and self.nodes + state.nodes >= self.node_limit:
                if i + 1 < len(tier) or size < self.bound:
                    self.exhausted = True
                break
        self.nodes += state.nodes
        self.best = _merge(self.best, inc.as_tuple())

    def _tier_chunks(self, size: int):
        tier = self.space.tier(size)
        for start in range(0, len(tier), CHUNK_SIZE):
            yield [
                _compile(_node_rpn(node), self.tables)
                for node in tier[start : start + CHUNK_SIZE]
            ]

    def _consume(self, result: tuple, last_of_stream: bool) -> bool:
        """Merge one chunk result; returns True when consumption must stop."""
        chunk_best, used, chunk_aborted = result
        self.best = _merge(self.best, chunk_best)
        self.nodes += used
        if chunk_aborted:
            self.exhausted = True
            return True
        if self._over_node_limit():
            self.exhausted = not last_of_stream
            return True
        return False

    def _run_tier_inline(self, size: int) -> None:
        seed = self.best
        gen = self._tier_chunks(size)
        chunk = next(gen, None)
        while chunk is not None:
            if self._past_deadline():
                self.exhausted = True
                return
            result = _scan_chunk(chunk, self.ctx, seed, self.deadline)
            nxt = next(gen, None)
            last = nxt is None and size == self.bound
            if self._consume(result, last):
                return
            chunk = nxt

    def _run_tier_pooled(self, size: int, pool) -> None:
        seed = self.best
        gen = self._tier_chunks(size)
        pending: deque = deque()
        gen_done = False

        def refill() -> None:
            nonlocal gen_done
            while not gen_done and len(pending) < self.workers * 2:
                chunk = next(gen, None)
                if chunk is None:
                    gen_done = True
                    return
                pending.append(pool.apply_async(_pool_scan, (chunk, seed)))

        refill()
        while pending:
            if self._past_deadline():
                self.exhausted = True
                return
            result = pending.popleft().get()
            refill()
            last = gen_done and not pending and size == self.bound
            if self._consume(result, last):
                return


def best_formula(ds: EncodedDataset, cfg: SearchConfig) -> SearchOutcome:
    """Accuracy-maximal, then size-minimal, then RPN-lex-minimal formula.

    Exact when the budget suffices (``proved_optimal``); otherwise the
    incumbent is returned with its true training accuracy.
    """
    if ds.n_points == 0:
        raise ValueError("cannot search an empty dataset")
    start = time.monotonic()
    tables = _Tables(ds)
    vocab = scheme_leaf_space(cfg.scheme, tables.grid, ds)
    leafspecs = _scheme_leafspecs(vocab, cfg.scheme)
    if not leafspecs:
        raise ValueError("dataset has no attributes to build formulas from")
    deadline = start + cfg.budget.time_limit if cfg.budget.time_limit else None
    space = _SkeletonSpace(leafspecs, deadline)
    ctx = tables.ctx(leafspecs)
    driver = _Driver(
        space, tables, ctx, cfg.length_bound, cfg.budget.node_limit, deadline, cfg.workers
    )
    driver.run()

    if driver.best is None:
        raise NoIncumbentError(
            "budget expired before any candidate formula could be evaluated"
        )
    best = driver.best
    return SearchOutcome(
        best=_materialize(best[3], best[4]),
        train_accuracy=Accuracy(agree=best[0], total=ds.n_points),
        proved_optimal=not driver.exhausted,
        nodes_explored=driver.nodes,
        elapsed=time.monotonic() - start,
    )


# ---------------------------------------------------------------------------
# Public single-skeleton operations
# ---------------------------------------------------------------------------


def accuracy_upper_bound(
    sk: Skeleton, ds: EncodedDataset, grid: CandidateGrid | None = None
) -> Accuracy:
    """Admissible bound on the accuracy of any instantiation of the skeleton."""
    tables = _Tables(ds, grid)
    comp = _compile(sk.rpn, tables)
    ctx = _skeleton_ctx(tables, comp)
    agree = _bound_agree(comp, [None] * len(comp.slots), ctx)
    return Accuracy(agree=agree, total=ds.n_points)


def optimize_thresholds(
    sk: Skeleton,
    ds: EncodedDataset,
    grid: CandidateGrid | None = None,
    incumbent: Accuracy | None = None,
) -> tuple[tuple, Accuracy] | None:
    """Exact grid optimum of a skeleton's thresholds, or None when pruned.

    Pruning happens only when the admissible bound shows no assignment can
    strictly beat the incumbent accuracy.
    """
    tables = _Tables(ds, grid)
    comp = _compile(sk.rpn, tables)
    ctx = _skeleton_ctx(tables, comp)
    if incumbent is not None:
        bound = _bound_agree(comp, [None] * len(comp.slots), ctx)
        if Fraction(bound, ds.n_points) <= incumbent.value:
            return None
    inc = _Incumbent()
    state = _BudgetState(None)
    _scan_skeleton(comp, ctx, inc, state)
    result = inc.as_tuple()
    if result is None:
        return None
    return result[4], Accuracy(agree=result[0], total=ds.n_points)


def _skeleton_ctx(tables: _Tables, comp: _Compiled) -> dict:
    candidates = {}
    slot_open = {}
    for attr, kind in comp.slots:
        metas, masks = tables.candidates(attr, kind)
        candidates[(attr, kind)] = (metas, masks, tuple(tables.full ^ m for m in masks))
        slot_open[(attr, kind)] = tables.slot_open(attr, kind)
    return {
        "n": tables.n,
        "full": tables.full,
        "target": tables.target,
        "candidates": candidates,
        "slot_open": slot_open,
    }
