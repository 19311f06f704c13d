"""Boolean formulas as reverse-Polish token sequences.

Formulas are evaluated over whole datasets at once: each proposition
contributes a membership bitmask and the connectives become word-parallel
bit operations, so accuracy is a popcount away.  Accuracies are exact
rationals; the search compares them for equality and floating point would
make ties fragile.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from fractions import Fraction
from typing import Mapping, Sequence

from .dataset import EncodedDataset, Provenance
from .errors import FormulaFormatError
from .propositions import PropKind, Proposition, bool_attr, interval, pivot, prop_mask


class Op(enum.Enum):
    NOT = "¬"
    AND = "∧"
    OR = "∨"


Token = Proposition | Op

# Token ranks for the lexicographic order on RPN sequences: Leaf < Not < And < Or.
_OP_KEY = {Op.NOT: (1,), Op.AND: (2,), Op.OR: (3,)}


def token_key(token: Token) -> tuple[int, ...]:
    if isinstance(token, Proposition):
        return (0, *token.key())
    return _OP_KEY[token]


def well_formed(tokens: Sequence[Token]) -> bool:
    """Stack discipline: no underflow, exactly one value left at the end."""
    depth = 0
    for token in tokens:
        if isinstance(token, Proposition):
            depth += 1
        elif token is Op.NOT:
            if depth < 1:
                return False
        else:
            if depth < 2:
                return False
            depth -= 1
    return depth == 1


@dataclass(frozen=True)
class Formula:
    """A nonempty, well-formed RPN token sequence."""

    rpn: tuple[Token, ...]

    def __post_init__(self) -> None:
        if not self.rpn:
            raise ValueError("empty formula")
        if not well_formed(self.rpn):
            raise ValueError("token sequence violates stack discipline")

    @property
    def size(self) -> int:
        return len(self.rpn)

    def key(self) -> tuple[tuple[int, ...], ...]:
        return tuple(token_key(t) for t in self.rpn)


def size(f: Formula) -> int:
    """Formula size: every proposition occurrence and connective counts one."""
    return f.size


@dataclass(frozen=True)
class Accuracy:
    """Exact agreement ratio between a formula and the target."""

    agree: int
    total: int

    def __post_init__(self) -> None:
        if self.total <= 0:
            raise ValueError("accuracy over an empty dataset")
        if not 0 <= self.agree <= self.total:
            raise ValueError(f"agree count {self.agree} out of range 0..{self.total}")

    @property
    def value(self) -> Fraction:
        return Fraction(self.agree, self.total)

    def __float__(self) -> float:
        return self.agree / self.total

    def __str__(self) -> str:
        return f"{self.agree}/{self.total}"


def eval_mask(f: Formula | Sequence[Token], ds: EncodedDataset) -> int:
    """Evaluate a formula over every point at once; returns a bitmask."""
    tokens = f.rpn if isinstance(f, Formula) else f
    full = ds.full_mask
    stack: list[int] = []
    for token in tokens:
        if isinstance(token, Proposition):
            stack.append(prop_mask(token, ds))
        elif token is Op.NOT:
            stack.append(full ^ stack.pop())
        elif token is Op.AND:
            b = stack.pop()
            stack.append(stack.pop() & b)
        else:
            b = stack.pop()
            stack.append(stack.pop() | b)
    return stack[-1]


def eval_at(f: Formula, ds: EncodedDataset, point_id: int) -> bool:
    """Truth value of the formula at a single point."""
    return bool(eval_mask(f, ds) >> ds.position(point_id) & 1)


def accuracy(f: Formula, ds: EncodedDataset) -> Accuracy:
    """Fraction of points where the formula agrees with the target."""
    n = ds.n_points
    disagree = (eval_mask(f, ds) ^ ds.target).bit_count()
    return Accuracy(agree=n - disagree, total=n)


def negate(f: Formula) -> Formula:
    return Formula(f.rpn + (Op.NOT,))


# ---------------------------------------------------------------------------
# Canonical form
#
# One representative per syntactic symmetry class: no double negation, same-
# connective chains right-nested with strictly increasing arguments under the
# (size, token-sequence) order.  Every formula has a canonical equivalent of
# equal or smaller size, so searching canonical formulas only loses nothing.
# ---------------------------------------------------------------------------

_LEAF, _NOT, _AND, _OR = 0, 1, 2, 3
_OP_NODE = {Op.NOT: _NOT, Op.AND: _AND, Op.OR: _OR}


def _to_tree(tokens: Sequence[Token]):
    """Parse RPN into (node_kind, payload) tuples; payload is a leaf or children."""
    stack: list[tuple] = []
    for token in tokens:
        if isinstance(token, Proposition):
            stack.append((_LEAF, token))
        elif token is Op.NOT:
            stack.append((_NOT, stack.pop()))
        else:
            b = stack.pop()
            a = stack.pop()
            stack.append((_OP_NODE[token], (a, b)))
    return stack[-1]


def _tree_rpn_key(node) -> tuple[tuple[int, ...], ...]:
    kind, payload = node
    if kind == _LEAF:
        return ((0, *payload.key()),)
    if kind == _NOT:
        return _tree_rpn_key(payload) + ((1,),)
    a, b = payload
    return _tree_rpn_key(a) + _tree_rpn_key(b) + ((kind,),)


def _tree_size(node) -> int:
    kind, payload = node
    if kind == _LEAF:
        return 1
    if kind == _NOT:
        return 1 + _tree_size(payload)
    a, b = payload
    return 1 + _tree_size(a) + _tree_size(b)


def subterm_key(node) -> tuple:
    """Total order on subterms: size first, then RPN token sequence."""
    return (_tree_size(node), _tree_rpn_key(node))


def _canonical_tree(node) -> bool:
    kind, payload = node
    if kind == _LEAF:
        return True
    if kind == _NOT:
        if payload[0] == _NOT:
            return False
        return _canonical_tree(payload)
    # Same-connective chains must be right-nested: the left child of a binary
    # node never repeats the connective; the chain unfolds along the right spine.
    elements = []
    current = node
    while current[0] == kind:
        left, right = current[1]
        if left[0] == kind:
            return False
        elements.append(left)
        current = right
    elements.append(current)
    keys = [subterm_key(e) for e in elements]
    if any(a >= b for a, b in zip(keys, keys[1:])):
        return False
    return all(_canonical_tree(e) for e in elements)


def is_canonical(f: Formula) -> bool:
    return _canonical_tree(_to_tree(f.rpn))


# ---------------------------------------------------------------------------
# Rendering and parsing
# ---------------------------------------------------------------------------


def format_scaled(value: int, factor: int) -> str:
    """Render an integer-scaled threshold back on the raw scale."""
    if factor == 1:
        return str(value)
    text = str(Decimal(value) / Decimal(factor))
    if "." in text:
        text = text.rstrip("0").rstrip(".")
    return text or "0"


def _leaf_text(p: Proposition, provenance: Mapping[int, Provenance]) -> str:
    prov = provenance[p.attr]
    name = prov.display or prov.source
    if p.kind is PropKind.BOOL:
        return name
    if p.kind is PropKind.PIVOT:
        return f"{name}≥{format_scaled(p.lo, prov.factor)}"
    lo = format_scaled(p.lo, prov.factor)
    hi = format_scaled(p.hi, prov.factor)
    return f"{name}∈[{lo},{hi}]"


def render(f: Formula, provenance: Mapping[int, Provenance]) -> str:
    """Infix rendering with minimal parentheses (¬ binds tightest, then ∧, then ∨)."""

    def rec(node) -> tuple[str, int]:
        kind, payload = node
        if kind == _LEAF:
            return _leaf_text(payload, provenance), 4
        if kind == _NOT:
            text, prec = rec(payload)
            if prec < 3:
                text = f"({text})"
            return f"¬{text}", 3
        own = 2 if kind == _AND else 1
        glue = " ∧ " if kind == _AND else " ∨ "
        parts = []
        for child in _flatten(node, kind):
            text, prec = rec(child)
            if prec < own:
                text = f"({text})"
            parts.append(text)
        return glue.join(parts), own

    return rec(_to_tree(f.rpn))[0]


def _flatten(node, kind):
    out = []
    stack = [node]
    while stack:
        current = stack.pop()
        if current[0] == kind:
            a, b = current[1]
            stack.append(b)
            stack.append(a)
        else:
            out.append(current)
    return out


# names may contain '=' (one-hot labels like color=red) but not '<' or '>'
_TOKEN_RE = re.compile(
    r"\s*(?:(?P<lparen>\()|(?P<rparen>\))|(?P<not>¬|!|~)|(?P<and>∧|&+)|(?P<or>∨|\|+)"
    r"|(?P<ge>≥|>=)|(?P<in>∈|\bin\b)|(?P<lbrack>\[)|(?P<rbrack>\])|(?P<comma>,)"
    r"|(?P<name>[^()¬!~∧&∨|≥∈\[\],\s<>]+))"
)


def _tokenize(text: str) -> list[tuple[str, str]]:
    tokens = []
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None or match.end() == pos:
            raise FormulaFormatError(f"cannot tokenize formula at ...{text[pos:pos + 20]!r}")
        pos = match.end()
        for group, value in match.groupdict().items():
            if value is not None:
                tokens.append((group, value))
                break
    return tokens


def _name_resolver(provenance: Mapping[int, Provenance]):
    by_display: dict[str, int] = {}
    for attr, prov in provenance.items():
        by_display[prov.display or prov.source] = attr
    return by_display


def _scale_threshold(raw: str, factor: int, name: str) -> int:
    try:
        value = Decimal(raw)
    except InvalidOperation:
        raise FormulaFormatError(f"bad threshold {raw!r} for {name!r}") from None
    scaled = value * factor
    if scaled != scaled.to_integral_value():
        raise FormulaFormatError(
            f"threshold {raw!r} for {name!r} needs more decimals than the schema declares"
        )
    return int(scaled)


class _Parser:
    """Recursive descent over the rendered grammar; builds right-nested chains."""

    def __init__(self, tokens: list[tuple[str, str]], provenance: Mapping[int, Provenance]):
        self.tokens = tokens
        self.pos = 0
        self.names = _name_resolver(provenance)
        self.provenance = provenance

    def peek(self) -> str | None:
        return self.tokens[self.pos][0] if self.pos < len(self.tokens) else None

    def take(self, kind: str) -> str:
        if self.peek() != kind:
            raise FormulaFormatError(f"expected {kind} at token {self.pos}")
        value = self.tokens[self.pos][1]
        self.pos += 1
        return value

    def parse(self) -> list[Token]:
        rpn = self.or_expr()
        if self.pos != len(self.tokens):
            raise FormulaFormatError("trailing tokens after formula")
        return rpn

    def or_expr(self) -> list[Token]:
        parts = [self.and_expr()]
        while self.peek() == "or":
            self.take("or")
            parts.append(self.and_expr())
        return self._chain(parts, Op.OR)

    def and_expr(self) -> list[Token]:
        parts = [self.factor()]
        while self.peek() == "and":
            self.take("and")
            parts.append(self.factor())
        return self._chain(parts, Op.AND)

    @staticmethod
    def _chain(parts: list[list[Token]], op: Op) -> list[Token]:
        rpn: list[Token] = []
        for part in parts:
            rpn.extend(part)
        rpn.extend([op] * (len(parts) - 1))
        return rpn

    def factor(self) -> list[Token]:
        if self.peek() == "not":
            self.take("not")
            return self.factor() + [Op.NOT]
        if self.peek() == "lparen":
            self.take("lparen")
            inner = self.or_expr()
            self.take("rparen")
            return inner
        return self.leaf()

    def leaf(self) -> list[Token]:
        name = self.take("name")
        if name not in self.names:
            raise FormulaFormatError(f"unknown attribute {name!r}")
        attr = self.names[name]
        prov = self.provenance[attr]
        if self.peek() == "ge":
            self.take("ge")
            raw = self.take("name")
            return [pivot(attr, _scale_threshold(raw, prov.factor, name))]
        if self.peek() == "in":
            self.take("in")
            self.take("lbrack")
            lo = self.take("name")
            self.take("comma")
            hi = self.take("name")
            self.take("rbrack")
            return [
                interval(
                    attr,
                    _scale_threshold(lo, prov.factor, name),
                    _scale_threshold(hi, prov.factor, name),
                )
            ]
        if prov.kind != "boolean":
            raise FormulaFormatError(f"numeric attribute {name!r} used without a threshold")
        return [bool_attr(attr)]


def parse(text: str, provenance: Mapping[int, Provenance]) -> Formula:
    """Parse the rendered infix grammar back into a formula.

    Accepts the unicode connectives of :func:`render` and the ASCII spellings
    ``! & | >= in``.
    """
    rpn = _Parser(_tokenize(text), provenance).parse()
    return Formula(tuple(rpn))


# ---------------------------------------------------------------------------
# Machine-readable serialization: the RPN token list with attribute names
# resolved through provenance and thresholds on the raw scale.
# ---------------------------------------------------------------------------


def to_json_obj(f: Formula, provenance: Mapping[int, Provenance]) -> dict:
    tokens: list[dict] = []
    for token in f.rpn:
        if isinstance(token, Proposition):
            prov = provenance[token.attr]
            name = prov.display or prov.source
            if token.kind is PropKind.BOOL:
                tokens.append({"op": "leaf", "kind": "bool", "attr": name})
            elif token.kind is PropKind.PIVOT:
                tokens.append(
                    {
                        "op": "leaf",
                        "kind": "pivot",
                        "attr": name,
                        "threshold": format_scaled(token.lo, prov.factor),
                    }
                )
            else:
                tokens.append(
                    {
                        "op": "leaf",
                        "kind": "interval",
                        "attr": name,
                        "lo": format_scaled(token.lo, prov.factor),
                        "hi": format_scaled(token.hi, prov.factor),
                    }
                )
        else:
            tokens.append({"op": {Op.NOT: "not", Op.AND: "and", Op.OR: "or"}[token]})
    return {"rpn": tokens}


def to_json(f: Formula, provenance: Mapping[int, Provenance]) -> str:
    return json.dumps(to_json_obj(f, provenance), sort_keys=True, separators=(",", ":"))


def serialized_leaf_names(obj: dict) -> frozenset[str]:
    """Attribute names referenced by a serialized formula."""
    if not isinstance(obj, dict) or "rpn" not in obj:
        raise FormulaFormatError("serialized formula needs an 'rpn' list")
    return frozenset(
        str(entry["attr"]) for entry in obj["rpn"] if entry.get("op") == "leaf"
    )


def from_json_obj(obj: dict, provenance: Mapping[int, Provenance]) -> Formula:
    """Rebuild a formula from its serialized token list."""
    if not isinstance(obj, dict) or "rpn" not in obj:
        raise FormulaFormatError("serialized formula needs an 'rpn' list")
    names = _name_resolver(provenance)
    rpn: list[Token] = []
    for entry in obj["rpn"]:
        op = entry.get("op")
        if op == "not":
            rpn.append(Op.NOT)
        elif op == "and":
            rpn.append(Op.AND)
        elif op == "or":
            rpn.append(Op.OR)
        elif op == "leaf":
            name = str(entry.get("attr"))
            kind = entry.get("kind")
            if name not in names:
                raise FormulaFormatError(f"unknown attribute {name!r} in serialized formula")
            attr = names[name]
            prov = provenance[attr]
            if kind == "bool":
                rpn.append(bool_attr(attr))
            elif kind == "pivot":
                rpn.append(pivot(attr, _scale_threshold(str(entry["threshold"]), prov.factor, name)))
            elif kind == "interval":
                rpn.append(
                    interval(
                        attr,
                        _scale_threshold(str(entry["lo"]), prov.factor, name),
                        _scale_threshold(str(entry["hi"]), prov.factor, name),
                    )
                )
            else:
                raise FormulaFormatError(f"unknown leaf kind {kind!r}")
        else:
            raise FormulaFormatError(f"unknown token op {op!r}")
    try:
        return Formula(tuple(rpn))
    except ValueError as exc:
        raise FormulaFormatError(str(exc)) from exc


def from_json(text: str, provenance: Mapping[int, Provenance]) -> Formula:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormulaFormatError(f"bad formula JSON: {exc}") from exc
    return from_json_obj(obj, provenance)
