"""CSV ingestion, cleaning, one-hot encoding, integer scaling, splits and folds.

The end product of this module is an :class:`EncodedDataset`: an immutable
table whose boolean attributes are stored as bitmasks over point positions,
whose numeric attributes are integer-scaled value tuples, and whose binary
target is a bitmask.  Everything downstream (propositions, formulas, search)
works on this representation only.
"""

from __future__ import annotations

import csv
import json
import math
import random
import warnings
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation, ROUND_HALF_UP
from pathlib import Path
from typing import Mapping, Sequence

from .errors import (
    EmptyDatasetError,
    FoldError,
    SchemaError,
    ScalingError,
    SplitError,
    TargetError,
)

BOOLEAN_TRUE = frozenset({"1", "true", "yes", "t", "y"})
BOOLEAN_FALSE = frozenset({"0", "false", "no", "f", "n"})
DEFAULT_POSITIVE = ("1", "true", "yes")
DEFAULT_MISSING = ("", "?", "na", "n/a", "nan", "none", "null")

# Scaled numeric values must stay within a signed 64-bit range so reports and
# serialized formulas stay portable.
MAX_SCALED = 2**63 - 1

KINDS = ("boolean", "categorical", "numeric")

Cell = bool | str | Decimal | None


@dataclass(frozen=True)
class AttributeSchema:
    """Declared type of one raw column.

    ``decimals`` is the number of decimal places to preserve when a numeric
    column is scaled to integers.  ``origin`` is set by one-hot encoding to
    remember (source column, category label).
    """

    name: str
    kind: str
    decimals: int = 0
    origin: tuple[str, str] | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise SchemaError(f"unknown column kind {self.kind!r} for {self.name!r}")
        if self.decimals < 0:
            raise SchemaError(f"negative decimals for {self.name!r}")
        if self.kind != "numeric" and self.decimals != 0:
            raise SchemaError(f"decimals declared for non-numeric column {self.name!r}")


@dataclass(frozen=True)
class RowFilter:
    """Declarative keep-row predicate from the schema file."""

    column: str
    op: str
    value: Decimal | str | bool

    _OPS = {"==", "!=", "<", "<=", ">", ">="}

    def __post_init__(self) -> None:
        if self.op not in self._OPS:
            raise SchemaError(f"unknown row filter operator {self.op!r}")

    def matches(self, cell: Cell) -> bool:
        if cell is None:
            return False
        if isinstance(self.value, Decimal) != isinstance(cell, Decimal):
            # Mixed-type comparisons only make sense for equality tests.
            if self.op == "!=":
                return True
            if self.op == "==":
                return False
            raise SchemaError(
                f"row filter on {self.column!r} compares {type(cell).__name__} with "
                f"{type(self.value).__name__}"
            )
        if self.op == "==":
            return cell == self.value
        if self.op == "!=":
            return cell != self.value
        if self.op == "<":
            return cell < self.value
        if self.op == "<=":
            return cell <= self.value
        if self.op == ">":
            return cell > self.value
        return cell >= self.value


@dataclass(frozen=True)
class DatasetSpec:
    """Parsed schema file: column declarations plus ingestion policy."""

    columns: tuple[AttributeSchema, ...]
    target: str
    positive_values: tuple[str, ...] = DEFAULT_POSITIVE
    missing_values: tuple[str, ...] = DEFAULT_MISSING
    drop_columns: tuple[str, ...] = ()
    row_filters: tuple[RowFilter, ...] = ()


def load_schema(path: str | Path) -> DatasetSpec:
    """Read a JSON schema file declaring per-column kinds and policy knobs."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"schema file {path}: {exc}") from exc
    if not isinstance(raw, dict) or "columns" not in raw or "target" not in raw:
        raise SchemaError(f"schema file {path}: needs 'columns' and 'target'")
    columns = []
    for entry in raw["columns"]:
        if not isinstance(entry, dict) or "name" not in entry or "kind" not in entry:
            raise SchemaError(f"schema file {path}: column entries need 'name' and 'kind'")
        columns.append(
            AttributeSchema(
                name=str(entry["name"]),
                kind=str(entry["kind"]),
                decimals=int(entry.get("decimals", 0)),
            )
        )
    names = [c.name for c in columns]
    if len(set(names)) != len(names):
        raise SchemaError(f"schema file {path}: duplicate column names")
    filters = []
    for entry in raw.get("row_filters", ()):
        value = entry.get("value")
        if isinstance(value, bool):
            pass
        elif isinstance(value, (int, float)):
            value = Decimal(str(value))
        else:
            value = str(value)
        filters.append(RowFilter(str(entry["column"]), str(entry.get("op", "==")), value))
    return DatasetSpec(
        columns=tuple(columns),
        target=str(raw["target"]),
        positive_values=tuple(str(v).lower() for v in raw.get("positive_values", DEFAULT_POSITIVE)),
        missing_values=tuple(str(v).lower() for v in raw.get("missing_values", DEFAULT_MISSING)),
        drop_columns=tuple(str(c) for c in raw.get("drop_columns", ())),
        row_filters=tuple(filters),
    )


@dataclass(frozen=True)
class DataTable:
    """Raw parsed table: one cell per schema entry per row, plus a target name."""

    schema: tuple[AttributeSchema, ...]
    rows: tuple[tuple[Cell, ...], ...]
    target_name: str

    def __post_init__(self) -> None:
        width = len(self.schema)
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise SchemaError(f"row {i} has {len(row)} cells, expected {width}")
        target = self.column_schema(self.target_name)
        if target is None:
            raise TargetError(f"target column {self.target_name!r} not in schema")
        if target.kind != "boolean":
            raise TargetError(f"target column {self.target_name!r} is not boolean")

    def column_schema(self, name: str) -> AttributeSchema | None:
        for entry in self.schema:
            if entry.name == name:
                return entry
        return None

    def column_index(self, name: str) -> int:
        for i, entry in enumerate(self.schema):
            if entry.name == name:
                return i
        raise SchemaError(f"no column named {name!r}")

    @property
    def n_rows(self) -> int:
        return len(self.rows)


def load_csv(
    path: str | Path,
    schema: Sequence[AttributeSchema],
    target_name: str,
    *,
    positive_values: Sequence[str] = DEFAULT_POSITIVE,
    missing_values: Sequence[str] = DEFAULT_MISSING,
) -> DataTable:
    """Parse a CSV file against a declared schema.

    Cells that fail to parse under their declared kind become missing markers;
    `clean` removes them later.  The target column must be declared boolean and
    carry exactly two distinct non-missing literals, one of them recognized by
    ``positive_values`` (case-insensitive).
    """
    missing = frozenset(v.lower() for v in missing_values)
    positive = frozenset(v.lower() for v in positive_values)
    by_name = {entry.name: entry for entry in schema}
    if len(by_name) != len(schema):
        raise SchemaError("duplicate names in schema")

    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        if len(header) != len(schema) or set(header) != set(by_name):
            raise SchemaError(
                f"{path}: header {header} does not match schema columns {sorted(by_name)}"
            )
        ordered = tuple(by_name[name] for name in header)
        raw_rows = [[cell.strip() for cell in row] for row in reader]

    if target_name not in by_name:
        raise TargetError(f"target column {target_name!r} not in schema")
    if by_name[target_name].kind != "boolean":
        raise TargetError(f"target column {target_name!r} must be declared boolean")

    target_pos = header.index(target_name)
    target_literals = {
        row[target_pos].lower()
        for row in raw_rows
        if row[target_pos].lower() not in missing
    }
    if len(target_literals) != 2:
        raise TargetError(
            f"target column {target_name!r} has {len(target_literals)} distinct values, expected 2"
        )
    positive_found = target_literals & positive
    if not positive_found:
        raise TargetError(
            f"no positive literal among target values {sorted(target_literals)}; "
            f"declare one via positive_values"
        )
    if len(positive_found) == 2:
        raise TargetError(f"both target values {sorted(target_literals)} are declared positive")

    def parse_cell(text: str, entry: AttributeSchema, col: int) -> Cell:
        low = text.lower()
        if low in missing:
            return None
        if col == target_pos:
            return low in positive_found
        if entry.kind == "boolean":
            if low in BOOLEAN_TRUE:
                return True
            if low in BOOLEAN_FALSE:
                return False
            return None
        if entry.kind == "numeric":
            try:
                return Decimal(text)
            except InvalidOperation:
                return None
        return text

    rows = []
    for i, raw in enumerate(raw_rows):
        if len(raw) != len(header):
            raise SchemaError(f"{path}: row {i + 2} has {len(raw)} cells, expected {len(header)}")
        rows.append(tuple(parse_cell(text, entry, col) for col, (text, entry) in enumerate(zip(raw, ordered))))

    return DataTable(schema=ordered, rows=tuple(rows), target_name=target_name)


def load_table(data_path: str | Path, spec: DatasetSpec) -> DataTable:
    """Convenience: parse a CSV with the policy of a schema file."""
    return load_csv(
        data_path,
        spec.columns,
        spec.target,
        positive_values=spec.positive_values,
        missing_values=spec.missing_values,
    )


def clean(
    table: DataTable,
    drop_columns: Sequence[str] = (),
    row_filters: Sequence[RowFilter] = (),
) -> DataTable:
    """Drop the named columns, apply row filters, then remove rows with missing cells."""
    for name in drop_columns:
        if table.column_schema(name) is None:
            raise SchemaError(f"drop list names unknown column {name!r}")
        if name == table.target_name:
            raise SchemaError("cannot drop the target column")
    dropped = frozenset(drop_columns)
    keep = [i for i, entry in enumerate(table.schema) if entry.name not in dropped]
    schema = tuple(table.schema[i] for i in keep)
    rows = [tuple(row[i] for i in keep) for row in table.rows]

    name_to_idx = {entry.name: i for i, entry in enumerate(schema)}
    for filt in row_filters:
        if filt.column not in name_to_idx:
            raise SchemaError(f"row filter names unknown column {filt.column!r}")
    if row_filters:
        rows = [
            row
            for row in rows
            if all(f.matches(row[name_to_idx[f.column]]) for f in row_filters)
        ]

    rows = [row for row in rows if all(cell is not None for cell in row)]
    if not rows:
        raise EmptyDatasetError("no rows survived cleaning")
    return DataTable(schema=schema, rows=tuple(rows), target_name=table.target_name)


def one_hot_encode(table: DataTable) -> DataTable:
    """Replace each categorical column by one boolean column per category.

    The new columns are named ``column=category`` and remember their origin.
    Categorical columns with a single category carry no information and are
    dropped with a warning.
    """
    for row in table.rows:
        if any(cell is None for cell in row):
            raise ValueError("one_hot_encode requires a cleaned table")
    schema: list[AttributeSchema] = []
    columns: list[list[Cell]] = []
    for idx, entry in enumerate(table.schema):
        values = [row[idx] for row in table.rows]
        if entry.kind != "categorical":
            schema.append(entry)
            columns.append(values)
            continue
        categories = sorted({str(v) for v in values})
        if len(categories) == 1:
            warnings.warn(
                f"categorical column {entry.name!r} has a single category; dropped",
                stacklevel=2,
            )
            continue
        for cat in categories:
            schema.append(
                AttributeSchema(
                    name=f"{entry.name}={cat}",
                    kind="boolean",
                    origin=(entry.name, cat),
                )
            )
            columns.append([v == cat for v in values])
    rows = tuple(tuple(col[r] for col in columns) for r in range(table.n_rows))
    return DataTable(schema=tuple(schema), rows=rows, target_name=table.target_name)


@dataclass(frozen=True)
class Provenance:
    """Origin of one encoded attribute: raw column, category, scale factor."""

    source: str
    kind: str  # "boolean" | "numeric"
    category: str | None = None
    factor: int = 1
    display: str = ""


@dataclass(frozen=True)
class EncodedDataset:
    """Immutable encoded table over which formulas are evaluated.

    ``point_ids`` are stable identifiers that survive splits and folds.  All
    bitmasks index *positions* (0-based order inside this dataset), not ids.
    """

    point_ids: tuple[int, ...]
    bool_attrs: Mapping[int, int]
    num_attrs: Mapping[int, tuple[int, ...]]
    target: int
    provenance: Mapping[int, Provenance]
    _id_to_pos: Mapping[int, int] = field(repr=False, compare=False, default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "_id_to_pos", {pid: pos for pos, pid in enumerate(self.point_ids)}
        )
        n = self.n_points
        for attr, values in self.num_attrs.items():
            if len(values) != n:
                raise ValueError(f"numeric attribute {attr} covers {len(values)} of {n} points")
        covered = set(self.bool_attrs) | set(self.num_attrs)
        if set(self.provenance) != covered:
            raise ValueError("provenance does not cover the encoded attributes exactly")
        if self.target >> n:
            raise ValueError("target mask exceeds the point range")

    @property
    def n_points(self) -> int:
        return len(self.point_ids)

    @property
    def full_mask(self) -> int:
        return (1 << self.n_points) - 1

    @property
    def attributes(self) -> tuple[int, ...]:
        return tuple(sorted(set(self.bool_attrs) | set(self.num_attrs)))

    def is_boolean(self, attr: int) -> bool:
        return attr in self.bool_attrs

    def position(self, point_id: int) -> int:
        try:
            return self._id_to_pos[point_id]
        except KeyError:
            raise KeyError(f"point id {point_id} not in dataset") from None

    def value(self, attr: int, point_id: int) -> int:
        return self.num_attrs[attr][self.position(point_id)]

    def target_ids(self) -> frozenset[int]:
        return frozenset(
            pid for pos, pid in enumerate(self.point_ids) if self.target >> pos & 1
        )

    def restrict_positions(self, positions: Sequence[int]) -> "EncodedDataset":
        """Sub-dataset holding the given positions, in the given order."""
        bool_attrs = {}
        for attr, mask in self.bool_attrs.items():
            bool_attrs[attr] = _gather_bits(mask, positions)
        num_attrs = {
            attr: tuple(values[p] for p in positions)
            for attr, values in self.num_attrs.items()
        }
        return EncodedDataset(
            point_ids=tuple(self.point_ids[p] for p in positions),
            bool_attrs=bool_attrs,
            num_attrs=num_attrs,
            target=_gather_bits(self.target, positions),
            provenance=self.provenance,
        )

    def restrict_ids(self, ids: Sequence[int]) -> "EncodedDataset":
        """Sub-dataset of the given point ids, kept in this dataset's order."""
        wanted = frozenset(ids)
        positions = [p for p, pid in enumerate(self.point_ids) if pid in wanted]
        if len(positions) != len(wanted):
            raise KeyError("restrict_ids: some ids are not in the dataset")
        return self.restrict_positions(positions)


def _gather_bits(mask: int, positions: Sequence[int]) -> int:
    out = 0
    for j, p in enumerate(positions):
        if mask >> p & 1:
            out |= 1 << j
    return out


def scale_value(value: Decimal, decimals: int, column: str = "?") -> int:
    """Scale one numeric cell to the integer domain, rounding half away from zero."""
    scaled = (value.scaleb(decimals)).to_integral_value(rounding=ROUND_HALF_UP)
    result = int(scaled)
    if abs(result) > MAX_SCALED:
        raise ScalingError(f"column {column!r}: scaled value {result} overflows the integer domain")
    return result


def scale_to_integers(table: DataTable) -> EncodedDataset:
    """Turn a cleaned, one-hot encoded table into an :class:`EncodedDataset`.

    Numeric columns are multiplied by ``10**decimals`` and rounded half away
    from zero; the factor lands in the provenance so thresholds can be
    rendered back on the raw scale.
    """
    n = table.n_rows
    target_idx = table.column_index(table.target_name)
    bool_attrs: dict[int, int] = {}
    num_attrs: dict[int, tuple[int, ...]] = {}
    provenance: dict[int, Provenance] = {}
    attr = 0
    for idx, entry in enumerate(table.schema):
        if idx == target_idx:
            continue
        if entry.kind == "categorical":
            raise ValueError("scale_to_integers requires a one-hot encoded table")
        column = [row[idx] for row in table.rows]
        if any(cell is None for cell in column):
            raise ValueError("scale_to_integers requires a cleaned table")
        if entry.kind == "boolean":
            mask = 0
            for pos, cell in enumerate(column):
                if cell:
                    mask |= 1 << pos
            bool_attrs[attr] = mask
            source, category = entry.origin if entry.origin else (entry.name, None)
            provenance[attr] = Provenance(
                source=source, kind="boolean", category=category, display=entry.name
            )
        else:
            factor = 10**entry.decimals
            values = tuple(
                scale_value(cell, entry.decimals, entry.name) for cell in column
            )
            num_attrs[attr] = values
            provenance[attr] = Provenance(
                source=entry.name, kind="numeric", factor=factor, display=entry.name
            )
        attr += 1

    target_mask = 0
    for pos, row in enumerate(table.rows):
        if row[target_idx]:
            target_mask |= 1 << pos
    return EncodedDataset(
        point_ids=tuple(range(n)),
        bool_attrs=bool_attrs,
        num_attrs=num_attrs,
        target=target_mask,
        provenance=provenance,
    )


def prepare(table: DataTable, spec: DatasetSpec) -> EncodedDataset:
    """Full preprocessing pipeline: clean, one-hot encode, scale to integers."""
    cleaned = clean(table, spec.drop_columns, spec.row_filters)
    return scale_to_integers(one_hot_encode(cleaned))


def split_train_validation(
    ds: EncodedDataset, ratio: float, seed: int
) -> tuple[EncodedDataset, EncodedDataset]:
    """Deterministic random split; the first part holds round(ratio * n) points.

    Membership is decided by a seeded shuffle; both parts keep the original
    point order so the split is a pure function of (ds, ratio, seed).
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"split ratio must be in (0, 1), got {ratio}")
    n = ds.n_points
    if n < 2:
        raise SplitError("cannot split fewer than 2 points")
    k = int(math.floor(ratio * n + 0.5))
    if k == 0 or k == n:
        raise SplitError(f"split of {n} points at ratio {ratio} leaves an empty part")
    positions = list(range(n))
    random.Random(seed).shuffle(positions)
    train = sorted(positions[:k])
    val = sorted(positions[k:])
    return ds.restrict_positions(train), ds.restrict_positions(val)


@dataclass(frozen=True)
class FoldPlan:
    """k disjoint point-id subsets covering the whole dataset."""

    folds: tuple[tuple[int, ...], ...]
    seed: int


def make_folds(ds: EncodedDataset, k: int, seed: int) -> FoldPlan:
    """Partition the points into k folds whose sizes differ by at most one."""
    if k < 2:
        raise FoldError(f"need at least 2 folds, got {k}")
    n = ds.n_points
    if k > n:
        raise FoldError(f"cannot make {k} folds from {n} points")
    positions = list(range(n))
    random.Random(seed).shuffle(positions)
    base, extra = divmod(n, k)
    folds = []
    start = 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        chunk = sorted(positions[start : start + size])
        folds.append(tuple(ds.point_ids[p] for p in chunk))
        start += size
    return FoldPlan(folds=tuple(folds), seed=seed)
