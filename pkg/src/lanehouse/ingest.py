"""Loading, cleaning and encoding of the raw lane-house rental CSV.

The pipeline is ``load_csv -> drop_missing -> dedup -> build_design_matrix``.
Every step is a pure function over immutable inputs.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

DEFAULT_TRUTHY = frozenset({"1", "yes", "true", "有"})
KINDS = ("numeric", "boolean", "ordinal", "categorical")


class IngestError(ValueError):
    """Raised for malformed input files, schemas or cells."""


# ---------------------------------------------------------------- raw table


@dataclass(frozen=True)
class RawTable:
    column_order: tuple[str, ...]
    rows: tuple[Mapping[str, str], ...]

    def __post_init__(self):
        cols = set(self.column_order)
        if len(cols) != len(self.column_order):
            raise IngestError(f"duplicate column names in {self.column_order}")
        for i, row in enumerate(self.rows):
            if set(row) != cols:
                raise IngestError(f"row {i} keys do not match the header")

    def __len__(self) -> int:
        return len(self.rows)

    def cells(self, row: Mapping[str, str]) -> tuple[str, ...]:
        return tuple(row[c] for c in self.column_order)


def load_csv(path: str | Path) -> RawTable:
    """Read a header-first, RFC 4180 CSV keeping every cell as verbatim text.

    Fully blank lines are skipped. A row whose field count differs from the
    header raises :class:`IngestError` naming the 0-based data row index.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise IngestError(f"{path}: no header")
        header = tuple(header)
        rows = []
        for line in reader:
            if not line:
                continue
            if len(line) != len(header):
                raise IngestError(
                    f"{path}: ragged row {len(rows)} (line {reader.line_num}): "
                    f"expected {len(header)} fields, got {len(line)}"
                )
            rows.append(dict(zip(header, line)))
    return RawTable(header, tuple(rows))


def _check_columns(t: RawTable, names: Sequence[str]) -> None:
    unknown = [c for c in names if c not in t.column_order]
    if unknown:
        raise IngestError(f"unknown column(s): {', '.join(unknown)}")


def drop_missing(t: RawTable, required: Sequence[str]) -> RawTable:
    """Keep rows whose required cells are all non-blank."""
    _check_columns(t, required)
    kept = tuple(r for r in t.rows if all(r[c].strip() for c in required))
    return RawTable(t.column_order, kept)


def dedup(t: RawTable) -> RawTable:
    """Drop rows whose full cell tuple repeats an earlier row."""
    seen = set()
    kept = []
    for row in t.rows:
        key = t.cells(row)
        if key in seen:
            continue
        seen.add(key)
        kept.append(row)
    return RawTable(t.column_order, tuple(kept))


# ------------------------------------------------------------------ encoders


def is_truthy(cell: str, truthy=DEFAULT_TRUTHY) -> bool:
    return cell.strip().lower() in truthy


def compute_total_ssvalue(record: Mapping[str, str], amenity_columns: Sequence[str],
                          truthy=DEFAULT_TRUTHY) -> int:
    """Number of amenity columns whose cell is truthy."""
    missing = [c for c in amenity_columns if c not in record]
    if missing:
        raise IngestError(f"unknown amenity column(s): {', '.join(missing)}")
    return sum(1 for c in amenity_columns if is_truthy(record[c], truthy))


@dataclass(frozen=True)
class RankBin:
    """Interval ``[low, high)`` (``[low, high]`` when ``closed``) mapped to ``rank``."""

    low: float
    high: float
    rank: int
    closed: bool = False

    def __contains__(self, value) -> bool:
        if value < self.low:
            return False
        return value <= self.high if self.closed else value < self.high


DEFAULT_SSVALUE_BINS = (
    RankBin(0, 3, 1),
    RankBin(3, 6, 2),
    RankBin(6, 8, 3, closed=True),
)


def validate_bins(bins: Sequence[RankBin]) -> None:
    if not bins:
        raise IngestError("ordinal feature needs at least one bin")
    for b in bins:
        if not b.low < b.high and not (b.closed and b.low == b.high):
            raise IngestError(f"empty bin {b}")
    for prev, nxt in zip(bins, bins[1:]):
        if prev.closed or nxt.low != prev.high:
            raise IngestError(f"bins {prev} and {nxt} overlap or leave a gap")
        if nxt.rank < prev.rank:
            raise IngestError("bin ranks must be non-decreasing")


def rank_ordinal(count: float, bins: Sequence[RankBin] = DEFAULT_SSVALUE_BINS) -> int:
    for b in bins:
        if count in b:
            return b.rank
    raise IngestError(f"value {count} falls outside every ordinal bin")


def one_hot_encode(value: str, categories: Sequence[str]) -> np.ndarray:
    try:
        idx = list(categories).index(value)
    except ValueError:
        raise IngestError(f"unseen category {value!r} (expected one of {list(categories)})") from None
    out = np.zeros(len(categories), dtype=np.float64)
    out[idx] = 1.0
    return out


# -------------------------------------------------------------------- schema


@dataclass(frozen=True)
class FeatureEntry:
    name: str
    kind: str
    categories: tuple[str, ...] | None = None
    bins: tuple[RankBin, ...] | None = None
    # ordinal entries with amenities are derived counts, not raw columns
    amenities: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise IngestError(f"{self.name}: unknown kind {self.kind!r}")
        if self.kind == "categorical":
            if not self.categories:
                raise IngestError(f"{self.name}: categorical feature needs categories")
            if len(set(self.categories)) != len(self.categories):
                raise IngestError(f"{self.name}: duplicate categories")
        if self.kind == "ordinal":
            validate_bins(self.bins or ())

    @property
    def expanded_names(self) -> tuple[str, ...]:
        if self.kind == "categorical":
            return tuple(f"{self.name}-{c}" for c in self.categories)
        return (self.name,)

    @property
    def source_columns(self) -> tuple[str, ...]:
        return self.amenities if self.amenities else (self.name,)


@dataclass(frozen=True)
class FeatureSchema:
    entries: tuple[FeatureEntry, ...]
    target_name: str
    truthy: frozenset = DEFAULT_TRUTHY

    def __post_init__(self):
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            raise IngestError("duplicate feature names in schema")
        if self.target_name in names:
            raise IngestError("target must not also be a feature")

    @property
    def feature_names(self) -> list[str]:
        return [n for e in self.entries for n in e.expanded_names]

    def entry(self, name: str) -> FeatureEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def required_columns(self) -> list[str]:
        cols = [self.target_name]
        for e in self.entries:
            cols.extend(c for c in e.source_columns if c not in cols)
        return cols

    @property
    def one_hot_groups(self) -> list[list[int]]:
        groups, start = [], 0
        for e in self.entries:
            width = len(e.expanded_names)
            if e.kind == "categorical":
                groups.append(list(range(start, start + width)))
            start += width
        return groups

    @classmethod
    def from_dict(cls, doc: Mapping) -> FeatureSchema:
        try:
            entries = []
            for item in doc["features"]:
                bins = item.get("bins")
                if bins is not None:
                    bins = tuple(
                        RankBin(b["low"], b["high"], int(b["rank"]), bool(b.get("closed", False)))
                        for b in bins
                    )
                entries.append(FeatureEntry(
                    name=item["name"],
                    kind=item["kind"],
                    categories=tuple(item["categories"]) if "categories" in item else None,
                    bins=bins,
                    amenities=tuple(item["amenities"]) if "amenities" in item else None,
                ))
            truthy = frozenset(s.lower() for s in doc.get("truthy", DEFAULT_TRUTHY))
            return cls(tuple(entries), doc["target"], truthy)
        except KeyError as exc:
            raise IngestError(f"schema is missing key {exc}") from None

    def to_dict(self) -> dict:
        features = []
        for e in self.entries:
            item = {"name": e.name, "kind": e.kind}
            if e.categories is not None:
                item["categories"] = list(e.categories)
            if e.amenities is not None:
                item["amenities"] = list(e.amenities)
            if e.bins is not None:
                item["bins"] = [
                    {"low": b.low, "high": b.high, "rank": b.rank, "closed": b.closed} for b in e.bins
                ]
            features.append(item)
        return {"target": self.target_name, "truthy": sorted(self.truthy), "features": features}


def load_schema(path: str | Path) -> FeatureSchema:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise IngestError(f"schema file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise IngestError(f"{path}: invalid JSON ({exc})") from None
    return FeatureSchema.from_dict(doc)


def default_schema() -> FeatureSchema:
    text = resources.files("lanehouse.data").joinpath("default_schema.json").read_text(encoding="utf-8")
    return FeatureSchema.from_dict(json.loads(text))


# ----------------------------------------------------------- encoded outputs


@dataclass(frozen=True)
class HouseRecord:
    """One cleaned listing with typed per-entry values (categoricals stay text)."""

    row: int
    values: Mapping[str, float | str]
    amenities: tuple[str, ...]
    target: float

    def to_dict(self) -> dict:
        return {"row": self.row, "values": dict(self.values), "amenities": list(self.amenities),
                "target": self.target}

    @classmethod
    def from_dict(cls, doc: Mapping) -> HouseRecord:
        return cls(int(doc["row"]), dict(doc["values"]), tuple(doc["amenities"]), float(doc["target"]))


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    x: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]
    row_ids: np.ndarray = field(default=None)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
            raise IngestError(f"shape mismatch: x {x.shape}, y {y.shape}")
        if x.shape[1] != len(self.feature_names):
            raise IngestError("feature_names length differs from column count")
        if not (np.isfinite(x).all() and np.isfinite(y).all()):
            raise IngestError("design matrix contains NaN or infinite entries")
        row_ids = np.arange(len(y)) if self.row_ids is None else np.asarray(self.row_ids, dtype=np.int64)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "row_ids", row_ids)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def take(self, indices) -> DesignMatrix:
        indices = np.asarray(indices, dtype=np.int64)
        return DesignMatrix(self.x[indices], self.y[indices], self.feature_names, self.row_ids[indices])


def _parse_real(cell: str, row: int, column: str) -> float:
    try:
        value = float(cell.strip())
    except ValueError:
        raise IngestError(f"row {row}, column {column!r}: cannot parse {cell!r} as a number") from None
    if not math.isfinite(value):
        raise IngestError(f"row {row}, column {column!r}: non-finite value {cell!r}")
    return value


def parse_records(t: RawTable, schema: FeatureSchema) -> list[HouseRecord]:
    """Type every schema entry of every row; categoricals are validated, not expanded."""
    _check_columns(t, schema.required_columns())
    records = []
    for i, row in enumerate(t.rows):
        values: dict[str, float | str] = {}
        amenities: tuple[str, ...] = ()
        for e in schema.entries:
            if e.kind == "numeric":
                values[e.name] = _parse_real(row[e.name], i, e.name)
            elif e.kind == "boolean":
                values[e.name] = 1.0 if is_truthy(row[e.name], schema.truthy) else 0.0
            elif e.kind == "ordinal":
                if e.amenities:
                    count = compute_total_ssvalue(row, e.amenities, schema.truthy)
                    amenities = tuple(c for c in e.amenities if is_truthy(row[c], schema.truthy))
                else:
                    count = _parse_real(row[e.name], i, e.name)
                try:
                    values[e.name] = float(rank_ordinal(count, e.bins))
                except IngestError as exc:
                    raise IngestError(f"row {i}, column {e.name!r}: {exc}") from None
            else:
                value = row[e.name].strip()
                if value not in e.categories:
                    raise IngestError(f"row {i}, column {e.name!r}: unseen category {value!r}")
                values[e.name] = value
        target = _parse_real(row[schema.target_name], i, schema.target_name)
        records.append(HouseRecord(i, values, amenities, target))
    return records


def encode_records(records: Sequence[HouseRecord], schema: FeatureSchema) -> DesignMatrix:
    names = schema.feature_names
    x = np.zeros((len(records), len(names)), dtype=np.float64)
    for i, rec in enumerate(records):
        col = 0
        for e in schema.entries:
            if e.kind == "categorical":
                width = len(e.categories)
                x[i, col:col + width] = one_hot_encode(rec.values[e.name], e.categories)
                col += width
            else:
                x[i, col] = rec.values[e.name]
                col += 1
    y = np.array([r.target for r in records], dtype=np.float64)
    row_ids = np.array([r.row for r in records], dtype=np.int64)
    return DesignMatrix(x, y, names, row_ids)


def build_design_matrix(t: RawTable, schema: FeatureSchema) -> DesignMatrix:
    return encode_records(parse_records(t, schema), schema)


@dataclass(frozen=True)
class CleanResult:
    table: RawTable
    stage_counts: dict


def clean(t: RawTable, required: Sequence[str]) -> CleanResult:
    """Run the drop-missing and dedup steps, recording row counts per stage."""
    no_missing = drop_missing(t, required)
    unique = dedup(no_missing)
    counts = {"loaded": len(t), "after_drop_missing": len(no_missing), "after_dedup": len(unique)}
    return CleanResult(unique, counts)
