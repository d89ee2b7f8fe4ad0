"""Tabular data containers, CSV ingestion and client-shard partitioners."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

NA_TOKEN = "<NA>"


class DataError(ValueError):
    """Malformed input data or an unsatisfiable partition request."""


class EmptyTableError(DataError):
    """No usable rows remain after ingestion."""


class ColumnKind(str, Enum):
    CATEGORICAL = "categorical"
    CONTINUOUS = "continuous"


@dataclass(frozen=True)
class ColumnMeta:
    name: str
    kind: ColumnKind
    index: int


@dataclass(frozen=True)
class Table:
    """Column-major table: categorical columns hold str, continuous float64."""

    schema: tuple[ColumnMeta, ...]
    columns: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        if len(self.schema) != len(self.columns):
            raise DataError("schema and column storage disagree")
        names = [c.name for c in self.schema]
        if len(set(names)) != len(names):
            raise DataError(f"duplicate column names: {names}")
        lengths = {len(col) for col in self.columns}
        if len(lengths) > 1:
            raise DataError(f"ragged columns: lengths {sorted(lengths)}")
        for meta, col in zip(self.schema, self.columns):
            if meta.kind is ColumnKind.CONTINUOUS:
                if col.dtype != np.float64:
                    raise DataError(f"column {meta.name!r} must be float64")
                if col.size and not np.isfinite(col).all():
                    raise DataError(f"column {meta.name!r} has non-finite values")

    @property
    def n_rows(self) -> int:
        return len(self.columns[0]) if self.columns else 0

    @property
    def n_cols(self) -> int:
        return len(self.schema)

    def column(self, name: str) -> np.ndarray:
        for meta, col in zip(self.schema, self.columns):
            if meta.name == name:
                return col
        raise KeyError(name)

    def meta(self, name: str) -> ColumnMeta:
        for m in self.schema:
            if m.name == name:
                return m
        raise KeyError(name)

    def take(self, indices: np.ndarray) -> "Table":
        return Table(self.schema, tuple(col[indices] for col in self.columns))

    def to_rows(self) -> list[tuple]:
        return list(zip(*[col.tolist() for col in self.columns]))


class ScenarioKind(str, Enum):
    FULL_COPY = "full_copy"
    IID_EQUAL = "iid_equal"
    IMBALANCED_IID = "imbalanced_iid"
    REPEATED_ROW = "repeated_row"


@dataclass(frozen=True)
class ScenarioSpec:
    """How to split one source table into per-client shards.

    ``sizes`` may be omitted for FULL_COPY, where every client receives the
    whole table. IID scenarios sample rows uniformly with replacement.
    REPEATED_ROW gives the last client a single uniformly drawn row repeated
    ``sizes[-1]`` times, which models a degenerate participant.
    """

    kind: ScenarioKind
    client_count: int
    sizes: tuple[int, ...] | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.client_count < 1:
            raise DataError("client_count must be >= 1")
        if self.sizes is None:
            if self.kind is not ScenarioKind.FULL_COPY:
                raise DataError(f"sizes required for scenario {self.kind.value}")
            return
        if len(self.sizes) != self.client_count:
            raise DataError(
                f"sizes has {len(self.sizes)} entries for {self.client_count} clients"
            )
        if any(s < 1 for s in self.sizes):
            raise DataError("every shard size must be >= 1")


def _infer_kind(tokens: list[str]) -> ColumnKind:
    saw_value = False
    for tok in tokens:
        if tok == "":
            continue
        saw_value = True
        try:
            value = float(tok)
        except ValueError:
            return ColumnKind.CATEGORICAL
        if not math.isfinite(value):
            return ColumnKind.CATEGORICAL
    return ColumnKind.CONTINUOUS if saw_value else ColumnKind.CATEGORICAL


def load_csv(path: str | Path, schema_hint: dict[str, ColumnKind] | None = None) -> Table:
    """Read a comma-delimited UTF-8 file with a header row into a Table.

    Column kinds are inferred from the data: a column is continuous when every
    non-empty cell parses to a finite float, categorical otherwise.
    ``schema_hint`` overrides inference per column name. Rows whose continuous
    cells fail to parse are dropped with a counted warning; empty categorical
    cells become the reserved token ``<NA>``.
    """
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, expected a header row") from None
        raw_rows = list(reader)

    if len(set(header)) != len(header):
        raise DataError(f"{path}: duplicate column names in header")
    for i, row in enumerate(raw_rows):
        if len(row) != len(header):
            raise DataError(
                f"{path}: row {i + 2} has {len(row)} cells, header has {len(header)}"
            )
    if schema_hint:
        unknown = sorted(set(schema_hint) - set(header))
        if unknown:
            raise DataError(f"{path}: schema hint names unknown columns {unknown}")
    if not raw_rows:
        raise EmptyTableError(f"{path}: no data rows")

    raw_cols = [[row[j] for row in raw_rows] for j in range(len(header))]
    kinds = []
    for name, tokens in zip(header, raw_cols):
        hinted = (schema_hint or {}).get(name)
        kinds.append(hinted if hinted is not None else _infer_kind(tokens))

    keep = np.ones(len(raw_rows), dtype=bool)
    parsed: list[np.ndarray] = []
    for name, kind, tokens in zip(header, kinds, raw_cols):
        if kind is ColumnKind.CATEGORICAL:
            parsed.append(
                np.array([t if t != "" else NA_TOKEN for t in tokens], dtype=object)
            )
            continue
        values = np.empty(len(tokens), dtype=np.float64)
        for i, tok in enumerate(tokens):
            try:
                v = float(tok)
            except ValueError:
                v = math.nan
            if not math.isfinite(v):
                keep[i] = False
                v = 0.0
            values[i] = v
        parsed.append(values)

    dropped = int((~keep).sum())
    if dropped:
        logger.warning("%s: dropped %d rows with unparseable continuous cells", path, dropped)
    if dropped == len(raw_rows):
        raise EmptyTableError(f"{path}: no usable rows after dropping {dropped}")

    schema = tuple(
        ColumnMeta(name, kind, j) for j, (name, kind) in enumerate(zip(header, kinds))
    )
    columns = tuple(col[keep] for col in parsed)
    return Table(schema, columns)


def partition(table: Table, spec: ScenarioSpec) -> list[Table]:
    """Split ``table`` into per-client shards.

    Each client's draw is seeded with ``spec.seed ^ client_index``, so shards
    are reproducible independently of one another.
    """
    if table.n_rows < 1:
        raise EmptyTableError("cannot partition an empty table")

    if spec.kind is ScenarioKind.FULL_COPY:
        sizes = spec.sizes or tuple([table.n_rows] * spec.client_count)
        if any(s != table.n_rows for s in sizes):
            raise DataError("full_copy shards must match the table row count")
        return [table] * spec.client_count

    assert spec.sizes is not None
    shards: list[Table] = []
    for i, size in enumerate(spec.sizes):
        rng = np.random.default_rng(spec.seed ^ i)
        if spec.kind is ScenarioKind.REPEATED_ROW and i == spec.client_count - 1:
            row = int(rng.integers(0, table.n_rows))
            indices = np.full(size, row, dtype=np.int64)
        else:
            indices = rng.integers(0, table.n_rows, size=size)
        shards.append(table.take(indices))
    return shards
