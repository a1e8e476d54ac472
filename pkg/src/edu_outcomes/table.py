"""Typed columnar tables and the dataset-construction transforms.

A :class:`Table` is an ordered collection of immutable :class:`Column` objects.
Numeric columns are float arrays with ``NaN`` in missing cells, integer columns
are ``int64`` arrays with a separate mask, categorical and text columns are
object arrays holding ``str`` or ``None``.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import yaml

from .errors import (
    ConfigError,
    DegenerateDistribution,
    DuplicateKey,
    EmptyGroupColumn,
    KeyMissing,
    MalformedCell,
    MissingHeader,
    ScoreOutOfRange,
    UnknownColumnInSchema,
)

log = logging.getLogger(__name__)

KINDS = ("numeric", "integer", "categorical", "text")
ROLES = ("key", "feature", "score", "group", "ignore")
DEFAULT_MISSING = ("", "NA", "N/A")
FAIL, PASS = "fail", "pass"


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Column:
    name: str
    kind: str
    values: np.ndarray
    missing: np.ndarray
    levels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown column kind {self.kind!r}")
        if len(self.values) != len(self.missing):
            raise ValueError(f"column {self.name!r}: values/missing length mismatch")
        if self.kind == "categorical":
            if self.levels is None:
                raise ValueError(f"categorical column {self.name!r} needs levels")
            allowed = set(self.levels)
            bad = {v for v, m in zip(self.values, self.missing) if not m and v not in allowed}
            if bad:
                raise ValueError(f"column {self.name!r}: values {sorted(bad)} not in levels")
        _frozen(self.values)
        _frozen(self.missing)

    def __len__(self):
        return len(self.values)

    @classmethod
    def from_values(cls, name, kind, values, levels=None) -> "Column":
        """Build a column from Python values; ``None`` (or NaN) marks a missing cell."""
        vals = list(values)
        missing = np.array(
            [v is None or (isinstance(v, float) and math.isnan(v)) for v in vals], dtype=bool
        )
        if kind == "numeric":
            arr = np.array([np.nan if m else float(v) for v, m in zip(vals, missing)], dtype=float)
        elif kind == "integer":
            arr = np.array([0 if m else int(v) for v, m in zip(vals, missing)], dtype=np.int64)
        else:
            arr = np.empty(len(vals), dtype=object)
            arr[:] = [None if m else str(v) for v, m in zip(vals, missing)]
            if kind == "categorical" and levels is None:
                levels = tuple(sorted({v for v in arr[~missing]}))
        if kind == "categorical":
            levels = tuple(levels)
        else:
            levels = None
        return cls(name, kind, arr, missing, levels)

    def take(self, idx) -> "Column":
        return Column(self.name, self.kind, self.values[idx].copy(), self.missing[idx].copy(), self.levels)

    def renamed(self, name: str) -> "Column":
        return Column(name, self.kind, self.values, self.missing, self.levels)

    def cell(self, i):
        return None if self.missing[i] else self.values[i].item() if self.kind in ("numeric", "integer") else self.values[i]

    def to_list(self) -> list:
        return [self.cell(i) for i in range(len(self))]

    def as_float(self) -> np.ndarray:
        """Numeric view with NaN for missing cells."""
        if self.kind not in ("numeric", "integer"):
            raise TypeError(f"column {self.name!r} is {self.kind}, not numeric")
        out = self.values.astype(float)
        out[self.missing] = np.nan
        return out

    @property
    def missing_fraction(self) -> float:
        return float(self.missing.mean()) if len(self) else 0.0


class Table:
    """Ordered, immutable set of equal-length columns."""

    def __init__(self, columns: Iterable[Column], n_rows: int | None = None):
        cols = list(columns)
        names = [c.name for c in cols]
        if len(set(names)) != len(names):
            dup = [n for n, c in Counter(names).items() if c > 1]
            raise ValueError(f"duplicate column names: {dup}")
        if n_rows is None:
            n_rows = len(cols[0]) if cols else 0
        for c in cols:
            if len(c) != n_rows:
                raise ValueError(f"column {c.name!r} has {len(c)} cells, expected {n_rows}")
        self._columns = {c.name: c for c in cols}
        self.n_rows = n_rows

    def __getitem__(self, name: str) -> Column:
        try:
            return self._columns[name]
        except KeyError:
            raise KeyError(f"no column named {name!r}") from None

    def __contains__(self, name):
        return name in self._columns

    def __len__(self):
        return self.n_rows

    def __repr__(self):
        return f"Table({self.n_rows} rows, columns={self.names})"

    @property
    def names(self) -> list[str]:
        return list(self._columns)

    @property
    def columns(self) -> list[Column]:
        return list(self._columns.values())

    def take(self, idx) -> "Table":
        idx = np.asarray(idx, dtype=np.int64)
        return Table([c.take(idx) for c in self.columns], n_rows=len(idx))

    def select(self, names: Sequence[str]) -> "Table":
        return Table([self[n] for n in names], n_rows=self.n_rows)

    def drop(self, names: Iterable[str]) -> "Table":
        names = set(names)
        return Table([c for c in self.columns if c.name not in names], n_rows=self.n_rows)

    def with_column(self, col: Column) -> "Table":
        cols = [c for c in self.columns if c.name != col.name]
        return Table(cols + [col], n_rows=self.n_rows)

    def rows(self) -> list[tuple]:
        lists = [c.to_list() for c in self.columns]
        return list(zip(*lists)) if lists else [() for _ in range(self.n_rows)]

    def to_csv(self, path=None) -> str:
        """Serialize to CSV text (missing cells written empty); optionally write ``path``."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.names)
        for row in self.rows():
            w.writerow(["" if v is None else _fmt_cell(v) for v in row])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text


def _fmt_cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


# -- schema -------------------------------------------------------------------

@dataclass(frozen=True)
class ColumnSpec:
    role: str = "feature"
    kind: str = "numeric"
    ordinal: bool = False
    missing_tokens: tuple[str, ...] = DEFAULT_MISSING
    levels: tuple[str, ...] | None = None
    synth: dict | None = None

    def __post_init__(self):
        if self.role not in ROLES:
            raise ConfigError(f"unknown role {self.role!r}")
        if self.kind not in KINDS:
            raise ConfigError(f"unknown kind {self.kind!r}")
        if self.ordinal and self.kind != "categorical":
            raise ConfigError("only categorical columns can be ordinal")


@dataclass(frozen=True)
class SchemaSpec:
    columns: dict[str, ColumnSpec] = field(default_factory=dict)
    unlisted: str | None = None  # role applied to CSV columns absent from ``columns``

    def __getitem__(self, name) -> ColumnSpec:
        return self.columns[name]

    def __contains__(self, name):
        return name in self.columns

    def spec_for(self, name) -> ColumnSpec:
        if name in self.columns:
            return self.columns[name]
        if self.unlisted is not None:
            return ColumnSpec(role=self.unlisted, kind="text")
        raise UnknownColumnInSchema(f"column {name!r} is not declared in the schema")

    def names_with_role(self, role) -> list[str]:
        return [n for n, c in self.columns.items() if c.role == role]

    def score_column(self) -> str:
        scores = self.names_with_role("score")
        if len(scores) != 1:
            raise ConfigError(f"exactly one score column required, found {scores}")
        return scores[0]

    def merged(self, other: "SchemaSpec") -> "SchemaSpec":
        cols = dict(self.columns)
        cols.update(other.columns)
        return SchemaSpec(cols, self.unlisted or other.unlisted)

    @classmethod
    def from_dict(cls, data: dict) -> "SchemaSpec":
        cols = {}
        for name, raw in (data.get("columns") or {}).items():
            raw = dict(raw or {})
            if "missing_tokens" in raw:
                raw["missing_tokens"] = tuple(str(t) for t in raw["missing_tokens"])
            if raw.get("levels") is not None:
                raw["levels"] = tuple(str(v) for v in raw["levels"])
            unknown = set(raw) - {"role", "kind", "ordinal", "missing_tokens", "levels", "synth"}
            if unknown:
                raise ConfigError(f"column {name!r}: unknown schema keys {sorted(unknown)}")
            cols[name] = ColumnSpec(**raw)
        return cls(cols, data.get("unlisted"))

    @classmethod
    def load(cls, path) -> "SchemaSpec":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(yaml.safe_load(fh) or {})

    def to_dict(self) -> dict:
        out = {}
        for name, c in self.columns.items():
            d = {"role": c.role, "kind": c.kind}
            if c.ordinal:
                d["ordinal"] = True
            if c.missing_tokens != DEFAULT_MISSING:
                d["missing_tokens"] = list(c.missing_tokens)
            if c.levels is not None:
                d["levels"] = list(c.levels)
            if c.synth is not None:
                d["synth"] = dict(c.synth)
            out[name] = d
        res = {"columns": out}
        if self.unlisted is not None:
            res["unlisted"] = self.unlisted
        return res


@dataclass(frozen=True)
class LabelRule:
    threshold: float = 50.0
    pass_iff_geq: bool = True

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 100.0:
            raise ConfigError(f"label threshold {self.threshold} outside [0, 100]")

    def label(self, score: float) -> str:
        passed = score >= self.threshold if self.pass_iff_geq else score > self.threshold
        return PASS if passed else FAIL


# -- ingestion ----------------------------------------------------------------

def _parse_column(name, spec: ColumnSpec, tokens: list[str]) -> Column:
    missing = [t in spec.missing_tokens for t in tokens]
    if spec.kind in ("numeric", "integer"):
        vals = []
        for row, (tok, miss) in enumerate(zip(tokens, missing), start=1):
            if miss:
                vals.append(None)
                continue
            try:
                v = float(tok) if spec.kind == "numeric" else int(tok)
            except ValueError:
                if spec.kind == "integer":
                    try:
                        f = float(tok)
                    except ValueError:
                        raise MalformedCell(row, name, tok) from None
                    if not f.is_integer():
                        raise MalformedCell(row, name, tok) from None
                    v = int(f)
                else:
                    raise MalformedCell(row, name, tok) from None
            vals.append(v)
        return Column.from_values(name, spec.kind, vals)
    vals = [None if m else t for t, m in zip(tokens, missing)]
    if spec.kind == "categorical":
        seen = {v for v in vals if v is not None}
        if spec.levels is not None:
            extra = sorted(seen - set(spec.levels))
            levels = tuple(spec.levels) + tuple(extra)
        else:
            levels = tuple(sorted(seen))
        return Column.from_values(name, "categorical", vals, levels)
    return Column.from_values(name, "text", vals)


def read_table(path, schema: SchemaSpec) -> Table:
    """Read a headed UTF-8 CSV into a typed table.

    Every header must be declared in ``schema`` (or covered by its ``unlisted``
    role). Cells equal to a column's missing tokens become missing; categorical
    levels are collected from the data, with any declared levels first and in
    declared order.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MissingHeader(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        if not any(header):
            raise MissingHeader(f"{path}: blank header row")
        raw_rows = [r for r in reader if r]
    specs = [schema.spec_for(h) for h in header]
    width = len(header)
    for i, r in enumerate(raw_rows, start=1):
        if len(r) != width:
            raise MalformedCell(i, header[min(len(r), width - 1)], ",".join(r))
    cols = [
        _parse_column(h, spec, [r[j] for r in raw_rows])
        for j, (h, spec) in enumerate(zip(header, specs))
    ]
    keys = [h for h, s in zip(header, specs) if s.role == "key"]
    if len(keys) > 1:
        raise ConfigError(f"{path}: more than one key column {keys}")
    return Table(cols, n_rows=len(raw_rows))


# -- joins and aggregation ------------------------------------------------------

def _key_values(table: Table, key: str) -> list:
    if key not in table:
        raise KeyMissing(f"key column {key!r} not present")
    col = table[key]
    if col.missing.any():
        raise KeyMissing(f"key column {key!r} has {int(col.missing.sum())} missing cells")
    return col.to_list()


def merge_on_key(left: Table, right: Table, key: str, many_to_one: bool = False) -> Table:
    """Inner join; output keeps left row order, left columns, then right non-key columns.

    Keys must be unique in both tables. ``many_to_one=True`` relaxes this for the
    left table only (a lookup join, e.g. schools onto per-municipality rows).
    """
    lkeys = _key_values(left, key)
    rkeys = _key_values(right, key)
    rpos = {}
    for i, k in enumerate(rkeys):
        if k in rpos:
            raise DuplicateKey(k)
        rpos[k] = i
    if not many_to_one:
        seen = set()
        for k in lkeys:
            if k in seen:
                raise DuplicateKey(k)
            seen.add(k)
    clash = [n for n in right.names if n != key and n in left]
    if clash:
        raise ConfigError(f"merge on {key!r}: columns {clash} present on both sides")
    li = [i for i, k in enumerate(lkeys) if k in rpos]
    ri = [rpos[lkeys[i]] for i in li]
    lt, rt = left.take(li), right.take(ri)
    return Table(lt.columns + [c for c in rt.columns if c.name != key], n_rows=len(li))


def _groups(table: Table, group: str) -> tuple[list, dict]:
    if group not in table:
        raise KeyError(f"no column named {group!r}")
    col = table[group]
    if table.n_rows == 0 or col.missing.all():
        raise EmptyGroupColumn(f"group column {group!r} has no values")
    members: dict = {}
    for i, v in enumerate(col.to_list()):
        if v is not None:
            members.setdefault(v, []).append(i)
    return list(members), members


def _mode(values: list[str]) -> str | None:
    if not values:
        return None
    counts = Counter(values)
    best = max(counts.values())
    return min(v for v, c in counts.items() if c == best)


def mode_aggregate_by_group(table: Table, group: str, values: Sequence[str]) -> Table:
    """One row per group value (first-appearance order) with each value column's mode.

    Ties go to the lexicographically smallest level; missing cells are ignored.
    """
    order, members = _groups(table, group)
    gcol = table[group]
    first = [members[g][0] for g in order]
    out = [gcol.take(first)]
    for name in values:
        col = table[name]
        if col.kind != "categorical":
            raise ConfigError(f"mode aggregation needs a categorical column, {name!r} is {col.kind}")
        cells = col.to_list()
        modes = [_mode([cells[i] for i in members[g] if cells[i] is not None]) for g in order]
        out.append(Column.from_values(name, "categorical", modes, col.levels))
    return Table(out, n_rows=len(order))


@dataclass(frozen=True)
class Agg:
    """One aggregate for :func:`count_aggregate_by_group`.

    ``op`` is ``"count"``, ``"count_where"`` (needs ``column`` and ``level``) or
    ``"mean"`` (needs ``column``).
    """

    op: str
    name: str
    column: str | None = None
    level: str | None = None


def count_aggregate_by_group(table: Table, key: str, spec: Sequence[Agg], keys: Sequence | None = None) -> Table:
    """Per-key counts and means. ``keys`` fixes the output key set (zero-row keys included)."""
    if key not in table:
        raise KeyError(f"no column named {key!r}")
    kcol = table[key]
    cells = kcol.to_list()
    members: dict = {}
    for i, v in enumerate(cells):
        if v is not None:
            members.setdefault(v, []).append(i)
    order = list(keys) if keys is not None else list(members)
    out = [Column.from_values(key, kcol.kind if kcol.kind != "categorical" else "text", order)]
    for agg in spec:
        if agg.op == "count":
            vals = [len(members.get(k, ())) for k in order]
            out.append(Column.from_values(agg.name, "integer", vals))
        elif agg.op == "count_where":
            col = table[agg.column].to_list()
            vals = [sum(col[i] == agg.level for i in members.get(k, ())) for k in order]
            out.append(Column.from_values(agg.name, "integer", vals))
        elif agg.op == "mean":
            col = table[agg.column].as_float()
            vals = []
            for k in order:
                x = col[members.get(k, [])]
                x = x[~np.isnan(x)]
                vals.append(float(x.mean()) if len(x) else None)
            out.append(Column.from_values(agg.name, "numeric", vals))
        else:
            raise ConfigError(f"unknown aggregate {agg.op!r}")
    return Table(out, n_rows=len(order))


def drop_sparse_columns(table: Table, max_missing_frac: float) -> tuple[Table, list[tuple[str, float]]]:
    """Drop columns whose missing fraction is strictly above ``max_missing_frac``."""
    if not 0.0 <= max_missing_frac <= 1.0:
        raise ConfigError(f"max_missing_frac {max_missing_frac} outside [0, 1]")
    report = [(c.name, c.missing_fraction) for c in table.columns if c.missing_fraction > max_missing_frac]
    return table.drop(n for n, _ in report), report


def derive_label(table: Table, score: str, rule: LabelRule = LabelRule(), outcome: str = "outcome") -> tuple[Table, int]:
    """Add a categorical ``fail``/``pass`` column; rows with a missing score are removed.

    Returns the labelled table and the number of dropped rows.
    """
    x = table[score].as_float()
    observed = x[~np.isnan(x)]
    if len(observed) and (observed.min() < 0 or observed.max() > 100):
        bad = observed[(observed < 0) | (observed > 100)][0]
        raise ScoreOutOfRange(f"score column {score!r} has value {bad} outside [0, 100]")
    keep = np.flatnonzero(~np.isnan(x))
    dropped = table.n_rows - len(keep)
    if dropped:
        log.warning("derive_label: dropped %d rows with missing %r", dropped, score)
    kept = table.take(keep)
    labels = [rule.label(v) for v in x[keep]]
    return kept.with_column(Column.from_values(outcome, "categorical", labels, (FAIL, PASS))), dropped


def add_ratio_column(table: Table, numerator: str, denominator: str, name: str) -> Table:
    num = table[numerator].as_float()
    den = table[denominator].as_float()
    zero = den == 0
    if zero.any():
        log.warning("add_ratio_column: %d rows with zero %r set missing", int(zero.sum()), denominator)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(zero, np.nan, num / den)
    return table.with_column(Column.from_values(name, "numeric", ratio.tolist()))


def quantile_bin(values, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Assign values to ``k`` quantile bins.

    Edges are the interior ``i/k`` quantiles (linear interpolation between order
    statistics). The first bin is closed, the rest left-open and right-closed.
    Missing values get bin ``-1``.
    """
    if k < 2:
        raise ConfigError("quantile_bin needs k >= 2")
    x = np.asarray(values, dtype=float)
    ok = ~np.isnan(x)
    if len(np.unique(x[ok])) < k:
        raise DegenerateDistribution(f"fewer than {k} distinct values")
    edges = np.quantile(x[ok], np.arange(1, k) / k, method="linear")
    bins = np.full(len(x), -1, dtype=np.int64)
    bins[ok] = np.searchsorted(edges, x[ok], side="left")
    return bins, edges


def bin_labels(values, edges: np.ndarray) -> list[str]:
    """Interval labels like ``[6.4, 31.3]`` then ``(31.3, 47.4]`` for :func:`quantile_bin` output."""
    x = np.asarray(values, dtype=float)
    x = x[~np.isnan(x)]
    bounds = [x.min(), *edges, x.max()]
    labels = []
    for i in range(len(bounds) - 1):
        left = "[" if i == 0 else "("
        labels.append(f"{left}{bounds[i]:.1f}, {bounds[i + 1]:.1f}]")
    return labels
