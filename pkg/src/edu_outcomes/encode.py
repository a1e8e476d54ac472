"""Turning a labelled :class:`~edu_outcomes.table.Table` into a numeric design matrix."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import AllMissingColumn, ConfigError, SingleClass
from .table import FAIL, PASS, SchemaSpec, Table

# internal label convention: fail is the positive class
FAIL_CODE, PASS_CODE = 1, 0


@dataclass(frozen=True)
class EncodedColumn:
    source: str
    kind: str  # "numeric" | "ordinal" | "onehot"
    produced: tuple[str, ...]
    reference: str | None = None
    levels: tuple[str, ...] = ()
    ordinal_map: dict | None = None
    impute: float | None = None


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Encoded features (``NaN`` = missing) and labels with 1 = fail, 0 = pass."""

    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]
    encoding: tuple[EncodedColumn, ...] = ()
    mode: str = "tree"
    row_ids: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if self.X.shape != (len(self.y), len(self.feature_names)):
            raise ValueError(f"X shape {self.X.shape} does not match labels/features")

    @property
    def n_rows(self) -> int:
        return len(self.y)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.X)

    def class_counts(self) -> tuple[int, int]:
        """(n_fail, n_pass)."""
        n_fail = int(self.y.sum())
        return n_fail, len(self.y) - n_fail

    def take(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx, dtype=np.int64)
        ids = self.row_ids[idx] if self.row_ids is not None else idx
        return LabeledDataset(self.X[idx], self.y[idx], self.feature_names, self.encoding, self.mode, ids)

    def require_both_classes(self):
        n_fail, n_pass = self.class_counts()
        if n_fail == 0 or n_pass == 0:
            raise SingleClass(f"need both classes, got {n_fail} fail / {n_pass} pass")


def _reference_level(cells: list[str]) -> str:
    counts = Counter(cells)
    best = max(counts.values())
    return min(v for v, c in counts.items() if c == best)


def _ordinal_map(levels) -> dict[str, float]:
    try:
        return {lv: float(lv) for lv in levels}
    except ValueError:
        return {lv: float(i + 1) for i, lv in enumerate(levels)}


def encode_features(table: Table, schema: SchemaSpec, mode: str = "tree", outcome: str = "outcome") -> LabeledDataset:
    """Encode every ``feature``-role column of ``table``.

    Ordinal categoricals become one numeric rank (the level itself when levels are
    numbers, else its 1-based position). Other categoricals are one-hot encoded
    against their most frequent level. ``mode="linear"`` fills gaps (median for
    numerics and ranks, reference level for one-hot); ``mode="tree"`` keeps them
    as ``NaN``.
    """
    if mode not in ("tree", "linear"):
        raise ConfigError(f"unknown encoding mode {mode!r}")
    if outcome not in table:
        raise ConfigError(f"outcome column {outcome!r} missing; derive labels first")
    labels = table[outcome].to_list()
    if None in labels:
        raise ConfigError("outcome column has missing cells")
    y = np.array([FAIL_CODE if v == FAIL else PASS_CODE for v in labels], dtype=np.int64)
    if len(set(labels)) < 2:
        raise SingleClass(f"outcome has a single level {sorted(set(labels))}")

    features = [n for n in table.names if n in schema and schema[n].role == "feature"]
    if not features:
        raise ConfigError("no feature columns to encode")
    blocks, names, encoding = [], [], []
    for name in features:
        col, spec = table[name], schema[name]
        if col.missing.all():
            raise AllMissingColumn(f"feature {name!r} is entirely missing")
        if col.kind in ("numeric", "integer"):
            x = col.as_float()
            impute = None
            if mode == "linear":
                impute = float(np.median(x[~np.isnan(x)]))
                x = np.where(np.isnan(x), impute, x)
            blocks.append(x[:, None])
            names.append(name)
            encoding.append(EncodedColumn(name, "numeric", (name,), impute=impute))
        elif col.kind == "categorical" and spec.ordinal:
            omap = _ordinal_map(col.levels)
            x = np.array([np.nan if v is None else omap[v] for v in col.to_list()])
            impute = None
            if mode == "linear":
                impute = float(np.median(x[~np.isnan(x)]))
                x = np.where(np.isnan(x), impute, x)
            blocks.append(x[:, None])
            names.append(name)
            encoding.append(EncodedColumn(name, "ordinal", (name,), levels=col.levels, ordinal_map=omap, impute=impute))
        elif col.kind == "categorical":
            cells = col.to_list()
            ref = _reference_level([v for v in cells if v is not None])
            others = tuple(lv for lv in sorted(col.levels) if lv != ref)
            produced = tuple(f"{name}: {lv}" for lv in others)
            block = np.zeros((table.n_rows, len(others)))
            pos = {lv: j for j, lv in enumerate(others)}
            for i, v in enumerate(cells):
                if v is None:
                    if mode == "tree":
                        block[i, :] = np.nan
                elif v in pos:
                    block[i, pos[v]] = 1.0
            blocks.append(block)
            names.extend(produced)
            encoding.append(EncodedColumn(name, "onehot", produced, reference=ref, levels=tuple(sorted(col.levels))))
        else:
            raise ConfigError(f"feature {name!r} has kind {col.kind!r}, which cannot be encoded")
    X = np.hstack(blocks) if blocks else np.empty((table.n_rows, 0))
    return LabeledDataset(X, y, tuple(names), tuple(encoding), mode, np.arange(table.n_rows))


def apply_encoding(table: Table, dataset: LabeledDataset, outcome: str | None = "outcome") -> LabeledDataset:
    """Encode new rows with an existing dataset's encoding.

    Unseen categorical levels are treated like the reference level in linear mode
    and as missing in tree mode.
    """
    n = table.n_rows
    blocks = []
    for enc in dataset.encoding:
        col = table[enc.source]
        if enc.kind == "numeric":
            x = col.as_float()
        elif enc.kind == "ordinal":
            x = np.array([np.nan if v is None or v not in enc.ordinal_map else enc.ordinal_map[v] for v in col.to_list()])
        else:
            others = [p.split(": ", 1)[1] for p in enc.produced]
            pos = {lv: j for j, lv in enumerate(others)}
            x = np.zeros((n, len(others)))
            for i, v in enumerate(col.to_list()):
                known = v is not None and (v == enc.reference or v in pos)
                if not known and dataset.mode == "tree":
                    x[i, :] = np.nan
                elif v in pos:
                    x[i, pos[v]] = 1.0
            blocks.append(x)
            continue
        if enc.impute is not None:
            x = np.where(np.isnan(x), enc.impute, x)
        blocks.append(x[:, None])
    X = np.hstack(blocks) if blocks else np.empty((n, 0))
    if outcome is not None and outcome in table:
        y = np.array([FAIL_CODE if v == FAIL else PASS_CODE for v in table[outcome].to_list()], dtype=np.int64)
    else:
        y = np.zeros(n, dtype=np.int64)
    return LabeledDataset(X, y, dataset.feature_names, dataset.encoding, dataset.mode, np.arange(n))


def decode_column(dataset: LabeledDataset, source: str) -> list:
    """Recover the original categorical/ordinal value of ``source`` per row (``None`` if missing)."""
    enc = next((e for e in dataset.encoding if e.source == source), None)
    if enc is None:
        raise KeyError(f"{source!r} is not an encoded column")
    cols = [dataset.feature_names.index(p) for p in enc.produced]
    block = dataset.X[:, cols]
    if enc.kind == "numeric":
        return [None if np.isnan(v) else float(v) for v in block[:, 0]]
    if enc.kind == "ordinal":
        inverse = {v: k for k, v in enc.ordinal_map.items()}
        return [None if np.isnan(v) else inverse[float(v)] for v in block[:, 0]]
    others = [p.split(": ", 1)[1] for p in enc.produced]
    out = []
    for row in block:
        if np.isnan(row).any():
            out.append(None)
        elif row.sum() == 0:
            out.append(enc.reference)
        else:
            out.append(others[int(np.argmax(row))])
    return out


def balance_classes(dataset: LabeledDataset, seed: int) -> LabeledDataset:
    """Undersample the majority class to the minority count, then shuffle rows."""
    dataset.require_both_classes()
    rng = np.random.default_rng(seed)
    fail = np.flatnonzero(dataset.y == FAIL_CODE)
    passed = np.flatnonzero(dataset.y == PASS_CODE)
    m = min(len(fail), len(passed))
    if len(fail) > m:
        fail = np.sort(rng.choice(fail, size=m, replace=False))
    if len(passed) > m:
        passed = np.sort(rng.choice(passed, size=m, replace=False))
    idx = rng.permutation(np.concatenate([fail, passed]))
    return dataset.take(idx)


def label_names(y) -> list[str]:
    return [FAIL if v == FAIL_CODE else PASS for v in y]
