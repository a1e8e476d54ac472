"""Descriptive group summaries and frequency tables."""
from __future__ import annotations

import numpy as np

from ..table import Column, Table

OVERALL = "overall"


def _group_levels(col: Column) -> list[str]:
    if col.kind == "categorical":
        return list(col.levels)
    return sorted({v for v in col.to_list() if v is not None}, key=str)


def median(values) -> float | None:
    """Median over non-missing values (mean of the central pair for even counts)."""
    x = np.sort(np.asarray(values, dtype=float))
    x = x[~np.isnan(x)]
    n = len(x)
    if n == 0:
        return None
    mid = n // 2
    return float(x[mid]) if n % 2 else float((x[mid - 1] + x[mid]) / 2.0)


def group_summary(table: Table, group: str, targets) -> Table:
    """Mean and median of each target per group level, plus an ``overall`` row.

    Levels with no rows are listed with missing summaries.
    """
    gcol = table[group]
    labels = gcol.to_list()
    levels = _group_levels(gcol)
    rows = {lv: [i for i, v in enumerate(labels) if v == lv] for lv in levels}
    rows[OVERALL] = list(range(table.n_rows))
    names = levels + [OVERALL]
    cols = [Column.from_values(group, "text", names),
            Column.from_values("n", "integer", [len(rows[g]) for g in names])]
    for t in targets:
        x = table[t].as_float()
        means, medians = [], []
        for g in names:
            v = x[rows[g]]
            v = v[~np.isnan(v)]
            means.append(float(v.mean()) if len(v) else None)
            medians.append(median(v))
        cols.append(Column.from_values(f"{t}_mean", "numeric", means))
        cols.append(Column.from_values(f"{t}_median", "numeric", medians))
    return Table(cols, n_rows=len(names))


def frequency_table(table: Table, group: str, target: str) -> Table:
    """Count and percent (of the group's non-missing target cells) per (group, level)."""
    g = table[group].to_list()
    t = table[target].to_list()
    glevels = _group_levels(table[group])
    tlevels = _group_levels(table[target])
    out_g, out_t, counts, pct = [], [], [], []
    for gl in glevels:
        members = [tv for gv, tv in zip(g, t) if gv == gl and tv is not None]
        size = len(members)
        for tl in tlevels:
            c = sum(v == tl for v in members)
            out_g.append(gl)
            out_t.append(tl)
            counts.append(c)
            pct.append(100.0 * c / size if size else None)
    return Table([
        Column.from_values(group, "text", out_g),
        Column.from_values(target, "text", out_t),
        Column.from_values("count", "integer", counts),
        Column.from_values("percent", "numeric", pct),
    ], n_rows=len(out_g))


def histogram(values, bins: int = 20) -> Table:
    """Bin edges and counts for a numeric sample (missing values ignored)."""
    x = np.asarray(values, dtype=float)
    x = x[~np.isnan(x)]
    counts, edges = np.histogram(x, bins=bins)
    return Table([
        Column.from_values("bin_left", "numeric", edges[:-1].tolist()),
        Column.from_values("bin_right", "numeric", edges[1:].tolist()),
        Column.from_values("count", "integer", counts.tolist()),
    ], n_rows=len(counts))
