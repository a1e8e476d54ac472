"""Goodman-Kruskal gamma, Kruskal-Wallis H and one-way ANOVA."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations

import numpy as np

from ..errors import AllValuesIdentical, DegenerateTable, InvalidParameter, ZeroWithinVariance
from .special import chi2_sf, f_sf, normal_sf

GAMMA_CLAMP = 1.0 - 1e-12


@dataclass(frozen=True)
class AssociationResult:
    test: str
    statistic: float
    p_value: float
    df: tuple[float, ...] = ()
    sizes: tuple[int, ...] = ()
    tie_corrected: bool = False
    variable: str = ""
    extra: dict = field(default_factory=dict, compare=False)

    def significant(self, alpha: float = 0.05) -> bool:
        return self.p_value < alpha


@dataclass(frozen=True)
class ContingencyTable:
    rows: tuple[str, ...]
    cols: tuple[str, ...]
    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.shape != (len(self.rows), len(self.cols)):
            raise ValueError(f"counts shape {c.shape} does not match {len(self.rows)}x{len(self.cols)} labels")
        if (c < 0).any():
            raise ValueError("counts must be nonnegative")

    @classmethod
    def from_pairs(cls, x, y, row_order, col_order) -> "ContingencyTable":
        """Cross-tabulate paired observations; pairs with a value outside the orders are skipped."""
        ri = {v: i for i, v in enumerate(row_order)}
        ci = {v: j for j, v in enumerate(col_order)}
        counts = np.zeros((len(row_order), len(col_order)), dtype=np.int64)
        for a, b in zip(x, y):
            if a in ri and b in ci:
                counts[ri[a], ci[b]] += 1
        return cls(tuple(row_order), tuple(col_order), counts)


def concordance_counts(counts) -> tuple[int, int]:
    """Concordant and discordant pair counts of an ordered two-way table."""
    n = np.asarray(counts, dtype=np.int64)
    # below_right[i, j] = sum of n[i', j'] with i' > i and j' > j
    suffix = n[::-1, ::-1].cumsum(0).cumsum(1)[::-1, ::-1]
    below_right = np.zeros_like(n)
    below_right[:-1, :-1] = suffix[1:, 1:]
    # below_left[i, j] = sum of n[i', j'] with i' > i and j' < j
    rows_below = np.zeros_like(n)
    rows_below[:-1] = n[::-1].cumsum(0)[::-1][1:]
    below_left = np.zeros_like(n)
    below_left[:, 1:] = rows_below.cumsum(1)[:, :-1]
    return int((n * below_right).sum()), int((n * below_left).sum())


def gk_gamma(table) -> AssociationResult:
    """Gamma = (C - D) / (C + D) with a two-sided normal-approximation p-value.

    ``z = gamma * sqrt((C + D) / (N (1 - gamma^2)))``; gamma is clamped just
    inside +/-1 for the p-value only.
    """
    counts = table.counts if isinstance(table, ContingencyTable) else np.asarray(table)
    if counts.ndim != 2 or counts.shape[0] < 2 or counts.shape[1] < 2:
        raise DegenerateTable(f"need at least a 2x2 table, got shape {counts.shape}")
    N = int(counts.sum())
    C, D = concordance_counts(counts)
    if C + D == 0:
        raise DegenerateTable("no untied pairs (C + D = 0)")
    g = (C - D) / (C + D)
    gc = max(-GAMMA_CLAMP, min(GAMMA_CLAMP, g))
    z = gc * math.sqrt((C + D) / (N * (1.0 - gc * gc)))
    p = min(1.0, 2.0 * normal_sf(abs(z)))
    return AssociationResult("gamma", g, p, (), (N,), extra={"concordant": C, "discordant": D, "z": z})


def midranks(values) -> np.ndarray:
    x = np.asarray(values, dtype=float)
    order = np.argsort(x, kind="mergesort")
    sx = x[order]
    ranks = np.empty(len(x))
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _kw_statistic(rank_groups, N, tie_term):
    # exact rational arithmetic; ranks are half-integers
    s = sum(Fraction(sum(Fraction(r) for r in g)) ** 2 / len(g) for g in rank_groups)
    h = (12 * s - 3 * N * (N + 1) ** 2) / (N * (N + 1))
    corr = 1 - Fraction(tie_term, N ** 3 - N)
    return h / corr


def kruskal_wallis(groups, exact: bool = False) -> AssociationResult:
    """Kruskal-Wallis H with tie correction and a chi-square(k - 1) p-value.

    ``exact=True`` (pooled N <= 10) instead enumerates every reassignment of the
    pooled values to groups of the same sizes.
    """
    groups = [np.asarray(g, dtype=float) for g in groups]
    if len(groups) < 2 or any(len(g) == 0 for g in groups):
        raise InvalidParameter("need at least two nonempty groups")
    sizes = [len(g) for g in groups]
    pooled = np.concatenate(groups)
    N = len(pooled)
    if N < 3:
        raise InvalidParameter("need at least three observations")
    ranks = midranks(pooled)
    _, ties = np.unique(pooled, return_counts=True)
    tie_term = int(np.sum(ties.astype(np.int64) ** 3 - ties))
    if tie_term == N ** 3 - N:
        raise AllValuesIdentical("all observations are identical")
    bounds = np.cumsum([0] + sizes)
    rank_groups = [ranks[bounds[i]:bounds[i + 1]].tolist() for i in range(len(groups))]
    H = _kw_statistic(rank_groups, N, tie_term)
    df = len(groups) - 1
    if exact:
        p = _kw_exact_p(ranks.tolist(), sizes, H, N, tie_term)
    else:
        p = chi2_sf(float(H), df)
    return AssociationResult("kruskal_wallis", float(H), p, (df,), tuple(sizes), tie_term > 0)


def _kw_exact_p(ranks, sizes, H_obs, N, tie_term):
    if N > 10:
        raise InvalidParameter("exact Kruskal-Wallis p-value is limited to N <= 10")

    def assignments(pool, sizes):
        if len(sizes) == 1:
            yield [pool]
            return
        for pick in combinations(range(len(pool)), sizes[0]):
            chosen = [pool[i] for i in pick]
            rest = [pool[i] for i in range(len(pool)) if i not in pick]
            for tail in assignments(rest, sizes[1:]):
                yield [chosen] + tail

    total = hits = 0
    for groups in assignments(ranks, sizes):
        total += 1
        if _kw_statistic(groups, N, tie_term) >= H_obs:
            hits += 1
    return hits / total


def anova_oneway(groups) -> AssociationResult:
    groups = [np.asarray(g, dtype=float) for g in groups]
    k = len(groups)
    N = sum(len(g) for g in groups)
    if k < 2 or any(len(g) == 0 for g in groups):
        raise InvalidParameter("need at least two nonempty groups")
    if N - k < 1:
        raise InvalidParameter("need at least one within-group degree of freedom")
    grand = np.concatenate(groups).mean()
    ssb = float(sum(len(g) * (g.mean() - grand) ** 2 for g in groups))
    ssw = float(sum(0.0 if np.ptp(g) == 0 else np.sum((g - g.mean()) ** 2) for g in groups))
    means = [g.mean() for g in groups]
    if ssw == 0:
        if max(means) == min(means):
            raise ZeroWithinVariance("no variation within or between groups")
        return AssociationResult("anova", math.inf, 0.0, (k - 1, N - k), tuple(len(g) for g in groups))
    if max(means) == min(means):
        ssb = 0.0
    F = (ssb / (k - 1)) / (ssw / (N - k))
    return AssociationResult("anova", F, f_sf(F, k - 1, N - k), (k - 1, N - k), tuple(len(g) for g in groups))


def write_association_csv(path, results: list[AssociationResult], alpha: float = 0.05):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variable", "test", "statistic", "df", "p_value", f"significant_at_{alpha}"])
        for r in results:
            df = ";".join(str(int(d)) for d in r.df)
            w.writerow([r.variable, r.test, f"{r.statistic:.6f}", df, f"{r.p_value:.6g}", str(r.significant(alpha)).lower()])
