"""Model explanations: exact tree SHAP values, odds ratios, linear rankings.

SHAP values use the background-substitution value function

    v(S) = mean over background rows z of margin(x_S, z_not_S)

so the attributions of a row sum to its raw margin minus the mean background
margin. :func:`tree_shap` computes them exactly by walking leaf paths;
:func:`shap_oracle` enumerates all coalitions and serves as a reference.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyBackground, FeatureMismatch, TooManyFeatures
from .models.linear import LinearModel
from .models.tree import Tree, TreeEnsemble

ORACLE_MAX_FEATURES = 15


@dataclass(frozen=True, eq=False)
class AttributionMatrix:
    base_value: float
    values: np.ndarray
    feature_names: tuple[str, ...]
    background: str = ""

    def margins(self) -> np.ndarray:
        return self.base_value + self.values.sum(axis=1)


def _check(ensemble: TreeEnsemble, X, background):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Z = np.atleast_2d(np.asarray(background, dtype=float))
    if len(Z) == 0 or Z.size == 0:
        raise EmptyBackground("background set is empty")
    p = ensemble.n_features
    if X.shape[1] != p or Z.shape[1] != p:
        raise FeatureMismatch(f"expected {p} features, got {X.shape[1]} (rows) / {Z.shape[1]} (background)")
    return X, Z


def _weight_tables(depth: int):
    """Signed coefficient tables for a leaf whose x-only set has ``a`` and z-only set ``b`` features."""
    pos = np.zeros((depth + 1, depth + 1))
    neg = np.zeros((depth + 1, depth + 1))
    for a in range(depth + 1):
        for b in range(depth + 1 - a):
            tot = math.factorial(a + b)
            if a:
                pos[a, b] = math.factorial(a - 1) * math.factorial(b) / tot
            if b:
                neg[a, b] = math.factorial(a) * math.factorial(b - 1) / tot
    return pos, neg


def _route_left(values, tree: Tree, node: int) -> np.ndarray:
    return np.where(np.isnan(values), tree.default_left[node], values < tree.threshold[node])


def _tree_shap_single(tree: Tree, X: np.ndarray, Z: np.ndarray, phi: np.ndarray, scale: float):
    """Accumulate ``scale`` times one tree's attributions of every row of ``X`` into ``phi``."""
    m = len(Z)
    depth = tree.depth()
    pos_w, neg_w = _weight_tables(depth)

    def visit(node, conds):
        if tree.left[node] < 0:
            v = tree.value[node]
            if v == 0.0 or not conds:
                return
            feats = list(conds)
            d = len(feats)
            bits = 1 << np.arange(d, dtype=np.int64)
            px = np.stack([conds[f][0] for f in feats], axis=1).astype(np.int64) @ bits
            pz = np.stack([conds[f][1] for f in feats], axis=1).astype(np.int64) @ bits
            ux, xinv = np.unique(px, return_inverse=True)
            uz, zcnt = np.unique(pz, return_counts=True)
            full = (1 << d) - 1
            A = ux[:, None] & ~uz[None, :] & full
            Bm = uz[None, :] & ~ux[:, None] & full
            alive = ((ux[:, None] | uz[None, :]) & full) == full
            a = np.bitwise_count(A).astype(np.int64)
            b = np.bitwise_count(Bm).astype(np.int64)
            wp = np.where(alive, pos_w[a, b], 0.0) * zcnt[None, :]
            wn = np.where(alive, neg_w[a, b], 0.0) * zcnt[None, :]
            table = np.empty((len(ux), d))
            for k in range(d):
                bit = 1 << k
                table[:, k] = (np.where(A & bit, wp, 0.0) - np.where(Bm & bit, wn, 0.0)).sum(axis=1)
            phi[:, feats] += (scale * v / m) * table[xinv]
            return
        f = int(tree.feature[node])
        gx = _route_left(X[:, f], tree, node)
        gz = _route_left(Z[:, f], tree, node)
        for child, sx, sz in ((tree.left[node], gx, gz), (tree.right[node], ~gx, ~gz)):
            new = dict(conds)
            if f in new:
                px, pz = new[f]
                new[f] = (px & sx, pz & sz)
            else:
                new[f] = (sx, sz)
            visit(int(child), new)

    visit(0, {})


def tree_shap_matrix(ensemble: TreeEnsemble, X, background, description: str = "") -> AttributionMatrix:
    """Exact SHAP values of the raw margin for every row of ``X``."""
    X, Z = _check(ensemble, X, background)
    phi = np.zeros(X.shape)
    w = ensemble.tree_weight
    for tree in ensemble.trees:
        _tree_shap_single(tree, X, Z, phi, w)
    base = float(np.mean(ensemble.raw_margin(Z)))
    return AttributionMatrix(base, phi, ensemble.feature_names, description)


def tree_shap(ensemble: TreeEnsemble, row, background) -> tuple[np.ndarray, float]:
    """Attribution vector and base value for a single row."""
    res = tree_shap_matrix(ensemble, np.atleast_2d(row), background)
    return res.values[0], res.base_value


def shap_oracle(ensemble: TreeEnsemble, row, background) -> np.ndarray:
    """Shapley values by enumerating every feature coalition (reference implementation)."""
    X, Z = _check(ensemble, np.atleast_2d(row), background)
    x = X[0]
    M = len(x)
    if M > ORACLE_MAX_FEATURES:
        raise TooManyFeatures(f"{M} features; coalition enumeration is limited to {ORACLE_MAX_FEATURES}")
    masks = np.arange(1 << M)
    member = ((masks[:, None] >> np.arange(M)) & 1).astype(bool)  # (2^M, M)
    hybrid = np.where(member[:, None, :], x[None, None, :], Z[None, :, :])
    value = ensemble.raw_margin(hybrid.reshape(-1, M)).reshape(len(masks), len(Z)).mean(axis=1)
    size = member.sum(axis=1)
    fact = [math.factorial(k) for k in range(M + 1)]
    weight = np.array([fact[s] * fact[M - s - 1] / fact[M] if s < M else 0.0 for s in size])
    phi = np.zeros(M)
    for i in range(M):
        without = ~member[:, i]
        S = masks[without]
        phi[i] = np.sum(weight[without] * (value[S | (1 << i)] - value[S]))
    return phi


def select_background(X, cap: int = 500, seed: int = 0) -> np.ndarray:
    """All rows if at most ``cap``, else a seeded sample of ``cap`` rows (original order kept)."""
    X = np.asarray(X, dtype=float)
    if len(X) <= cap:
        return X
    rng = np.random.default_rng(seed)
    return X[np.sort(rng.choice(len(X), size=cap, replace=False))]


# -- summaries ------------------------------------------------------------------

@dataclass(frozen=True)
class BeeswarmRecord:
    feature: str
    feature_value_norm: float
    shap: float


def shap_summary(attrib: AttributionMatrix, X) -> tuple[list[tuple[str, float]], list[BeeswarmRecord]]:
    """Ranking by mean |SHAP| (descending, ties by name) and per-(row, feature) beeswarm records.

    Feature values are min-max scaled per feature over the explained rows;
    constant features map to 0.5 and missing values to NaN.
    """
    X = np.asarray(X, dtype=float)
    if X.shape != attrib.values.shape:
        raise FeatureMismatch(f"rows {X.shape} do not align with attributions {attrib.values.shape}")
    mean_abs = np.abs(attrib.values).mean(axis=0) if len(X) else np.zeros(X.shape[1])
    ranking = sorted(zip(attrib.feature_names, mean_abs.tolist()), key=lambda t: (-t[1], t[0]))
    with np.errstate(all="ignore"):
        lo, hi = np.nanmin(X, axis=0), np.nanmax(X, axis=0)
    span = hi - lo
    norm = np.where(span > 0, (X - lo) / np.where(span > 0, span, 1.0), 0.5)
    norm = np.where(np.isnan(X), np.nan, norm)
    records = [
        BeeswarmRecord(name, float(norm[i, j]), float(attrib.values[i, j]))
        for i in range(len(X))
        for j, name in enumerate(attrib.feature_names)
    ]
    return ranking, records


@dataclass(frozen=True)
class OddsRatioRow:
    feature: str
    weight: float

    @property
    def odds_ratio(self) -> float:
        return math.exp(self.weight)

    @property
    def pct_change(self) -> float:
        return 100.0 * math.expm1(self.weight)


def odds_ratios(names, weights) -> list[OddsRatioRow]:
    return [OddsRatioRow(n, float(w)) for n, w in zip(names, weights)]


def odds_ratio_table(model: LinearModel) -> list[OddsRatioRow]:
    """One row per coefficient (intercept excluded), in encoding order."""
    return odds_ratios(model.feature_names, model.coef)


@dataclass(frozen=True)
class ImportanceRow:
    feature: str
    weight: float
    side: str  # "pass", "fail" or "neutral"


def linear_importance(model: LinearModel) -> list[ImportanceRow]:
    rows = [
        ImportanceRow(n, float(w), "pass" if w > 0 else "fail" if w < 0 else "neutral")
        for n, w in zip(model.feature_names, model.coef)
    ]
    return sorted(rows, key=lambda r: (-r.weight, r.feature))


# -- CSV exports ------------------------------------------------------------------

def _fmt(v: float, digits: int) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.{digits}f}"


def write_beeswarm_csv(path, records: list[BeeswarmRecord]):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "feature_value_norm", "shap"])
        for r in records:
            w.writerow([r.feature, _fmt(r.feature_value_norm, 6), _fmt(r.shap, 8)])


def write_importance_csv(path, rows: list[ImportanceRow]):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "weight", "side"])
        for r in rows:
            w.writerow([r.feature, _fmt(r.weight, 6), r.side])


def write_odds_ratio_csv(path, rows: list[OddsRatioRow]):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variable", "weight", "odd_ratio", "pct_change"])
        for r in rows:
            w.writerow([r.feature, _fmt(r.weight, 4), _fmt(r.odds_ratio, 4), _fmt(r.pct_change, 2)])


def write_ranking_csv(path, ranking: list[tuple[str, float]]):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "mean_abs_shap"])
        for name, v in ranking:
            w.writerow([name, _fmt(v, 8)])


__all__ = [
    "AttributionMatrix", "BeeswarmRecord", "ImportanceRow", "OddsRatioRow",
    "linear_importance", "odds_ratio_table", "odds_ratios", "select_background", "shap_oracle",
    "shap_summary", "tree_shap", "tree_shap_matrix",
]
