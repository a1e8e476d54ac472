"""Flat-array decision trees, exact split search, CART and bagged forests.

Trees are stored as parallel arrays indexed by node id, root at 0. A row goes
left at a split when ``x < threshold``; a missing value follows the node's
learned default direction.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..encode import LabeledDataset
from ..errors import EmptyNode
from .params import ForestParams, TreeParams


def gini_impurity(class_counts) -> float:
    counts = np.asarray(class_counts, dtype=float)
    if (counts < 0).any():
        raise ValueError("class counts must be >= 0")
    total = counts.sum()
    if total == 0:
        raise EmptyNode("Gini impurity of an empty node is undefined")
    p = counts / total
    return float(1.0 - np.sum(p * p))


def _gini(n_fail, n):
    p = n_fail / n
    return 2.0 * p * (1.0 - p)


@dataclass(frozen=True)
class TreeNode:
    """Read-only view of one node."""

    id: int
    is_leaf: bool
    feature: int
    threshold: float
    default_left: bool
    left: int
    right: int
    value: float
    impurity: float
    n_samples: int
    n_fail: int
    gain: float


@dataclass(eq=False)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    default_left: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    impurity: np.ndarray
    n_samples: np.ndarray
    n_fail: np.ndarray
    gain: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def is_leaf(self, i) -> bool:
        return self.left[i] < 0

    def node(self, i) -> TreeNode:
        return TreeNode(
            int(i), bool(self.left[i] < 0), int(self.feature[i]), float(self.threshold[i]),
            bool(self.default_left[i]), int(self.left[i]), int(self.right[i]), float(self.value[i]),
            float(self.impurity[i]), int(self.n_samples[i]), int(self.n_fail[i]), float(self.gain[i]),
        )

    def nodes(self) -> list[TreeNode]:
        return [self.node(i) for i in range(self.n_nodes)]

    def depth(self) -> int:
        def rec(i):
            return 0 if self.left[i] < 0 else 1 + max(rec(self.left[i]), rec(self.right[i]))
        return rec(0)

    def used_features(self) -> set[int]:
        return {int(f) for f in self.feature[self.left >= 0]}

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf id reached by every row of ``X``."""
        X = np.asarray(X, dtype=float)
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        while True:
            active = self.left[node] >= 0
            if not active.any():
                return node
            r, nd = rows[active], node[active]
            x = X[r, self.feature[nd]]
            go_left = np.where(np.isnan(x), self.default_left[nd], x < self.threshold[nd])
            node[active] = np.where(go_left, self.left[nd], self.right[nd])

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": [None if np.isnan(t) else float(t) for t in self.threshold],
            "default_left": self.default_left.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "impurity": self.impurity.tolist(),
            "n_samples": self.n_samples.tolist(),
            "n_fail": self.n_fail.tolist(),
            "gain": self.gain.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            np.array(d["feature"], dtype=np.int64),
            np.array([np.nan if t is None else t for t in d["threshold"]], dtype=float),
            np.array(d["default_left"], dtype=bool),
            np.array(d["left"], dtype=np.int64),
            np.array(d["right"], dtype=np.int64),
            np.array(d["value"], dtype=float),
            np.array(d["impurity"], dtype=float),
            np.array(d["n_samples"], dtype=np.int64),
            np.array(d["n_fail"], dtype=np.int64),
            np.array(d["gain"], dtype=float),
        )


@dataclass(eq=False)
class TreeEnsemble:
    """Fitted tree model.

    ``single``/``bagged``: each leaf holds a 0/1 fail vote and the output is the
    mean vote. ``boosted``: leaves hold weights and the raw margin is
    ``base_score + learning_rate * sum(tree outputs)``.
    """

    trees: list[Tree]
    mode: str
    feature_names: tuple[str, ...]
    base_score: float = 0.0
    learning_rate: float = 1.0
    seeds: list[int] = field(default_factory=list)
    params: dict = field(default_factory=dict)
    trace: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in ("single", "bagged", "boosted"):
            raise ValueError(f"unknown ensemble mode {self.mode!r}")
        if self.mode == "single" and len(self.trees) != 1:
            raise ValueError("a single-tree ensemble holds exactly one tree")

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @property
    def tree_weight(self) -> float:
        """Factor applied to each tree's output in the raw margin."""
        if self.mode == "boosted":
            return self.learning_rate
        return 1.0 / len(self.trees)

    def raw_margin(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        total = np.zeros(len(X))
        for t in self.trees:
            total += t.predict(X)
        return self.base_score + self.tree_weight * total


# -- binning and split search ---------------------------------------------------

@dataclass(eq=False)
class BinnedData:
    """Features recoded to global bin ids over each column's sorted distinct values.

    Each feature owns a contiguous segment of bins; the last bin of a segment
    holds missing values.
    """

    codes: np.ndarray
    offsets: np.ndarray
    bin_feature: np.ndarray
    bin_value: np.ndarray
    is_missing_bin: np.ndarray

    @property
    def n_bins(self) -> int:
        return len(self.bin_feature)

    @classmethod
    def from_matrix(cls, X: np.ndarray) -> "BinnedData":
        X = np.asarray(X, dtype=float)
        n, p = X.shape
        codes = np.empty((n, p), dtype=np.int64)
        offsets = [0]
        values, feats, miss = [], [], []
        for j in range(p):
            col = X[:, j]
            ok = ~np.isnan(col)
            u = np.unique(col[ok])
            c = np.full(n, len(u), dtype=np.int64)
            c[ok] = np.searchsorted(u, col[ok])
            codes[:, j] = c + offsets[-1]
            values.append(np.append(u, np.nan))
            feats.append(np.full(len(u) + 1, j))
            miss.append(np.r_[np.zeros(len(u), bool), True])
            offsets.append(offsets[-1] + len(u) + 1)
        cat = (lambda xs, dt: np.concatenate(xs).astype(dt) if xs else np.empty(0, dt))
        return cls(codes, np.array(offsets), cat(feats, np.int64), cat(values, float), cat(miss, bool))


@dataclass
class Split:
    feature: int
    bin: int
    threshold: float
    default_left: bool
    gain: float


def find_best_split(binned: BinnedData, idx: np.ndarray, stat_a: np.ndarray, stat_b: np.ndarray,
                    score, min_leaf: int, allowed: np.ndarray | None = None) -> Split | None:
    """Exact best split of the rows ``idx``.

    ``stat_a``/``stat_b`` are per-row additive statistics and ``score(parent,
    left, right)`` maps ``(count, a, b)`` triples to a gain. Candidates are the
    midpoints between consecutive distinct non-missing values present in the
    node; missing values are tried on both sides. Ties go to the lowest feature,
    then the smallest threshold, then default-left.
    """
    p = binned.codes.shape[1]
    if p == 0:
        return None
    flat = binned.codes[idx].ravel()
    # work on the bins occupied in this node only; they come out sorted by
    # (feature, value) with each feature's missing bin last
    occ, inv = np.unique(flat, return_inverse=True)
    c = np.bincount(inv).astype(float)
    a = np.bincount(inv, weights=np.repeat(stat_a[idx], p))
    b = np.bincount(inv, weights=np.repeat(stat_b[idx], p))
    K = len(occ)
    feat = binned.bin_feature[occ]
    nm = ~binned.is_missing_bin[occ]
    starts = np.flatnonzero(np.r_[True, feat[1:] != feat[:-1]])
    ends = np.r_[starts[1:], K] - 1

    def seg_cumsum(v):
        cs = np.cumsum(np.where(nm, v, 0.0))
        base = np.r_[0.0, cs][starts]
        return cs - base[feat], cs[ends] - base

    lc, tc = seg_cumsum(c)
    la, ta = seg_cumsum(a)
    lb, tb = seg_cumsum(b)
    miss_end = ~nm[ends]
    mc, ma, mb = (np.where(miss_end, v[ends], 0.0) for v in (c, a, b))

    valid = nm[:-1] & nm[1:] & (feat[:-1] == feat[1:])
    if allowed is not None:
        valid &= allowed[feat[:-1]]
    cand = np.flatnonzero(valid)
    if len(cand) == 0:
        return None
    f = feat[cand]
    parent = (float(len(idx)), float(stat_a[idx].sum()), float(stat_b[idx].sum()))
    L = (lc[cand], la[cand], lb[cand])
    R = (tc[f] - lc[cand], ta[f] - la[cand], tb[f] - lb[cand])
    M = (mc[f], ma[f], mb[f])
    left_with_m = tuple(x + m for x, m in zip(L, M))
    right_with_m = tuple(x + m for x, m in zip(R, M))

    with np.errstate(divide="ignore", invalid="ignore"):
        g_left = score(parent, left_with_m, R)
        g_right = score(parent, L, right_with_m)
    ok_left = (left_with_m[0] >= min_leaf) & (R[0] >= min_leaf)
    ok_right = (L[0] >= min_leaf) & (right_with_m[0] >= min_leaf)
    g_left = np.where(ok_left & np.isfinite(g_left), g_left, -np.inf)
    g_right = np.where(ok_right & np.isfinite(g_right), g_right, -np.inf)
    has_missing = M[0] > 0
    go_left = np.where(has_missing, g_left >= g_right, left_with_m[0] >= right_with_m[0])
    # without missing rows both directions score the same; keep the gain of either
    gain = np.where(has_missing, np.maximum(g_left, g_right), np.where(go_left, g_left, g_right))
    k = int(np.argmax(gain))
    if not np.isfinite(gain[k]):
        return None
    t = int(cand[k])
    thr = 0.5 * (binned.bin_value[occ[t]] + binned.bin_value[occ[t + 1]])
    return Split(int(f[k]), int(occ[t]), float(thr), bool(go_left[k]), float(gain[k]))


def gini_score(parent, left, right):
    n, nf = parent[0], parent[1]
    g = _gini(nf, n)
    return g - left[0] / n * _gini(left[1], left[0]) - right[0] / n * _gini(right[1], right[0])


class _Builder:
    """Depth-first tree growth shared by CART, forests and boosting."""

    def __init__(self, binned, y, stat_a, stat_b, score, leaf_value, min_leaf, max_depth,
                 min_gain, stop_pure=False, feature_sampler=None):
        self.binned, self.y = binned, y
        self.stat_a, self.stat_b = stat_a, stat_b
        self.score, self.leaf_value = score, leaf_value
        self.min_leaf, self.max_depth, self.min_gain = min_leaf, max_depth, min_gain
        self.stop_pure = stop_pure
        self.feature_sampler = feature_sampler
        self.cols = {k: [] for k in ("feature", "threshold", "default_left", "left", "right",
                                     "value", "impurity", "n_samples", "n_fail", "gain")}
        self.leaf_rows: dict[int, np.ndarray] = {}

    def _new(self, idx):
        nid = len(self.cols["feature"])
        n_fail = int(self.y[idx].sum())
        n = len(idx)
        vals = dict(feature=-1, threshold=np.nan, default_left=True, left=-1, right=-1,
                    value=self.leaf_value(idx), impurity=_gini(n_fail, n), n_samples=n,
                    n_fail=n_fail, gain=0.0)
        for k, v in vals.items():
            self.cols[k].append(v)
        return nid

    def grow(self, idx, depth=0):
        nid = self._new(idx)
        n = len(idx)
        if depth >= self.max_depth or n < 2 * self.min_leaf:
            self.leaf_rows[nid] = idx
            return nid
        if self.stop_pure and self.cols["impurity"][nid] == 0.0:
            self.leaf_rows[nid] = idx
            return nid
        allowed = self.feature_sampler() if self.feature_sampler else None
        split = find_best_split(self.binned, idx, self.stat_a, self.stat_b, self.score, self.min_leaf, allowed)
        if split is None or split.gain < self.min_gain:
            self.leaf_rows[nid] = idx
            return nid
        codes = self.binned.codes[idx, split.feature]
        missing = codes == self.binned.offsets[split.feature + 1] - 1
        go_left = np.where(missing, split.default_left, codes <= split.bin)
        self.cols["feature"][nid] = split.feature
        self.cols["threshold"][nid] = split.threshold
        self.cols["default_left"][nid] = split.default_left
        self.cols["gain"][nid] = split.gain
        self.cols["left"][nid] = self.grow(idx[go_left], depth + 1)
        self.cols["right"][nid] = self.grow(idx[~go_left], depth + 1)
        return nid

    def tree(self) -> Tree:
        c = self.cols
        return Tree(
            np.array(c["feature"], dtype=np.int64), np.array(c["threshold"], dtype=float),
            np.array(c["default_left"], dtype=bool), np.array(c["left"], dtype=np.int64),
            np.array(c["right"], dtype=np.int64), np.array(c["value"], dtype=float),
            np.array(c["impurity"], dtype=float), np.array(c["n_samples"], dtype=np.int64),
            np.array(c["n_fail"], dtype=np.int64), np.array(c["gain"], dtype=float),
        )


def _vote(y):
    def leaf_value(idx):
        return 1.0 if 2 * y[idx].sum() >= len(idx) else 0.0
    return leaf_value


def _feature_sampler(rng, p: int, n_sub: int | None):
    """Per-node random feature mask, or None when every feature is eligible."""
    if rng is None or n_sub is None or n_sub >= p:
        return None

    def sample():
        mask = np.zeros(p, dtype=bool)
        mask[rng.choice(p, size=n_sub, replace=False)] = True
        return mask
    return sample


def grow_classification_tree(binned: BinnedData, y: np.ndarray, idx: np.ndarray, params: TreeParams,
                             rng: np.random.Generator | None = None, n_sub: int | None = None) -> Tree:
    """Gini-gain CART on rows ``idx`` (duplicates allowed, as in a bootstrap sample)."""
    yf = y.astype(float)
    sampler = _feature_sampler(rng, binned.codes.shape[1], n_sub)
    b = _Builder(binned, y, yf, np.ones_like(yf), gini_score, _vote(y), params.min_samples_leaf,
                 params.max_depth, params.min_gain, stop_pure=True, feature_sampler=sampler)
    b.grow(np.asarray(idx, dtype=np.int64))
    return b.tree()


def fit_tree(dataset: LabeledDataset, params: TreeParams = TreeParams(), seed: int = 0) -> TreeEnsemble:
    dataset.require_both_classes()
    binned = BinnedData.from_matrix(dataset.X)
    tree = grow_classification_tree(binned, dataset.y, np.arange(dataset.n_rows), params)
    return TreeEnsemble([tree], "single", dataset.feature_names, seeds=[int(seed)],
                        params={"family": "tree", **params.__dict__})


def tree_seeds(seed: int, n: int) -> list[int]:
    """Per-tree seeds; tree ``t``'s seed depends only on ``(seed, t)``."""
    return [int(np.random.SeedSequence(seed, spawn_key=(t,)).generate_state(1, np.uint64)[0]) for t in range(n)]


def n_subsample_features(n_features: int, fraction: float | None) -> int:
    if fraction is None:
        return max(1, int(round(np.sqrt(n_features))))
    return max(1, int(round(fraction * n_features)))


def fit_forest_tree(binned: BinnedData, y: np.ndarray, params: ForestParams, tree_seed: int) -> Tree:
    rng = np.random.default_rng(tree_seed)
    n = len(y)
    idx = np.sort(rng.integers(0, n, size=n)) if params.bootstrap else np.arange(n)
    n_sub = n_subsample_features(binned.codes.shape[1], params.feature_fraction)
    return grow_classification_tree(binned, y, idx, params.tree_params(), rng, n_sub)


def fit_forest(dataset: LabeledDataset, params: ForestParams = ForestParams(), seed: int = 0) -> TreeEnsemble:
    dataset.require_both_classes()
    binned = BinnedData.from_matrix(dataset.X)
    seeds = tree_seeds(seed, params.n_trees)
    trees = [fit_forest_tree(binned, dataset.y, params, s) for s in seeds]
    return TreeEnsemble(trees, "bagged", dataset.feature_names, seeds=seeds,
                        params={"family": "forest", **params.__dict__, "seed": int(seed)})
