"""Stratified repeated cross-validation, classification metrics and grid search.

Fail is the positive class throughout: sensitivity is the true-positive rate on
failing schools, specificity the true-negative rate on passing ones.
"""
from __future__ import annotations

import csv
import itertools
import math
import zlib
from dataclasses import dataclass, field

import numpy as np

from .encode import FAIL_CODE, LabeledDataset, balance_classes
from .errors import EmptyGrid, EmptyInput, EduOutcomesError, SingleClass, StageError, TooFewRows
from .models import fit_model, make_params, predict_proba
from .models.params import with_overrides
from .models.tree import Tree, TreeEnsemble
from .stats.tests import midranks


def derive_seed(seed: int, *path) -> int:
    """Child seed for a named stage/index path, independent of call order."""
    key = tuple(p if isinstance(p, int) else zlib.crc32(str(p).encode()) for p in path)
    return int(np.random.SeedSequence(seed, spawn_key=key).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignments: np.ndarray
    seed: int

    def folds(self):
        for f in range(self.k):
            test = np.flatnonzero(self.assignments == f)
            train = np.flatnonzero(self.assignments != f)
            yield train, test


def stratified_kfold(labels, k: int = 10, seed: int = 0) -> FoldPlan:
    """Shuffle each class (seeded), then deal its rows round-robin into ``k`` folds.

    Each class continues the round-robin where the previous class stopped, so
    fold sizes stay balanced overall as well as per class.
    """
    y = np.asarray(labels)
    if k < 2:
        raise ValueError("k must be >= 2")
    classes = [FAIL_CODE, 1 - FAIL_CODE]
    rng = np.random.default_rng(seed)
    assign = np.full(len(y), -1, dtype=np.int64)
    start = 0
    for c in classes:
        members = np.flatnonzero(y == c)
        if len(members) == 0:
            raise TooFewRows(f"class {c} has no rows")
        members = rng.permutation(members)
        assign[members] = (start + np.arange(len(members))) % k
        start = (start + len(members)) % k
    return FoldPlan(k, assign, seed)


@dataclass(frozen=True)
class Confusion:
    accuracy: float
    sensitivity: float | None
    specificity: float | None


def confusion_metrics(labels, probabilities, threshold: float = 0.5) -> Confusion:
    """Predict fail iff P(fail) >= threshold. Rates for an absent class are ``None``."""
    y = np.asarray(labels)
    p = np.asarray(probabilities, dtype=float)
    if len(y) == 0:
        raise EmptyInput("no rows to score")
    if len(y) != len(p):
        raise ValueError("labels and probabilities differ in length")
    pred = (p >= threshold).astype(int)
    pos = y == FAIL_CODE
    tp = int(np.sum(pred[pos] == FAIL_CODE))
    tn = int(np.sum(pred[~pos] != FAIL_CODE))
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    return Confusion(
        (tp + tn) / len(y),
        tp / n_pos if n_pos else None,
        tn / n_neg if n_neg else None,
    )


def roc_auc(labels, scores) -> float:
    """Mann-Whitney AUC with mid-ranks; fail rows should score higher."""
    y = np.asarray(labels)
    s = np.asarray(scores, dtype=float)
    pos = y == FAIL_CODE
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("AUC needs both classes")
    r = midranks(s)
    return float((r[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


@dataclass(frozen=True)
class FoldRecord:
    rep: int
    fold: int
    n_train: int
    n_test: int
    accuracy: float
    sensitivity: float | None
    specificity: float | None
    auc: float | None


METRICS = ("accuracy", "sensitivity", "specificity", "auc")


@dataclass(frozen=True)
class EvalReport:
    model: str
    params: dict
    seed: int
    k: int
    reps: int
    folds: tuple[FoldRecord, ...]
    threshold: float = 0.5
    balance: bool = True

    def _values(self, metric):
        return np.array([getattr(f, metric) for f in self.folds if getattr(f, metric) is not None], dtype=float)

    def mean(self, metric: str) -> float:
        v = self._values(metric)
        return float(v.mean()) if len(v) else math.nan

    def std(self, metric: str) -> float:
        v = self._values(metric)
        return float(v.std(ddof=1)) if len(v) > 1 else math.nan

    def summary(self) -> dict:
        return {m: self.mean(m) for m in METRICS}


def cross_validate(dataset: LabeledDataset, family: str, params=None, k: int = 10, reps: int = 10,
                   seed: int = 0, balance: bool = True, threshold: float = 0.5, fitter=None) -> EvalReport:
    """Repeated stratified k-fold CV.

    Repetition ``r`` uses fold seed ``derive_seed(seed, "folds", r)``; when
    ``balance`` is set only the training part of each fold is undersampled.
    ``fitter(train, seed)`` overrides model fitting (used for baselines).
    """
    dataset.require_both_classes()
    if params is None and fitter is None:
        params = make_params(family)
    records = []
    for rep in range(reps):
        plan = stratified_kfold(dataset.y, k, derive_seed(seed, "folds", rep))
        for fold, (train_idx, test_idx) in enumerate(plan.folds()):
            try:
                train = dataset.take(train_idx)
                if balance:
                    train = balance_classes(train, derive_seed(seed, "balance", rep, fold))
                fit_seed = derive_seed(seed, "fit", rep, fold)
                if fitter is not None:
                    model = fitter(train, fit_seed)
                else:
                    model = fit_model(family, train, params, fit_seed)
                test = dataset.take(test_idx)
                prob = predict_proba(model, test)
            except EduOutcomesError as exc:
                raise StageError(f"cv rep={rep} fold={fold}", exc) from exc
            cm = confusion_metrics(test.y, prob, threshold)
            try:
                auc = roc_auc(test.y, prob)
            except SingleClass:
                auc = None
            records.append(FoldRecord(rep, fold, len(train.y), len(test.y), cm.accuracy,
                                      cm.sensitivity, cm.specificity, auc))
    record = dict(params.__dict__) if params is not None and not isinstance(params, dict) else dict(params or {})
    return EvalReport(family, record, seed, k, reps, tuple(records), threshold, balance)


def constant_model(feature_names, fail_vote: float) -> TreeEnsemble:
    """Single-leaf tree voting ``fail_vote`` for every row."""
    z = np.zeros(1)
    tree = Tree(np.full(1, -1, dtype=np.int64), np.full(1, np.nan), np.zeros(1, dtype=bool),
                np.full(1, -1, dtype=np.int64), np.full(1, -1, dtype=np.int64), np.full(1, float(fail_vote)),
                z.copy(), np.zeros(1, dtype=np.int64), np.zeros(1, dtype=np.int64), z.copy())
    return TreeEnsemble([tree], "single", tuple(feature_names))


def majority_fitter(train: LabeledDataset, seed: int) -> TreeEnsemble:
    """Predict the training majority class everywhere (ties go to fail)."""
    n_fail, n_pass = train.class_counts()
    return constant_model(train.feature_names, 1.0 if n_fail >= n_pass else 0.0)


def majority_baseline(dataset: LabeledDataset, k: int = 10, reps: int = 10, seed: int = 0,
                      threshold: float = 0.5) -> EvalReport:
    """Constant majority-class predictor on the same fold plans as :func:`cross_validate`."""
    return cross_validate(dataset, "majority", None, k, reps, seed, balance=False, threshold=threshold,
                          fitter=majority_fitter)


@dataclass
class GridResult:
    best: object
    best_index: int
    cells: list[tuple[dict, float]] = field(default_factory=list)


def expand_grid(grid: dict) -> list[dict]:
    """Cartesian product of ``{name: [values]}`` in declaration order."""
    if not grid:
        return [{}]
    names = list(grid)
    return [dict(zip(names, combo)) for combo in itertools.product(*(grid[n] for n in names))]


def grid_search(dataset: LabeledDataset, family: str, grid, k: int = 10, seed: int = 0, reps: int = 1,
                balance: bool = True, base_params=None) -> GridResult:
    """Pick the cell with the highest mean CV AUC; ties keep the earliest cell.

    ``grid`` is either a dict of value lists or an explicit list of override dicts.
    """
    cells = expand_grid(grid) if isinstance(grid, dict) else list(grid)
    if not cells or (isinstance(grid, dict) and not grid):
        raise EmptyGrid("grid has no cells")
    base = base_params if base_params is not None else make_params(family)
    scored = []
    best_i, best_auc = -1, -math.inf
    for i, cell in enumerate(cells):
        params = with_overrides(base, cell)
        rep = cross_validate(dataset, family, params, k=k, reps=reps, seed=seed, balance=balance)
        auc = rep.mean("auc")
        scored.append((cell, auc))
        if auc > best_auc:
            best_i, best_auc = i, auc
    return GridResult(with_overrides(base, cells[best_i]), best_i, scored)


# -- export -------------------------------------------------------------------------

def _pct(v: float) -> str:
    return "" if v is None or math.isnan(v) else f"{100.0 * v:.1f}"


def write_performance_csv(path, reports: list[EvalReport]):
    """Per-model means in percent with one decimal."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", *METRICS])
        for r in reports:
            w.writerow([r.model, *(_pct(r.mean(m)) for m in METRICS)])


def write_folds_csv(path, reports: list[EvalReport]):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "rep", "fold", "n_train", "n_test", *METRICS])
        for r in reports:
            for f in r.folds:
                vals = ["" if getattr(f, m) is None else f"{getattr(f, m):.6f}" for m in METRICS]
                w.writerow([r.model, f.rep, f.fold, f.n_train, f.n_test, *vals])
