"""Second-order gradient tree boosting with logistic loss."""
from __future__ import annotations

import numpy as np
from scipy.special import expit

from ..encode import LabeledDataset
from .params import BoostParams
from .tree import BinnedData, TreeEnsemble, _Builder

# smallest split gain worth materializing (guards against round-off splits)
SPLIT_EPS = 1e-6


def log_loss(y, margin) -> float:
    """Mean logistic loss for labels ``y`` in {0, 1} at raw margins."""
    return float(np.mean(np.logaddexp(0.0, margin) - y * margin))


def newton_score(reg_lambda, gamma):
    def score(parent, left, right):
        def term(s):
            return s[1] ** 2 / (s[2] + reg_lambda)
        return 0.5 * (term(left) + term(right) - term(parent)) - gamma
    return score


def leaf_weight(grad_sum, hess_sum, reg_lambda) -> float:
    return -grad_sum / (hess_sum + reg_lambda)


def fit_gbm(dataset: LabeledDataset, params: BoostParams = BoostParams(), seed: int = 0) -> TreeEnsemble:
    """Boosted trees on the fail-vs-pass log-odds.

    Each round fits a tree to the loss gradients ``p - y`` and hessians
    ``p (1 - p)`` at the current margins, with leaf weights ``-G / (H + lambda)``,
    and adds ``learning_rate`` times its output to the margins.
    """
    dataset.require_both_classes()
    y = dataset.y.astype(float)
    prevalence = y.mean()
    base = float(np.log(prevalence / (1.0 - prevalence)))
    binned = BinnedData.from_matrix(dataset.X)
    margin = np.full(len(y), base)
    idx = np.arange(len(y))
    score = newton_score(params.reg_lambda, params.gamma)
    losses = [log_loss(y, margin)]
    trees = []
    for _ in range(params.n_rounds):
        prob = expit(margin)
        grad = prob - y
        hess = prob * (1.0 - prob)

        def leaf_value(rows, grad=grad, hess=hess):
            return leaf_weight(grad[rows].sum(), hess[rows].sum(), params.reg_lambda)

        builder = _Builder(binned, dataset.y, grad, hess, score, leaf_value, params.min_samples_leaf,
                           params.max_depth, SPLIT_EPS)
        builder.grow(idx)
        tree = builder.tree()
        trees.append(tree)
        update = np.empty(len(y))
        for leaf, rows in builder.leaf_rows.items():
            update[rows] = tree.value[leaf]
        margin = margin + params.learning_rate * update
        losses.append(log_loss(y, margin))
    return TreeEnsemble(trees, "boosted", dataset.feature_names, base_score=base,
                        learning_rate=params.learning_rate, seeds=[int(seed)],
                        params={"family": "boosted", **params.__dict__}, trace={"train_loss": losses})
