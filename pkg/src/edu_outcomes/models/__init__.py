"""Classifier families and a common probability interface.

All probabilities returned by :func:`predict_proba` are P(fail), matching the
internal label coding (fail = 1).
"""
from __future__ import annotations

import numpy as np
from scipy.special import expit

from ..encode import LabeledDataset
from ..errors import FeatureMismatch
from .boost import fit_gbm, log_loss
from .io import dumps, load_model, loads, save_model
from .linear import LinearModel, fit_logreg
from .params import BoostParams, ForestParams, LinearParams, TreeParams, make_params
from .tree import Tree, TreeEnsemble, TreeNode, fit_forest, fit_tree, gini_impurity


def _matrix(model, rows) -> np.ndarray:
    if isinstance(rows, LabeledDataset):
        if tuple(rows.feature_names) != tuple(model.feature_names):
            raise FeatureMismatch("dataset features do not match the model's features")
        return rows.X
    X = np.asarray(rows, dtype=float)
    if X.ndim != 2 or X.shape[1] != len(model.feature_names):
        raise FeatureMismatch(f"expected {len(model.feature_names)} feature columns, got shape {X.shape}")
    return X


def raw_margin(model, rows) -> np.ndarray:
    X = _matrix(model, rows)
    if isinstance(model, LinearModel):
        return model.linear_predictor(X)
    return model.raw_margin(X)


def predict_proba(model, rows) -> np.ndarray:
    """P(fail) per row."""
    X = _matrix(model, rows)
    if isinstance(model, LinearModel):
        if np.isnan(X).any():
            raise FeatureMismatch("linear model rows must not contain missing cells")
        return 1.0 - model.pass_probability(X)
    m = model.raw_margin(X)
    return expit(m) if model.mode == "boosted" else m


FITTERS = {
    "tree": lambda ds, p, seed: fit_tree(ds, p, seed),
    "forest": lambda ds, p, seed: fit_forest(ds, p, seed),
    "boosted": lambda ds, p, seed: fit_gbm(ds, p, seed),
    "linear": lambda ds, p, seed: fit_logreg(ds, p),
}

ENCODING_MODE = {"tree": "tree", "forest": "tree", "boosted": "tree", "linear": "linear"}


def fit_model(family: str, dataset: LabeledDataset, params=None, seed: int = 0):
    params = params if params is not None else make_params(family)
    return FITTERS[family](dataset, params, seed)


__all__ = [
    "BoostParams", "ForestParams", "LinearModel", "LinearParams", "Tree", "TreeEnsemble", "TreeNode",
    "TreeParams", "dumps", "fit_forest", "fit_gbm", "fit_logreg", "fit_model", "fit_tree", "gini_impurity",
    "load_model", "loads", "log_loss", "make_params", "predict_proba", "raw_margin", "save_model",
    "ENCODING_MODE",
]
