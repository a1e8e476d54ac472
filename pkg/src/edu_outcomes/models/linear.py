"""L2-penalized logistic regression solved by damped Newton iterations.

Coefficients are log-odds of **pass** (so a positive weight favours passing);
the intercept is not penalized.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ..encode import PASS_CODE, LabeledDataset
from ..errors import DataError, NonConvergence
from .params import LinearParams


@dataclass(eq=False)
class LinearModel:
    intercept: float
    coef: np.ndarray
    feature_names: tuple[str, ...]
    reg_lambda: float
    tol: float = 1e-8
    iterations: int = 0
    grad_norm: float = 0.0
    encoding: tuple = field(default=(), repr=False)

    def linear_predictor(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return self.intercept + X @ self.coef

    def pass_probability(self, X) -> np.ndarray:
        return expit(self.linear_predictor(X))


def penalized_nll(theta, X, t, reg_lambda) -> float:
    """Negative log-likelihood of targets ``t`` plus ``reg_lambda / 2 * |beta|^2``.

    ``theta[0]`` is the intercept.
    """
    z = theta[0] + X @ theta[1:]
    return float(np.sum(np.logaddexp(0.0, z) - t * z) + 0.5 * reg_lambda * theta[1:] @ theta[1:])


def penalized_grad(theta, X, t, reg_lambda) -> np.ndarray:
    r = expit(theta[0] + X @ theta[1:]) - t
    g = np.empty_like(theta)
    g[0] = r.sum()
    g[1:] = X.T @ r + reg_lambda * theta[1:]
    return g


def penalized_hessian(theta, X, t, reg_lambda) -> np.ndarray:
    p = expit(theta[0] + X @ theta[1:])
    w = p * (1.0 - p)
    Xa = np.hstack([np.ones((len(X), 1)), X])
    H = (Xa * w[:, None]).T @ Xa
    H[1:, 1:] += reg_lambda * np.eye(X.shape[1])
    return H


def fit_logreg(dataset: LabeledDataset, params: LinearParams = LinearParams()) -> LinearModel:
    dataset.require_both_classes()
    X = np.asarray(dataset.X, dtype=float)
    if np.isnan(X).any():
        raise DataError("logistic regression needs a linear-mode encoding without missing cells")
    t = (dataset.y == PASS_CODE).astype(float)
    lam = params.reg_lambda
    # constant columns have an exactly-zero optimum (the intercept absorbs them)
    active = np.flatnonzero(np.ptp(X, axis=0) > 0) if X.shape[0] else np.arange(X.shape[1])
    Xa = X[:, active]
    theta = np.zeros(len(active) + 1)
    f = penalized_nll(theta, Xa, t, lam)
    g = penalized_grad(theta, Xa, t, lam)
    it = 0
    while np.linalg.norm(g) > params.tol:
        if it >= params.max_iter:
            raise NonConvergence(it, float(np.linalg.norm(g)))
        H = penalized_hessian(theta, Xa, t, lam)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, g, rcond=None)[0]
        if not np.all(np.isfinite(step)):
            step = np.linalg.lstsq(H, g, rcond=None)[0]
        scale = 1.0
        while True:
            cand = theta - scale * step
            fc = penalized_nll(cand, Xa, t, lam)
            # tolerate round-off in the objective once the step is tiny
            if fc <= f + 1e-13 * max(1.0, abs(f)) or scale < 1e-10:
                break
            scale *= 0.5
        it += 1
        if fc > f + 1e-13 * max(1.0, abs(f)):
            raise NonConvergence(it, float(np.linalg.norm(g)))
        theta, f = cand, fc
        g = penalized_grad(theta, Xa, t, lam)
    coef = np.zeros(X.shape[1])
    coef[active] = theta[1:]
    return LinearModel(float(theta[0]), coef, dataset.feature_names, lam, params.tol, it,
                       float(np.linalg.norm(g)), dataset.encoding)
