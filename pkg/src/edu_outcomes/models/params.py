"""Hyperparameters for the four model families.

Defaults are common library defaults; grid search overrides them.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

from ..errors import ConfigError


def _check(cond, msg):
    if not cond:
        raise ConfigError(msg)


@dataclass(frozen=True)
class TreeParams:
    max_depth: int = 6
    min_samples_leaf: int = 5
    min_gain: float = 1e-7

    def __post_init__(self):
        _check(self.max_depth >= 0, "max_depth must be >= 0")
        _check(self.min_samples_leaf >= 1, "min_samples_leaf must be >= 1")
        _check(self.min_gain >= 0, "min_gain must be >= 0")


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 200
    bootstrap: bool = True
    feature_fraction: float | None = None  # None: sqrt(n_features) / n_features
    max_depth: int = 6
    min_samples_leaf: int = 5
    min_gain: float = 1e-7

    def __post_init__(self):
        _check(self.n_trees >= 1, "n_trees must be >= 1")
        _check(self.feature_fraction is None or 0 < self.feature_fraction <= 1, "feature_fraction must be in (0, 1]")
        _check(self.max_depth >= 0 and self.min_samples_leaf >= 1 and self.min_gain >= 0, "invalid tree limits")

    def tree_params(self) -> TreeParams:
        return TreeParams(self.max_depth, self.min_samples_leaf, self.min_gain)


@dataclass(frozen=True)
class BoostParams:
    n_rounds: int = 200
    learning_rate: float = 0.1
    reg_lambda: float = 1.0
    gamma: float = 0.0
    max_depth: int = 6
    min_samples_leaf: int = 1

    def __post_init__(self):
        _check(self.n_rounds >= 1, "n_rounds must be >= 1")
        _check(self.learning_rate >= 0, "learning_rate must be >= 0")
        _check(self.reg_lambda >= 0 and self.gamma >= 0, "penalties must be >= 0")
        _check(self.max_depth >= 0 and self.min_samples_leaf >= 1, "invalid tree limits")


@dataclass(frozen=True)
class LinearParams:
    reg_lambda: float = 1.0
    tol: float = 1e-8
    max_iter: int = 100

    def __post_init__(self):
        _check(self.reg_lambda >= 0, "reg_lambda must be >= 0")
        _check(self.tol > 0 and self.max_iter >= 1, "invalid solver limits")


PARAMS_BY_FAMILY = {
    "tree": TreeParams,
    "forest": ForestParams,
    "boosted": BoostParams,
    "linear": LinearParams,
}


def make_params(family: str, overrides: dict | None = None):
    if family not in PARAMS_BY_FAMILY:
        raise ConfigError(f"unknown model family {family!r}; expected one of {sorted(PARAMS_BY_FAMILY)}")
    cls = PARAMS_BY_FAMILY[family]
    overrides = dict(overrides or {})
    known = {f.name for f in fields(cls)}
    unknown = set(overrides) - known
    if unknown:
        raise ConfigError(f"{family}: unknown hyperparameters {sorted(unknown)}")
    return cls(**overrides)


def with_overrides(params, overrides: dict):
    return replace(params, **overrides)


def params_dict(params) -> dict:
    return asdict(params)
