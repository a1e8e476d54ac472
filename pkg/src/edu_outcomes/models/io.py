"""JSON model files.

Layout (``format_version`` 1)::

    {"format": "edu_outcomes.model", "format_version": 1, "kind": "tree_ensemble" | "linear", ...}

Tree ensembles store every node array of every tree; linear models store the
intercept, coefficients and solver record. Floats are written with ``repr``
precision so a save/load round trip is exact.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import ConfigError
from .linear import LinearModel
from .tree import Tree, TreeEnsemble

FORMAT = "edu_outcomes.model"
VERSION = 1


def model_to_dict(model) -> dict:
    head = {"format": FORMAT, "format_version": VERSION}
    if isinstance(model, TreeEnsemble):
        return {
            **head,
            "kind": "tree_ensemble",
            "mode": model.mode,
            "feature_names": list(model.feature_names),
            "base_score": model.base_score,
            "learning_rate": model.learning_rate,
            "seeds": [int(s) for s in model.seeds],
            "params": model.params,
            "trace": model.trace,
            "trees": [t.to_dict() for t in model.trees],
        }
    if isinstance(model, LinearModel):
        return {
            **head,
            "kind": "linear",
            "feature_names": list(model.feature_names),
            "intercept": model.intercept,
            "coef": model.coef.tolist(),
            "reg_lambda": model.reg_lambda,
            "tol": model.tol,
            "iterations": model.iterations,
            "grad_norm": model.grad_norm,
        }
    raise TypeError(f"cannot serialize {type(model).__name__}")


def model_from_dict(d: dict):
    if d.get("format") != FORMAT or d.get("format_version") != VERSION:
        raise ConfigError(f"unsupported model file: format={d.get('format')!r} version={d.get('format_version')!r}")
    if d["kind"] == "tree_ensemble":
        return TreeEnsemble(
            [Tree.from_dict(t) for t in d["trees"]], d["mode"], tuple(d["feature_names"]),
            base_score=d["base_score"], learning_rate=d["learning_rate"], seeds=list(d["seeds"]),
            params=d["params"], trace=d["trace"],
        )
    if d["kind"] == "linear":
        return LinearModel(d["intercept"], np.array(d["coef"], dtype=float), tuple(d["feature_names"]),
                           d["reg_lambda"], d["tol"], d["iterations"], d["grad_norm"])
    raise ConfigError(f"unknown model kind {d['kind']!r}")


def dumps(model) -> str:
    return json.dumps(model_to_dict(model), indent=1, sort_keys=True)


def loads(text: str):
    return model_from_dict(json.loads(text))


def save_model(model, path):
    Path(path).write_text(dumps(model), encoding="utf-8")


def load_model(path):
    return loads(Path(path).read_text(encoding="utf-8"))
