"""Config-driven end-to-end run: ingest, label, evaluate, refit, explain, test, describe.

Outputs are written to a staging directory next to the target and moved into
place only when every requested stage has succeeded. All randomness derives
from the config seed through :func:`~edu_outcomes.evaluation.derive_seed`.
"""
from __future__ import annotations

import copy
import csv
import hashlib
import json
import logging
import os
import shutil
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from . import synth as synth_mod
from .encode import LabeledDataset, balance_classes, encode_features
from .errors import ConfigError, DataError, EduOutcomesError, NumericError, StageError
from .evaluation import (
    EvalReport,
    cross_validate,
    derive_seed,
    grid_search,
    majority_baseline,
    write_folds_csv,
    write_performance_csv,
)
from .export import export_tree, export_tree_dot
from .interpret import (
    linear_importance,
    odds_ratio_table,
    select_background,
    shap_summary,
    tree_shap_matrix,
    write_beeswarm_csv,
    write_importance_csv,
    write_odds_ratio_csv,
    write_ranking_csv,
)
from .models import ENCODING_MODE, fit_model, make_params, save_model
from .models.params import PARAMS_BY_FAMILY, TreeParams, params_dict
from .models.tree import fit_tree
from .stats import (
    ContingencyTable,
    anova_oneway,
    frequency_table,
    group_summary,
    gk_gamma,
    histogram,
    kruskal_wallis,
    write_association_csv,
)
from .table import (
    FAIL,
    PASS,
    Agg,
    Column,
    LabelRule,
    SchemaSpec,
    Table,
    add_ratio_column,
    bin_labels,
    count_aggregate_by_group,
    derive_label,
    drop_sparse_columns,
    merge_on_key,
    mode_aggregate_by_group,
    quantile_bin,
    read_table,
)

log = logging.getLogger(__name__)

MANIFEST_FORMAT = "edu_outcomes.manifest"
MANIFEST_VERSION = 1
OUTCOME = "outcome"
TREE_FAMILIES = ("tree", "forest", "boosted")
STAGES = ("ingest", "evaluate", "train", "explain", "assoc", "report")
STAGE_NEEDS = {"explain": ("train",)}
STEP_OPS = ("mode_aggregate", "count_aggregate", "merge", "ratio", "drop_sparse")


# -- config ------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelSpec:
    family: str
    params: dict = field(default_factory=dict)
    grid: dict | list | None = None


@dataclass(frozen=True)
class CVSpec:
    k: int = 10
    reps: int = 10
    balance: bool = True
    threshold: float = 0.5
    grid_reps: int = 1


@dataclass(frozen=True)
class InterpretSpec:
    background_cap: int = 500
    shap_model: str = "boosted"
    explain_rows: int | None = None  # None: every row
    tree_export_depth: int = 3
    tree_display_depth: int = 3


@dataclass(frozen=True)
class StatsSpec:
    alpha: float = 0.05
    categorical: tuple[str, ...] | None = None  # None: every categorical feature
    numeric: tuple[str, ...] | None = None  # None: every numeric feature


@dataclass(frozen=True)
class DescribeSpec:
    frequency: tuple[str, ...] | None = None
    summary: tuple[str, ...] | None = None
    quantile_column: str | None = None  # None: the score column
    quantile_k: int = 4
    histogram: tuple[str, ...] | None = None
    histogram_bins: int = 20


@dataclass(frozen=True)
class SynthSpec:
    kind: str = "sa"
    n_schools: int = 5000


@dataclass(frozen=True)
class PipelineConfig:
    seed: int
    schema: SchemaSpec
    inputs: dict[str, str]
    steps: tuple[dict, ...]
    dataset: str
    score: str
    label: LabelRule
    models: tuple[ModelSpec, ...]
    cv: CVSpec = CVSpec()
    interpret: InterpretSpec = InterpretSpec()
    stats: StatsSpec = StatsSpec()
    describe: DescribeSpec = DescribeSpec()
    synth: SynthSpec | None = None
    output_dir: str | None = None
    raw: dict = field(default_factory=dict, compare=False)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file {str(path)!r} not found")
        with open(path, encoding="utf-8") as fh:
            try:
                data = yaml.safe_load(fh)
            except yaml.YAMLError as exc:
                raise ConfigError(f"{path}: invalid YAML ({exc})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config must be a mapping")
        return cls.from_dict(data, base_dir=path.parent)

    @classmethod
    def from_dict(cls, data: dict, base_dir=".") -> "PipelineConfig":
        data = copy.deepcopy(data)
        base = Path(base_dir)
        known = {"seed", "schema", "inputs", "synth", "steps", "dataset", "label", "models", "cv",
                 "interpret", "stats", "describe", "output_dir"}
        _no_unknown("config", data, known)
        seed = data.get("seed")
        if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
            raise ConfigError("config needs an explicit integer seed in [0, 2^64)")

        synth = None
        if data.get("synth") is not None:
            raw = _mapping("synth", data["synth"])
            _no_unknown("synth", raw, {"kind", "n_schools"})
            synth = SynthSpec(**raw)
            if synth.kind not in SYNTH_KINDS:
                raise ConfigError(f"synth kind must be one of {sorted(SYNTH_KINDS)}")
            if synth.n_schools < 1:
                raise ConfigError("synth.n_schools must be >= 1")

        schema_raw = data.get("schema")
        if schema_raw is None:
            if synth is None:
                raise ConfigError("config needs a schema")
            schema = SYNTH_KINDS[synth.kind][1]()
        elif isinstance(schema_raw, str):
            spath = base / schema_raw
            if not spath.is_file():
                raise ConfigError(f"schema file {schema_raw!r} not found")
            schema = SchemaSpec.load(spath)
        else:
            schema = SchemaSpec.from_dict(_mapping("schema", schema_raw))

        inputs = {}
        if synth is None:
            for name, p in _mapping("inputs", data.get("inputs") or {}).items():
                inputs[str(name)] = str(base / str(p))
            if not inputs:
                raise ConfigError("config needs inputs (or a synth section)")
        elif data.get("inputs"):
            raise ConfigError("give either inputs or synth, not both")
        else:
            inputs = {name: "" for name in SYNTH_KINDS[synth.kind][2]}

        steps = tuple(_mapping("step", s) for s in data.get("steps") or ())
        dataset = data.get("dataset") or (_step_target(steps[-1]) if steps else next(iter(inputs)))
        label_raw = _mapping("label", data.get("label") or {})
        _no_unknown("label", label_raw, {"score", "threshold", "pass_iff_geq"})
        score = label_raw.pop("score", None) or schema.score_column()
        label = LabelRule(**label_raw)

        models_raw = _mapping("models", data.get("models") or {f: {} for f in PARAMS_BY_FAMILY})
        models = []
        for family, spec in models_raw.items():
            spec = _mapping(f"models.{family}", spec or {})
            _no_unknown(f"models.{family}", spec, {"params", "grid"})
            params = dict(spec.get("params") or {})
            make_params(family, params)
            grid = spec.get("grid")
            if grid is not None:
                cells = grid if isinstance(grid, list) else [dict(zip(grid, [v[0] for v in grid.values()]))]
                for cell in cells:
                    make_params(family, {**params, **cell})
            models.append(ModelSpec(family, params, grid))

        def section(name, klass, tuple_fields=()):
            raw = _mapping(name, data.get(name) or {})
            _no_unknown(name, raw, set(klass.__dataclass_fields__))
            for f in tuple_fields:
                if raw.get(f) is not None:
                    raw[f] = tuple(raw[f])
            return klass(**raw)

        cfg = cls(
            seed=seed, schema=schema, inputs=inputs, steps=steps, dataset=str(dataset), score=score,
            label=label, models=tuple(models),
            cv=section("cv", CVSpec),
            interpret=section("interpret", InterpretSpec),
            stats=section("stats", StatsSpec, ("categorical", "numeric")),
            describe=section("describe", DescribeSpec, ("frequency", "summary", "histogram")),
            synth=synth,
            output_dir=str(base / data["output_dir"]) if data.get("output_dir") else None,
            raw=data,
        )
        cfg.validate()
        return cfg

    def with_overrides(self, seed: int | None = None, threshold: float | None = None,
                       output_dir: str | None = None) -> "PipelineConfig":
        raw = copy.deepcopy(self.raw)
        changes = {}
        if seed is not None:
            if not 0 <= seed < 2 ** 64:
                raise ConfigError("seed must be in [0, 2^64)")
            raw["seed"] = changes["seed"] = seed
        if threshold is not None:
            if not 0.0 <= threshold <= 1.0:
                raise ConfigError("threshold must be in [0, 1]")
            raw.setdefault("cv", {})["threshold"] = threshold
            changes["cv"] = CVSpec(**{**self.cv.__dict__, "threshold": threshold})
        if output_dir is not None:
            changes["output_dir"] = str(output_dir)
        return PipelineConfig(**{**self.__dict__, **changes, "raw": raw})

    def config_hash(self) -> str:
        """Digest of the effective config (output location excluded)."""
        body = {k: v for k, v in self.raw.items() if k != "output_dir"}
        body["__schema__"] = self.schema.to_dict()
        text = json.dumps(body, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def validate(self):
        """Check cross references: every column a step, the label or a plan names must be declared."""
        declared = set(self.schema.columns)

        def need(col, where):
            if col not in declared:
                raise ConfigError(f"{where}: column {col!r} is not declared in the schema")

        tables = set(self.inputs)
        for i, step in enumerate(self.steps):
            where = f"steps[{i}]"
            op = step.get("op")
            if op not in STEP_OPS:
                raise ConfigError(f"{where}: unknown op {op!r}; expected one of {list(STEP_OPS)}")
            refs = [step.get("left"), step.get("right")] if op == "merge" else [step.get("table")]
            for t in refs:
                if t not in tables:
                    raise ConfigError(f"{where}: table {t!r} is not an input or an earlier result")
            if op == "mode_aggregate":
                _no_unknown(where, step, {"op", "table", "group", "values", "as"})
                need(step.get("group"), where)
                for v in step.get("values") or ():
                    need(v, where)
            elif op == "count_aggregate":
                _no_unknown(where, step, {"op", "table", "key", "aggs", "keys_from", "as"})
                need(step.get("key"), where)
                for a in step.get("aggs") or ():
                    _no_unknown(f"{where}.aggs", a, {"op", "name", "column", "level"})
                    need(a.get("name"), where)
                    if a.get("column") is not None:
                        need(a["column"], where)
                kf = step.get("keys_from")
                if kf is not None and kf.get("table") not in tables:
                    raise ConfigError(f"{where}: keys_from table {kf.get('table')!r} unknown")
            elif op == "merge":
                _no_unknown(where, step, {"op", "left", "right", "key", "many_to_one", "as"})
                need(step.get("key"), where)
            elif op == "ratio":
                _no_unknown(where, step, {"op", "table", "numerator", "denominator", "name", "as"})
                for k in ("numerator", "denominator", "name"):
                    need(step.get(k), where)
            elif op == "drop_sparse":
                _no_unknown(where, step, {"op", "table", "max_missing_frac", "as"})
                frac = step.get("max_missing_frac", 0.5)
                if not isinstance(frac, (int, float)) or not 0 <= frac <= 1:
                    raise ConfigError(f"{where}: max_missing_frac must be in [0, 1]")
            tables.add(_step_target(step))
        if self.dataset not in tables:
            raise ConfigError(f"dataset {self.dataset!r} is not an input or a step result")
        need(self.score, "label")
        if self.schema[self.score].kind not in ("numeric", "integer"):
            raise ConfigError(f"score column {self.score!r} must be numeric")
        for col in (self.stats.categorical or ()) + (self.stats.numeric or ()):
            need(col, "stats")
        d = self.describe
        for col in (d.frequency or ()) + (d.summary or ()) + (d.histogram or ()):
            need(col, "describe")
        if d.quantile_column is not None:
            need(d.quantile_column, "describe")
        if d.quantile_k < 2 or d.histogram_bins < 1:
            raise ConfigError("describe: quantile_k must be >= 2 and histogram_bins >= 1")
        cv = self.cv
        if cv.k < 2 or cv.reps < 1 or cv.grid_reps < 1 or not 0 <= cv.threshold <= 1:
            raise ConfigError("cv: need k >= 2, reps >= 1, grid_reps >= 1 and threshold in [0, 1]")
        it = self.interpret
        if it.background_cap < 1 or it.tree_export_depth < 0 or it.tree_display_depth < 0:
            raise ConfigError("interpret: background_cap >= 1 and nonnegative depths required")
        if it.explain_rows is not None and it.explain_rows < 1:
            raise ConfigError("interpret: explain_rows must be >= 1")
        families = [m.family for m in self.models]
        if len(set(families)) != len(families):
            raise ConfigError("each model family may appear once")
        if it.shap_model not in TREE_FAMILIES:
            raise ConfigError(f"interpret.shap_model must be one of {list(TREE_FAMILIES)}")


def _step_target(step: dict) -> str:
    """Name a step's result is stored under (``as``, else the table it rewrites)."""
    return step.get("as") or step.get("table") or step.get("left")


def _mapping(name, value) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(f"{name} must be a mapping")
    return dict(value)


def _no_unknown(name, raw: dict, known: set):
    unknown = set(raw) - set(known)
    if unknown:
        raise ConfigError(f"{name}: unknown keys {sorted(unknown)}")


def _sa_tables(n, seed):
    b = synth_mod.synth_sa_bundle(n, seed=seed)
    return {k: b[k] for k in ("performance", "masterlist", "households")}


def _sl_tables(n, seed):
    return synth_mod.synth_sl_bundle(n, seed=seed)


def sa_input_schema() -> SchemaSpec:
    """Schema covering the three SA-style source files."""
    cols = dict(synth_mod.sa_schema().columns)
    cols["household_id"] = synth_mod.ColumnSpec(role="ignore", kind="integer")
    return SchemaSpec(cols)


SYNTH_KINDS = {
    "sa": (_sa_tables, sa_input_schema, ("performance", "masterlist", "households")),
    "sl": (_sl_tables, synth_mod.sl_schema, ("schools", "teachers")),
}


# -- manifest ------------------------------------------------------------------------

@dataclass
class RunManifest:
    config_hash: str
    seed: int
    seeds: dict = field(default_factory=dict)
    stages: list = field(default_factory=list)
    dropped_columns: list = field(default_factory=list)
    dropped_rows: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    files: list = field(default_factory=list)

    def count(self, stage: str, table: Table):
        self.stages.append({"stage": stage, "rows": table.n_rows, "columns": len(table.names)})

    def to_dict(self) -> dict:
        return {"format": MANIFEST_FORMAT, "version": MANIFEST_VERSION, **self.__dict__}

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunResult:
    manifest: RunManifest
    out_dir: Path
    reports: dict[str, EvalReport] = field(default_factory=dict)
    baseline: EvalReport | None = None
    models: dict = field(default_factory=dict)
    shap_ranking: list = field(default_factory=list)
    associations: list = field(default_factory=list)


# -- stages --------------------------------------------------------------------------

def _apply_steps(cfg: PipelineConfig, env: dict[str, Table], man: RunManifest):
    for i, step in enumerate(cfg.steps):
        op = step["op"]
        target = _step_target(step)
        if op == "mode_aggregate":
            t = env[step["table"]]
            values = step.get("values") or [n for n in t.names if n != step["group"] and t[n].kind == "categorical"]
            out = mode_aggregate_by_group(t, step["group"], values)
        elif op == "count_aggregate":
            t = env[step["table"]]
            aggs = [Agg(**a) for a in step.get("aggs") or ()]
            keys = None
            if step.get("keys_from"):
                kf = step["keys_from"]
                keys = env[kf["table"]][kf.get("column", step["key"])].to_list()
            out = count_aggregate_by_group(t, step["key"], aggs, keys)
        elif op == "merge":
            out = merge_on_key(env[step["left"]], env[step["right"]], step["key"],
                               many_to_one=bool(step.get("many_to_one", False)))
        elif op == "ratio":
            t = env[step["table"]]
            out = add_ratio_column(t, step["numerator"], step["denominator"], step["name"])
            den = t[step["denominator"]].as_float()
            n_zero = int(np.sum(den == 0))
            if n_zero:
                man.notes.append(f"{step['name']}: {n_zero} rows with zero {step['denominator']} set missing")
        else:
            t = env[step["table"]]
            frac = float(step.get("max_missing_frac", 0.5))
            out, report = drop_sparse_columns(t, frac)
            for name, f in report:
                man.dropped_columns.append({"table": step["table"], "column": name, "missing_fraction": round(f, 6),
                                            "reason": f"missing fraction above {frac}"})
        env[target] = out
        man.count(f"step[{i}]:{op}->{target}", out)


def _ingest(cfg: PipelineConfig, staging: Path, man: RunManifest) -> Table:
    inputs = dict(cfg.inputs)
    if cfg.synth is not None:
        seed = derive_seed(cfg.seed, "synth")
        man.seeds["synth"] = seed
        tables = SYNTH_KINDS[cfg.synth.kind][0](cfg.synth.n_schools, seed)
        (staging / "inputs").mkdir()
        for name, t in tables.items():
            p = staging / "inputs" / f"{name}.csv"
            t.to_csv(p)
            inputs[name] = str(p)
        man.notes.append(f"inputs generated synthetically ({cfg.synth.kind}, {cfg.synth.n_schools} schools)")
    env = {}
    for name, path in inputs.items():
        if not os.path.isfile(path):
            raise DataError(f"input {name!r}: file {path!r} not found")
        env[name] = read_table(path, cfg.schema)
        man.count(f"read:{name}", env[name])
    _apply_steps(cfg, env, man)
    table = env[cfg.dataset]
    labelled, dropped = derive_label(table, cfg.score, cfg.label, OUTCOME)
    man.dropped_rows.append({"reason": f"missing {cfg.score}", "count": dropped})
    man.count("label", labelled)
    labelled.to_csv(staging / "dataset.csv")
    return labelled


def _encode(cfg: PipelineConfig, table: Table, man: RunManifest) -> dict[str, LabeledDataset]:
    out = {}
    for mode in sorted({ENCODING_MODE[m.family] for m in cfg.models} | {"tree"}):
        ds = encode_features(table, cfg.schema, mode, OUTCOME)
        out[mode] = ds
        man.stages.append({"stage": f"encode:{mode}", "rows": ds.n_rows, "columns": ds.n_features})
    n_fail, n_pass = out["tree"].class_counts()
    man.notes.append(f"class counts: {n_fail} fail / {n_pass} pass")
    return out


def _params_for(cfg: PipelineConfig, spec: ModelSpec, ds: LabeledDataset, man: RunManifest, grid_cells: list):
    params = make_params(spec.family, spec.params)
    if spec.grid is None:
        return params
    seed = derive_seed(cfg.seed, "grid", spec.family)
    man.seeds[f"grid:{spec.family}"] = seed
    res = grid_search(ds, spec.family, spec.grid, k=cfg.cv.k, seed=seed, reps=cfg.cv.grid_reps,
                      balance=cfg.cv.balance, base_params=params)
    for i, (cell, auc) in enumerate(res.cells):
        grid_cells.append([spec.family, i, json.dumps(cell, sort_keys=True), f"{auc:.6f}", str(i == res.best_index).lower()])
    return res.best


def _evaluate(cfg: PipelineConfig, data: dict, staging: Path, man: RunManifest, result: RunResult) -> dict:
    cv_seed = derive_seed(cfg.seed, "cv")
    man.seeds["cv"] = cv_seed
    chosen, grid_cells = {}, []
    for spec in cfg.models:
        ds = data[ENCODING_MODE[spec.family]]
        params = _params_for(cfg, spec, ds, man, grid_cells)
        chosen[spec.family] = params
        result.reports[spec.family] = cross_validate(ds, spec.family, params, k=cfg.cv.k, reps=cfg.cv.reps,
                                                     seed=cv_seed, balance=cfg.cv.balance,
                                                     threshold=cfg.cv.threshold)
    result.baseline = majority_baseline(data["tree"], cfg.cv.k, cfg.cv.reps, cv_seed, cfg.cv.threshold)
    reports = [result.reports[m.family] for m in cfg.models]
    write_performance_csv(staging / "model_performance.csv", reports)
    write_performance_csv(staging / "baseline_performance.csv", [result.baseline])
    write_folds_csv(staging / "cv_folds.csv", reports)
    if grid_cells:
        with open(staging / "grid_search.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["model", "cell", "params", "mean_auc", "selected"])
            w.writerows(grid_cells)
    with open(staging / "selected_params.json", "w", encoding="utf-8") as fh:
        json.dump({f: params_dict(p) for f, p in chosen.items()}, fh, indent=1, sort_keys=True)
        fh.write("\n")
    man.notes.append(f"metrics are fold means over {cfg.cv.reps} x {cfg.cv.k}-fold stratified CV, "
                     f"decision threshold {cfg.cv.threshold}, training folds balanced={cfg.cv.balance}")
    return chosen


def _train(cfg: PipelineConfig, data: dict, chosen: dict, staging: Path, man: RunManifest, result: RunResult):
    (staging / "models").mkdir()
    for spec in cfg.models:
        ds = data[ENCODING_MODE[spec.family]]
        params = chosen.get(spec.family) or make_params(spec.family, spec.params)
        train = ds
        if cfg.cv.balance:
            train = balance_classes(ds, derive_seed(cfg.seed, "refit", "balance"))
        seed = derive_seed(cfg.seed, "refit", spec.family)
        man.seeds[f"refit:{spec.family}"] = seed
        model = fit_model(spec.family, train, params, seed)
        result.models[spec.family] = model
        save_model(model, staging / "models" / f"{spec.family}.json")
    man.notes.append("interpretability outputs use models refit on the full labelled dataset")


def _explain(cfg: PipelineConfig, data: dict, staging: Path, man: RunManifest, result: RunResult):
    it = cfg.interpret
    ds = data["tree"]
    if it.shap_model in result.models:
        model = result.models[it.shap_model]
        bg_seed = derive_seed(cfg.seed, "background")
        man.seeds["background"] = bg_seed
        background = select_background(ds.X, it.background_cap, bg_seed)
        X = ds.X
        if it.explain_rows is not None and it.explain_rows < len(X):
            X = select_background(X, it.explain_rows, derive_seed(cfg.seed, "explain_rows"))
        attrib = tree_shap_matrix(model, X, background, f"{len(background)} rows of the labelled dataset")
        ranking, records = shap_summary(attrib, X)
        result.shap_ranking = ranking
        write_ranking_csv(staging / "shap_ranking.csv", ranking)
        write_beeswarm_csv(staging / "shap_beeswarm.csv", records)
        man.notes.append(f"SHAP for {it.shap_model}: {len(X)} explained rows, {len(background)} background rows, "
                         f"base value {attrib.base_value:.6f}")
    if "linear" in result.models:
        lin = result.models["linear"]
        write_odds_ratio_csv(staging / "odds_ratios.csv", odds_ratio_table(lin))
        write_importance_csv(staging / "linear_importance.csv", linear_importance(lin))
    train = balance_classes(ds, derive_seed(cfg.seed, "refit", "balance")) if cfg.cv.balance else ds
    pruned = fit_tree(train, TreeParams(max_depth=it.tree_export_depth), derive_seed(cfg.seed, "tree_export"))
    (staging / "tree.txt").write_text(export_tree(pruned, it.tree_display_depth), encoding="utf-8")
    (staging / "tree.dot").write_text(export_tree_dot(pruned, it.tree_display_depth), encoding="utf-8")


def _feature_columns(cfg: PipelineConfig, table: Table, kinds) -> list[str]:
    return [n for n in table.names if n in cfg.schema and cfg.schema[n].role == "feature" and table[n].kind in kinds]


def _assoc(cfg: PipelineConfig, table: Table, staging: Path, man: RunManifest, result: RunResult):
    y = table[OUTCOME].to_list()
    cats = cfg.stats.categorical if cfg.stats.categorical is not None else _feature_columns(cfg, table, ("categorical",))
    nums = cfg.stats.numeric if cfg.stats.numeric is not None else _feature_columns(cfg, table, ("numeric", "integer"))
    results = []
    for name in cats:
        if name not in table:
            man.notes.append(f"assoc: {name} not in dataset, skipped")
            continue
        col = table[name]
        ct = ContingencyTable.from_pairs(col.to_list(), y, col.levels, (FAIL, PASS))
        try:
            r = gk_gamma(ct)
        except EduOutcomesError as exc:
            man.notes.append(f"assoc: gamma for {name} skipped ({exc})")
            continue
        results.append(_named(r, name))
    for name in nums:
        if name not in table:
            man.notes.append(f"assoc: {name} not in dataset, skipped")
            continue
        x = table[name].as_float()
        groups = [x[[i for i, v in enumerate(y) if v == lv]] for lv in (FAIL, PASS)]
        groups = [g[~np.isnan(g)] for g in groups]
        for test in (kruskal_wallis, anova_oneway):
            try:
                results.append(_named(test(groups), name))
            except (EduOutcomesError, ValueError) as exc:
                man.notes.append(f"assoc: {test.__name__} for {name} skipped ({exc})")
    result.associations = results
    write_association_csv(staging / "associations.csv", results, cfg.stats.alpha)


def _named(r, name):
    return replace(r, variable=name)


def _long_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _cell(v):
    if v is None or (isinstance(v, float) and np.isnan(v)):
        return ""
    return repr(float(v)) if isinstance(v, float) else str(v)


def _report(cfg: PipelineConfig, table: Table, staging: Path, man: RunManifest):
    d = cfg.describe
    cats = d.frequency if d.frequency is not None else _feature_columns(cfg, table, ("categorical",))
    nums = d.summary if d.summary is not None else [cfg.score] + _feature_columns(cfg, table, ("numeric", "integer"))
    cats = [c for c in cats if c in table]
    nums = [c for c in nums if c in table]

    def freq_rows(t, group):
        rows = []
        for c in cats:
            for g, lv, n, pct in frequency_table(t, group, c).rows():
                rows.append([c, g, lv, n, "" if pct is None else f"{pct:.2f}"])
        return rows

    _long_csv(staging / "frequency.csv", ["variable", "group", "level", "count", "percent"], freq_rows(table, OUTCOME))
    group_summary(table, OUTCOME, nums).to_csv(staging / "group_summary.csv")

    qcol = d.quantile_column or cfg.score
    values = table[qcol].as_float()
    try:
        bins, edges = quantile_bin(values, d.quantile_k)
    except EduOutcomesError as exc:
        man.notes.append(f"report: quantile bins of {qcol} skipped ({exc})")
    else:
        labels = bin_labels(values, edges)
        qname = f"{qcol}_quantile"
        cells = [labels[b] if b >= 0 else None for b in bins]
        qtable = table.with_column(Column.from_values(qname, "categorical", cells, tuple(labels)))
        counts = np.bincount(bins[bins >= 0], minlength=d.quantile_k)
        _long_csv(staging / "quantile_bins.csv", ["bin", "label", "count"],
                  [[i, labels[i], int(counts[i])] for i in range(d.quantile_k)])
        _long_csv(staging / "quantile_frequency.csv", ["variable", "group", "level", "count", "percent"],
                  freq_rows(qtable, qname))
        group_summary(qtable, qname, nums).to_csv(staging / "quantile_summary.csv")

    hist_cols = d.histogram if d.histogram is not None else nums
    rows = []
    for c in hist_cols:
        if c not in table:
            continue
        x = table[c].as_float()
        ok = x[~np.isnan(x)]
        if len(ok) == 0:
            continue
        edges = np.histogram_bin_edges(ok, bins=d.histogram_bins)
        labels = table[OUTCOME].to_list()
        for group in ("all", FAIL, PASS):
            sel = x if group == "all" else x[[i for i, v in enumerate(labels) if v == group]]
            for left, right, n in histogram(sel, edges).rows():
                rows.append([c, group, _cell(left), _cell(right), n])
    _long_csv(staging / "histograms.csv", ["variable", "group", "bin_left", "bin_right", "count"], rows)


# -- orchestration --------------------------------------------------------------------------

def _resolve_stages(stages) -> list[str]:
    wanted = set(STAGES if stages is None else stages)
    unknown = wanted - set(STAGES)
    if unknown:
        raise ConfigError(f"unknown stages {sorted(unknown)}")
    for s in list(wanted):
        wanted.update(STAGE_NEEDS.get(s, ()))
    wanted.add("ingest")
    return [s for s in STAGES if s in wanted]


def _publish(staging: Path, out: Path):
    if out.exists():
        if not out.is_dir():
            raise ConfigError(f"output path {str(out)!r} exists and is not a directory")
        old = Path(tempfile.mkdtemp(prefix=f".{out.name}.old-", dir=out.parent))
        os.replace(out, old / "previous")
        os.replace(staging, out)
        shutil.rmtree(old)
    else:
        os.replace(staging, out)


def run_pipeline(cfg: PipelineConfig, stages=None, out_dir=None) -> RunResult:
    """Run the requested stages (all by default) and publish the outputs atomically."""
    todo = _resolve_stages(stages)
    out = Path(out_dir or cfg.output_dir or "")
    if not str(out_dir or cfg.output_dir or ""):
        raise ConfigError("no output directory (set output_dir or pass --out)")
    out = out.resolve()
    out.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=f".{out.name}.staging-", dir=out.parent))
    man = RunManifest(cfg.config_hash(), cfg.seed)
    result = RunResult(man, out)
    try:
        stage = "ingest"
        try:
            table = _ingest(cfg, staging, man)
            data, chosen = None, {}
            for stage in todo[1:]:
                if stage in ("evaluate", "train", "explain") and data is None:
                    data = _encode(cfg, table, man)
                if stage == "evaluate":
                    chosen = _evaluate(cfg, data, staging, man, result)
                elif stage == "train":
                    _train(cfg, data, chosen, staging, man, result)
                elif stage == "explain":
                    _explain(cfg, data, staging, man, result)
                elif stage == "assoc":
                    _assoc(cfg, table, staging, man, result)
                elif stage == "report":
                    _report(cfg, table, staging, man)
        except StageError:
            raise
        except EduOutcomesError as exc:
            raise StageError(stage, exc) from exc
        except FloatingPointError as exc:
            raise StageError(stage, NumericError(str(exc))) from exc
        man.notes.append(f"stages run: {', '.join(todo)}")
        files = sorted(p for p in staging.rglob("*") if p.is_file())
        man.files = [{"path": p.relative_to(staging).as_posix(), "bytes": p.stat().st_size, "sha256": file_digest(p)}
                     for p in files]
        (staging / "manifest.json").write_text(man.dumps(), encoding="utf-8")
        _publish(staging, out)
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    log.info("wrote %d files to %s", len(man.files) + 1, out)
    return result


def load_manifest(out_dir) -> dict:
    with open(Path(out_dir) / "manifest.json", encoding="utf-8") as fh:
        return json.load(fh)
