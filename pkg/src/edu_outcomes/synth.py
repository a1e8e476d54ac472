"""Schema-driven synthetic school data with a planted outcome signal.

Each generated column follows the ``synth`` entry of its :class:`ColumnSpec`:

* categorical: ``{"probs": [...]}`` over the declared levels (uniform if absent)
* numeric/integer: ``{"dist": "uniform", "low": a, "high": b}``,
  ``{"dist": "normal", "mean": m, "sd": s}`` or ``{"dist": "poisson", "lam": l}``
* key: ``{"start": k}`` for consecutive ids
* group/text: ``{"prefix": "MUN", "n_groups": g}``
* any column: ``"missing": rate`` for a missing-completely-at-random fraction

The score column is filled from the signal: ``P(pass) = sigmoid(logit)``; passing
rows get a score in [50, 100], failing rows one in [0, 49.9].
"""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import ConfigError
from .table import Agg, Column, ColumnSpec, SchemaSpec, Table, count_aggregate_by_group, merge_on_key


@dataclass(frozen=True)
class SignalTerm:
    column: str
    coef: float
    level: str | None = None


def _split_terms(body: str) -> list[str]:
    """Split on top-level +/- (not inside ``[...]`` or an exponent)."""
    pieces, cur, depth = [], "", 0
    for i, ch in enumerate(body):
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
        if ch in "+-" and depth == 0 and cur and not (cur[-1] in "eE" and cur[:-1].replace(".", "").lstrip("+-").isdigit()):
            pieces.append(cur)
            cur = ""
        cur += ch
    if cur:
        pieces.append(cur)
    return pieces


@dataclass(frozen=True)
class Signal:
    """``logit(P(pass)) = intercept + sum(coef * x)``.

    ``x`` is the numeric value, the ordinal rank, or the 0/1 indicator of
    ``level``; missing cells contribute nothing.
    """

    intercept: float = 0.0
    terms: tuple[SignalTerm, ...] = ()

    _TERM = re.compile(r"^([+-]?\s*[\d.]+(?:e[+-]?\d+)?)\s*\*?\s*([A-Za-z_][\w\-]*)(?:\[([^\]]+)\])?$")

    @classmethod
    def parse(cls, text: str) -> "Signal":
        """Parse e.g. ``"2*Quintile - 6 + 0.8*Urban_Rural[urban]"``."""
        body = text.split("=", 1)[1] if "=" in text else text
        body = body.replace("−", "-").replace("·", "*").replace(" ", "")
        pieces = _split_terms(body)
        intercept, terms = 0.0, []
        for piece in pieces:
            try:
                intercept += float(piece)
                continue
            except ValueError:
                pass
            m = cls._TERM.match(piece)
            if not m:
                raise ConfigError(f"cannot parse signal term {piece!r}")
            coef = float(m.group(1).replace(" ", ""))
            terms.append(SignalTerm(m.group(2), coef, m.group(3)))
        return cls(intercept, tuple(terms))

    def logit(self, table: Table, schema: SchemaSpec) -> np.ndarray:
        z = np.full(table.n_rows, self.intercept)
        for t in self.terms:
            col = table[t.column]
            if t.level is not None:
                x = np.array([v == t.level for v in col.to_list()], dtype=float)
            elif col.kind == "categorical":
                spec = schema.columns.get(t.column)
                levels = col.levels
                try:
                    rank = {lv: float(lv) for lv in levels}
                except ValueError:
                    order = spec.levels if spec is not None and spec.levels else levels
                    rank = {lv: float(i + 1) for i, lv in enumerate(order)}
                x = np.array([0.0 if v is None else rank[v] for v in col.to_list()])
            else:
                x = np.nan_to_num(col.as_float())
            z += t.coef * x
        return z


def _gen_column(name: str, spec: ColumnSpec, n: int, rng: np.random.Generator):
    cfg = dict(spec.synth or {})
    if spec.role == "key":
        start = int(cfg.get("start", 1))
        values = list(range(start, start + n))
        return Column.from_values(name, spec.kind, values if spec.kind != "text" else [str(v) for v in values])
    if spec.kind == "categorical":
        if not spec.levels:
            raise ConfigError(f"synthetic categorical {name!r} needs declared levels")
        probs = np.asarray(cfg.get("probs", np.full(len(spec.levels), 1.0 / len(spec.levels))), dtype=float)
        draw = rng.choice(len(spec.levels), size=n, p=probs / probs.sum())
        values = [spec.levels[i] for i in draw]
        levels = spec.levels
    elif spec.kind in ("numeric", "integer"):
        dist = cfg.get("dist", "uniform")
        if dist == "uniform":
            x = rng.uniform(cfg.get("low", 0.0), cfg.get("high", 1.0), size=n)
        elif dist == "normal":
            x = rng.normal(cfg.get("mean", 0.0), cfg.get("sd", 1.0), size=n)
        elif dist == "poisson":
            x = rng.poisson(cfg.get("lam", 1.0), size=n).astype(float)
        else:
            raise ConfigError(f"unknown synthetic distribution {dist!r} for {name!r}")
        if spec.kind == "integer":
            values = np.rint(x).astype(np.int64).tolist()
        else:
            values = np.round(x, int(cfg.get("decimals", 3))).tolist()
        levels = None
    else:
        prefix = cfg.get("prefix", name)
        groups = int(cfg.get("n_groups", max(n, 1)))
        draw = rng.integers(0, groups, size=n)
        values = [f"{prefix}{i:04d}" for i in draw]
        levels = None
    rate = float(cfg.get("missing", 0.0))
    if rate > 0:
        holes = rng.random(n) < rate
        values = [None if h else v for v, h in zip(values, holes)]
    return Column.from_values(name, spec.kind, values, levels)


def generate_columns(schema: SchemaSpec, n: int, rng: np.random.Generator, skip=()) -> list[Column]:
    return [_gen_column(name, spec, n, rng) for name, spec in schema.columns.items()
            if name not in skip and spec.role != "score"]


def apply_signal(table: Table, schema: SchemaSpec, signal: Signal, rng: np.random.Generator) -> Table:
    score_name = schema.score_column()
    p_pass = expit(signal.logit(table, schema))
    passed = rng.random(table.n_rows) < p_pass
    hi = rng.uniform(50.0, 100.0, size=table.n_rows)
    lo = rng.uniform(0.0, 49.9, size=table.n_rows)
    score = np.round(np.where(passed, hi, lo), 1)
    rate = float((schema[score_name].synth or {}).get("missing", 0.0))
    vals = score.tolist()
    if rate > 0:
        holes = rng.random(table.n_rows) < rate
        vals = [None if h else v for v, h in zip(vals, holes)]
    return table.with_column(Column.from_values(score_name, "numeric", vals))


def synth_generate(schema: SchemaSpec, n: int, signal: Signal | str | None = None, seed: int = 0) -> Table:
    """Deterministic synthetic table with every schema column; the score column follows ``signal``."""
    if n < 0:
        raise ConfigError("n must be >= 0")
    if isinstance(signal, str):
        signal = Signal.parse(signal)
    rng = np.random.default_rng(seed)
    cols = generate_columns(schema, n, rng)
    table = Table(cols, n_rows=n)
    if schema.names_with_role("score"):
        table = apply_signal(table, schema, signal or Signal(), rng)
    order = [c for c in schema.columns if c in table]
    return table.select(order)


# -- South-Africa-shaped bundle ---------------------------------------------------------

def _cat(levels, probs=None, role="feature", ordinal=False, **extra):
    synth = {"probs": list(probs)} if probs else {}
    synth.update(extra)
    return ColumnSpec(role=role, kind="categorical", ordinal=ordinal, levels=tuple(levels), synth=synth or None)


SA_COMMUNITY = {
    "RateWater": _cat(["good", "average", "poor"], [0.3, 0.45, 0.25]),
    "RateToilet": _cat(["good", "average", "poor", "no-access"], [0.3, 0.35, 0.25, 0.1]),
    "RateHospital": _cat(["good", "average", "poor", "donot-use"], [0.3, 0.4, 0.2, 0.1]),
    "WaterAccess": _cat(["yes", "no"], [0.7, 0.3]),
    "MainDwellType": _cat(["formal", "informal", "traditional"], [0.6, 0.2, 0.2]),
    "SafetyInDay": _cat(["very-safe", "safe", "unsafe"], [0.3, 0.5, 0.2]),
    "SafetyInDark": _cat(["safe", "unsafe", "very-unsafe"], [0.4, 0.4, 0.2]),
    "ElectrInterrupt": _cat(["yes", "no"], [0.4, 0.6]),
    "EnergyLight": _cat(["electricity", "candles", "paraffin"], [0.7, 0.2, 0.1]),
    "HHgoods_tv": _cat(["yes", "no"], [0.7, 0.3]),
    "HHgoods_radio": _cat(["yes", "no"], [0.6, 0.4]),
    "HHgoods_dvd": _cat(["yes", "no"], [0.4, 0.6]),
    "Internet_cellphone": _cat(["yes", "no", "unknown"], [0.5, 0.4, 0.1]),
}

SA_SIGNAL = ("2.2*Quintile - 6.6 + 0.6*Urban_Rural[urban] - 0.5*RateToilet[poor] "
             "+ 0.5*SafetyInDay[very-safe] - 0.4*MainDwellType[traditional]")


def sa_schema() -> SchemaSpec:
    """Schema of the merged SA-style table (key, score, school and community columns)."""
    cols = {
        "emiscode": ColumnSpec(role="key", kind="integer", synth={"start": 100001}),
        "pass_rate": ColumnSpec(role="score", kind="numeric", synth={"missing": 0.01}),
        "municipality": ColumnSpec(role="group", kind="text", synth={"prefix": "MUN"}),
        "Quintile": _cat(["1", "2", "3", "4", "5"], ordinal=True),
        "Urban_Rural": _cat(["rural", "urban"], [0.6, 0.4]),
        "learners": ColumnSpec(kind="integer", synth={"dist": "uniform", "low": 150, "high": 1500}),
        "educators": ColumnSpec(kind="integer", synth={"dist": "uniform", "low": 5, "high": 50}),
        "school_canteen": _cat(["yes", "no"], missing=0.7),
        "latitude": ColumnSpec(role="ignore", kind="numeric", synth={"dist": "uniform", "low": -34.5, "high": -22.0}),
        "longitude": ColumnSpec(role="ignore", kind="numeric", synth={"dist": "uniform", "low": 16.5, "high": 32.8}),
        **SA_COMMUNITY,
        "student_teacher_ratio": ColumnSpec(kind="numeric"),
    }
    return SchemaSpec(cols)


def synth_sa_bundle(n_schools: int, seed: int = 0, n_munis: int | None = None, households_per_muni: int = 5,
                    signal: str = SA_SIGNAL) -> dict[str, Table]:
    """Three SA-style source files plus the ground-truth flat table.

    ``performance`` (emiscode, pass_rate), ``masterlist`` (school attributes and
    municipality) and ``households`` (several survey rows per municipality whose
    mode equals the municipality's community profile).
    """
    schema = sa_schema()
    rng = np.random.default_rng(seed)
    n_munis = n_munis or max(1, n_schools // 4)
    muni_names = [f"MUN{i:04d}" for i in range(n_munis)]
    community_schema = SchemaSpec(dict(SA_COMMUNITY))
    community = Table(
        [Column.from_values("municipality", "text", muni_names)] + generate_columns(community_schema, n_munis, rng),
        n_rows=n_munis,
    )
    school_cols = [n for n in schema.columns if n not in SA_COMMUNITY and n not in
                   ("municipality", "pass_rate", "student_teacher_ratio")]
    school_schema = SchemaSpec({n: schema[n] for n in school_cols})
    schools = Table(generate_columns(school_schema, n_schools, rng), n_rows=n_schools)
    muni = [muni_names[i] for i in rng.integers(0, n_munis, size=n_schools)]
    schools = schools.with_column(Column.from_values("municipality", "text", muni))
    flat = merge_on_key(schools, community, "municipality", many_to_one=True)
    flat = apply_signal(flat, schema, Signal.parse(signal), rng)

    # household survey: per municipality, a majority of rows carry the true profile
    hh_rows = []
    for i, name in enumerate(muni_names):
        truth = {c: community[c].cell(i) for c in SA_COMMUNITY}
        for h in range(households_per_muni):
            row = {"municipality": name}
            for c, spec in SA_COMMUNITY.items():
                if h < households_per_muni // 2 + 1:
                    row[c] = truth[c]
                else:
                    row[c] = spec.levels[int(rng.integers(0, len(spec.levels)))]
            hh_rows.append(row)
    households = Table(
        [Column.from_values("household_id", "integer", list(range(1, len(hh_rows) + 1))),
         Column.from_values("municipality", "text", [r["municipality"] for r in hh_rows])]
        + [Column.from_values(c, "categorical", [r[c] for r in hh_rows], SA_COMMUNITY[c].levels) for c in SA_COMMUNITY],
        n_rows=len(hh_rows),
    )
    performance = flat.select(["emiscode", "pass_rate"])
    masterlist = flat.select(["emiscode", "municipality", "Quintile", "Urban_Rural", "learners", "educators",
                              "school_canteen", "latitude", "longitude"])
    return {"performance": performance, "masterlist": masterlist, "households": households, "flat": flat}


# -- Sierra-Leone-shaped bundle ------------------------------------------------------------

SL_SIGNAL = "0.9*canteen[yes] + 0.8*fence[yes] + 0.7*ownership[private] - 0.5*ownership[government] - 0.6"


def sl_schema() -> SchemaSpec:
    cols = {
        "emis_code": ColumnSpec(role="key", kind="integer", synth={"start": 5001}),
        "pct_papers_passed": ColumnSpec(role="score", kind="numeric"),
        "region": _cat(["eastern", "northern", "southern", "western"]),
        "ownership": _cat(["government", "mission", "private", "community"], [0.4, 0.35, 0.15, 0.1]),
        "canteen": _cat(["yes", "no"], [0.3, 0.7]),
        "fence": _cat(["yes", "no"], [0.4, 0.6]),
        "enrolment": ColumnSpec(kind="integer", synth={"dist": "uniform", "low": 80, "high": 1200}),
        "n_computers": ColumnSpec(kind="integer", synth={"dist": "poisson", "lam": 3}),
        "n_teachers": ColumnSpec(kind="integer"),
        "n_female_teachers": ColumnSpec(kind="integer"),
        "mean_service_years": ColumnSpec(kind="numeric"),
        "student_teacher_ratio": ColumnSpec(kind="numeric"),
        "teacher_id": ColumnSpec(role="ignore", kind="integer"),
        "teacher_sex": ColumnSpec(role="ignore", kind="categorical", levels=("F", "M")),
        "teacher_service_years": ColumnSpec(role="ignore", kind="integer"),
    }
    return SchemaSpec(cols)


def synth_sl_bundle(n_schools: int, seed: int = 0, mean_teachers: float = 8.0, signal: str = SL_SIGNAL) -> dict[str, Table]:
    """SL-style ``schools`` and ``teachers`` files (teachers roll up per school)."""
    schema = sl_schema()
    rng = np.random.default_rng(seed)
    base = [n for n in ("emis_code", "region", "ownership", "canteen", "fence", "enrolment", "n_computers")]
    schools = Table(generate_columns(SchemaSpec({n: schema[n] for n in base}), n_schools, rng), n_rows=n_schools)
    schools = apply_signal(schools, schema, Signal.parse(signal), rng)
    codes = schools["emis_code"].to_list()
    counts = rng.poisson(mean_teachers, size=n_schools)
    t_codes = [c for c, k in zip(codes, counts) for _ in range(k)]
    m = len(t_codes)
    teachers = Table([
        Column.from_values("teacher_id", "integer", list(range(1, m + 1))),
        Column.from_values("emis_code", "integer", t_codes),
        Column.from_values("teacher_sex", "categorical", ["F" if u < 0.35 else "M" for u in rng.random(m)], ("F", "M")),
        Column.from_values("teacher_service_years", "integer", rng.integers(0, 35, size=m).tolist()),
    ], n_rows=m)
    return {"schools": schools.select(["emis_code", "pct_papers_passed", *base[1:]]), "teachers": teachers}


SL_TEACHER_AGGREGATES = (
    Agg("count", "n_teachers"),
    Agg("count_where", "n_female_teachers", column="teacher_sex", level="F"),
    Agg("mean", "mean_service_years", column="teacher_service_years"),
)


def sl_flat(bundle: dict[str, Table]) -> Table:
    schools = bundle["schools"]
    rollup = count_aggregate_by_group(bundle["teachers"], "emis_code", SL_TEACHER_AGGREGATES,
                                      keys=schools["emis_code"].to_list())
    return merge_on_key(schools, rollup, "emis_code")
