import numpy as np
import pytest

from edu_outcomes.errors import ConfigError
from edu_outcomes.stats import ContingencyTable, gk_gamma
from edu_outcomes.synth import (
    SA_COMMUNITY,
    Signal,
    SignalTerm,
    sa_schema,
    sl_flat,
    synth_generate,
    synth_sa_bundle,
    synth_sl_bundle,
)
from edu_outcomes.table import FAIL, PASS, ColumnSpec, SchemaSpec, derive_label, mode_aggregate_by_group

QUINTILE_SCHEMA = SchemaSpec({
    "id": ColumnSpec(role="key", kind="integer"),
    "quintile": ColumnSpec(kind="categorical", ordinal=True, levels=("1", "2", "3", "4", "5")),
    "size": ColumnSpec(kind="integer", synth={"dist": "poisson", "lam": 4}),
    "noise": ColumnSpec(kind="numeric", synth={"dist": "normal", "mean": 0, "sd": 1, "missing": 0.2}),
    "score": ColumnSpec(role="score", kind="numeric"),
})


def test_signal_parsing():
    s = Signal.parse("logit = 2·quintile − 6")
    assert s.intercept == -6.0
    assert s.terms == (SignalTerm("quintile", 2.0),)
    s = Signal.parse("0.5*SafetyInDay[very-safe] - 1e-1*x + 3")
    assert s.intercept == 3.0
    assert s.terms == (SignalTerm("SafetyInDay", 0.5, "very-safe"), SignalTerm("x", -0.1))
    with pytest.raises(ConfigError):
        Signal.parse("2*")


def test_empty_table_has_declared_columns():
    t = synth_generate(QUINTILE_SCHEMA, 0, "2*quintile - 6", seed=1)
    assert t.n_rows == 0
    assert t.names == list(QUINTILE_SCHEMA.columns)


def test_same_seed_same_bytes():
    a = synth_generate(QUINTILE_SCHEMA, 300, "2*quintile - 6", seed=11).to_csv()
    b = synth_generate(QUINTILE_SCHEMA, 300, "2*quintile - 6", seed=11).to_csv()
    c = synth_generate(QUINTILE_SCHEMA, 300, "2*quintile - 6", seed=12).to_csv()
    assert a == b and a != c


def test_generated_columns_follow_specs():
    t = synth_generate(QUINTILE_SCHEMA, 2000, "2*quintile - 6", seed=2)
    ids = t["id"].to_list()
    assert ids == list(range(ids[0], ids[0] + 2000))
    assert 0.15 < t["noise"].missing_fraction < 0.25
    assert abs(np.nanmean(t["size"].as_float()) - 4) < 0.3
    s = t["score"].as_float()
    assert s.min() >= 0 and s.max() <= 100


def test_planted_quintile_signal_is_recovered():
    t = synth_generate(QUINTILE_SCHEMA, 5000, "logit = 2·quintile − 6", seed=5)
    labelled, _ = derive_label(t, "score")
    ct = ContingencyTable.from_pairs(labelled["quintile"].to_list(), labelled["outcome"].to_list(),
                                     ("1", "2", "3", "4", "5"), (FAIL, PASS))
    res = gk_gamma(ct)
    assert res.statistic > 0 and res.p_value < 0.05


def test_pass_rate_matches_logistic_signal():
    t = synth_generate(QUINTILE_SCHEMA, 20000, "2*quintile - 6", seed=9)
    q = np.array([float(v) for v in t["quintile"].to_list()])
    passed = t["score"].as_float() >= 50
    for level in (1, 3, 5):
        expected = 1 / (1 + np.exp(-(2 * level - 6)))
        assert abs(passed[q == level].mean() - expected) < 0.03


def test_sa_bundle_household_modes_recover_community():
    b = synth_sa_bundle(400, seed=3)
    modes = mode_aggregate_by_group(b["households"], "municipality", list(SA_COMMUNITY))
    truth = {}
    flat = b["flat"]
    for i, m in enumerate(flat["municipality"].to_list()):
        truth[m] = tuple(flat[c].cell(i) for c in SA_COMMUNITY)
    for i, m in enumerate(modes["municipality"].to_list()):
        if m in truth:
            assert tuple(modes[c].cell(i) for c in SA_COMMUNITY) == truth[m]


def test_sa_bundle_shapes():
    b = synth_sa_bundle(200, seed=0)
    assert b["performance"].names == ["emiscode", "pass_rate"]
    assert b["flat"].n_rows == 200
    schema = sa_schema()
    assert schema.score_column() == "pass_rate"
    assert 0.6 < b["flat"]["school_canteen"].missing_fraction < 0.8


def test_sl_rollup():
    b = synth_sl_bundle(150, seed=4)
    flat = sl_flat(b)
    assert flat.n_rows == 150
    t = b["teachers"]
    codes = t["emis_code"].to_list()
    sexes = t["teacher_sex"].to_list()
    for i, code in enumerate(flat["emis_code"].to_list()[:20]):
        assert flat["n_teachers"].cell(i) == codes.count(code)
        assert flat["n_female_teachers"].cell(i) == sum(c == code and s == "F" for c, s in zip(codes, sexes))
