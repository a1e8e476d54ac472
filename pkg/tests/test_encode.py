from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from builders import dataset, table_of
from edu_outcomes.encode import (
    FAIL_CODE,
    PASS_CODE,
    apply_encoding,
    balance_classes,
    decode_column,
    encode_features,
)
from edu_outcomes.errors import AllMissingColumn, ConfigError, SingleClass
from edu_outcomes.table import FAIL, PASS, ColumnSpec, SchemaSpec

SCHEMA = SchemaSpec({
    "RateWater": ColumnSpec(kind="categorical"),
    "Quintile": ColumnSpec(kind="categorical", ordinal=True),
    "Dwelling": ColumnSpec(kind="categorical", ordinal=True, levels=("informal", "traditional", "formal")),
    "ratio": ColumnSpec(kind="numeric"),
    "name": ColumnSpec(role="ignore", kind="text"),
    "outcome": ColumnSpec(role="ignore", kind="categorical"),
})
OUTCOME_LEVELS = (FAIL, PASS)


def water_table(values, outcome=None):
    outcome = outcome or [FAIL, PASS] * (len(values) // 2) + [PASS] * (len(values) % 2)
    return table_of(RateWater=("categorical", values, ("average", "good", "poor")),
                    outcome=("categorical", outcome, OUTCOME_LEVELS))


def test_reference_is_most_frequent_level():
    ds = encode_features(water_table(["average", "average", "good", "poor"]), SCHEMA)
    assert ds.feature_names == ("RateWater: good", "RateWater: poor")
    assert ds.X.tolist() == [[0, 0], [0, 0], [1, 0], [0, 1]]
    assert ds.encoding[0].reference == "average"


def test_reference_tie_is_lexicographic():
    ds = encode_features(water_table(["poor", "good"]), SCHEMA)
    assert ds.encoding[0].reference == "good"
    assert ds.feature_names == ("RateWater: average", "RateWater: poor")


def test_ordinal_quintile_is_one_feature():
    t = table_of(Quintile=("categorical", ["3", "1", "5"], ("1", "2", "3", "4", "5")),
                 outcome=("categorical", [FAIL, PASS, PASS], OUTCOME_LEVELS))
    ds = encode_features(t, SCHEMA)
    assert ds.feature_names == ("Quintile",)
    assert ds.X[:, 0].tolist() == [3.0, 1.0, 5.0]


def test_ordinal_text_levels_use_positions():
    t = table_of(Dwelling=("categorical", ["formal", "informal"], ("informal", "traditional", "formal")),
                 outcome=("categorical", [FAIL, PASS], OUTCOME_LEVELS))
    assert encode_features(t, SCHEMA).X[:, 0].tolist() == [3.0, 1.0]


def test_linear_mode_imputes_median():
    t = table_of(ratio=("numeric", [1.0, None, 3.0]), outcome=("categorical", [FAIL, PASS, PASS], OUTCOME_LEVELS))
    ds = encode_features(t, SCHEMA, "linear")
    assert ds.X[:, 0].tolist() == [1.0, 2.0, 3.0]
    assert ds.encoding[0].impute == 2.0
    tree = encode_features(t, SCHEMA, "tree")
    assert np.isnan(tree.X[1, 0])


def test_missing_categorical_by_mode():
    t = water_table(["average", None, "good", "average"])
    assert encode_features(t, SCHEMA, "linear").X[1].tolist() == [0.0, 0.0]
    assert np.isnan(encode_features(t, SCHEMA, "tree").X[1]).all()


def test_labels_fail_is_one():
    ds = encode_features(water_table(["good", "poor"], [FAIL, PASS]), SCHEMA)
    assert ds.y.tolist() == [FAIL_CODE, PASS_CODE] == [1, 0]
    assert ds.class_counts() == (1, 1)


def test_single_class_rejected():
    with pytest.raises(SingleClass):
        encode_features(water_table(["good", "poor"], [PASS, PASS]), SCHEMA)


def test_all_missing_column_rejected():
    t = table_of(ratio=("numeric", [None, None]), outcome=("categorical", [FAIL, PASS], OUTCOME_LEVELS))
    with pytest.raises(AllMissingColumn):
        encode_features(t, SCHEMA)


def test_needs_outcome_and_features():
    with pytest.raises(ConfigError):
        encode_features(table_of(ratio=("numeric", [1.0])), SCHEMA)
    t = table_of(name=("text", ["a", "b"]), outcome=("categorical", [FAIL, PASS], OUTCOME_LEVELS))
    with pytest.raises(ConfigError):
        encode_features(t, SCHEMA)


def test_apply_encoding_unseen_level():
    train = encode_features(water_table(["average", "average", "good", "poor"]), SCHEMA, "tree")
    new = table_of(RateWater=("categorical", ["good", "excellent", "average"], ("average", "excellent", "good")))
    X = apply_encoding(new, train, outcome=None).X
    assert X[0].tolist() == [1.0, 0.0]
    assert np.isnan(X[1]).all()
    assert X[2].tolist() == [0.0, 0.0]
    lin = encode_features(water_table(["average", "average", "good", "poor"]), SCHEMA, "linear")
    assert apply_encoding(new, lin, outcome=None).X[1].tolist() == [0.0, 0.0]


cat_cells = st.lists(st.sampled_from(["good", "average", "poor", None]), min_size=2, max_size=40)


@given(cat_cells)
def test_tree_encoding_decodes_exactly(cells):
    if all(c is None for c in cells):
        return
    t = water_table(cells)
    ds = encode_features(t, SCHEMA, "tree")
    assert decode_column(ds, "RateWater") == cells


@given(st.lists(st.sampled_from(["good", "average", "poor"]), min_size=2, max_size=40))
def test_indicators_sum_to_one_off_reference(cells):
    ds = encode_features(water_table(cells), SCHEMA, "tree")
    ref = ds.encoding[0].reference
    sums = ds.X.sum(axis=1)
    assert sums.tolist() == [0.0 if c == ref else 1.0 for c in cells]


def test_balance_hundred_to_fifty():
    y = np.array([PASS_CODE] * 100 + [FAIL_CODE] * 50)
    ds = dataset(np.arange(150.0), y)
    out = balance_classes(ds, 7)
    assert out.class_counts() == (50, 50)
    assert balance_classes(ds, 7).row_ids.tolist() == out.row_ids.tolist()


def test_balance_already_balanced_keeps_rows():
    ds = dataset(np.arange(60.0), [0, 1] * 30)
    out = balance_classes(ds, 3)
    assert sorted(out.X[:, 0].tolist()) == list(range(60))


def test_balance_needs_both_classes():
    with pytest.raises(SingleClass):
        balance_classes(dataset(np.arange(4.0), [0, 0, 0, 0]), 1)


@given(st.lists(st.integers(0, 1), min_size=2, max_size=80), st.integers(0, 2 ** 32))
def test_balance_properties(labels, seed):
    if len(set(labels)) < 2:
        return
    ds = dataset(np.arange(len(labels), dtype=float), labels)
    out = balance_classes(ds, seed)
    n_fail, n_pass = out.class_counts()
    assert n_fail == n_pass == min(Counter(labels).values())
    ids = out.X[:, 0].astype(int)
    assert len(set(ids)) == len(ids)
    assert all(labels[i] == out.y[j] for j, i in enumerate(ids))
