import csv
import itertools
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from builders import table_of
from edu_outcomes.errors import AllValuesIdentical, DegenerateTable, InvalidParameter, ZeroWithinVariance
from edu_outcomes.stats import (
    AssociationResult,
    ContingencyTable,
    anova_oneway,
    chi2_sf,
    f_sf,
    frequency_table,
    gk_gamma,
    group_summary,
    histogram,
    kruskal_wallis,
    log_gamma,
    midranks,
    normal_sf,
    tail_probability,
    write_association_csv,
)

# frozen independent oracle values (mpmath at 30 digits)
CHI2_1_AT_2_4 = 0.12133525035848208
F_1_2_AT_8 = 0.10557280900008414
CHI2_1_AT_3_8415 = 0.049998772071222324


def table(counts):
    counts = np.asarray(counts)
    return ContingencyTable(tuple(map(str, range(counts.shape[0]))), tuple(map(str, range(counts.shape[1]))), counts)


def pair_enumeration(counts):
    """Expand the table to observations and compare every pair."""
    obs = [(i, j) for (i, j), c in np.ndenumerate(np.asarray(counts)) for _ in range(int(c))]
    C = D = 0
    for (a, b), (c, d) in itertools.combinations(obs, 2):
        s = (a - c) * (b - d)
        C += s > 0
        D += s < 0
    return C, D


# -- gamma -------------------------------------------------------------------------------------

def test_gamma_example():
    res = gk_gamma(table([[10, 5], [5, 10]]))
    assert pair_enumeration([[10, 5], [5, 10]]) == (100, 25)
    assert res.statistic == pytest.approx(0.6, abs=1e-15)
    assert res.extra["concordant"] == 100 and res.extra["discordant"] == 25
    z = 0.6 * math.sqrt(125 / (30 * (1 - 0.36)))
    assert res.p_value == pytest.approx(2 * float(mpmath.ncdf(-z)), abs=1e-12)


def test_gamma_diagonal_and_reversal():
    assert gk_gamma(table(np.diag([3, 4, 5]))).statistic == 1.0
    rev = gk_gamma(table([[5, 10], [10, 5]]))
    assert rev.statistic == pytest.approx(-0.6, abs=1e-15)
    perfect = gk_gamma(table(np.diag([30, 30])))
    assert 0 <= perfect.p_value < 1e-10


def test_gamma_degenerate():
    with pytest.raises(DegenerateTable):
        gk_gamma(table([[5, 5]]))
    with pytest.raises(DegenerateTable):
        gk_gamma(table([[4, 0], [0, 0]]))


def test_gamma_matches_pair_oracle_on_random_tables():
    rng = np.random.default_rng(0)
    checked = 0
    while checked < 100:
        r, c = rng.integers(2, 7, size=2)
        counts = rng.integers(0, 6, size=(r, c))
        C, D = pair_enumeration(counts)
        if C + D == 0:
            continue
        res = gk_gamma(table(counts))
        assert (res.extra["concordant"], res.extra["discordant"]) == (C, D)
        assert res.statistic == (C - D) / (C + D)
        checked += 1


@settings(max_examples=200)
@given(st.integers(2, 6), st.integers(2, 6), st.integers(0, 2 ** 32 - 1))
def test_gamma_bounds_and_antisymmetry(r, c, seed):
    counts = np.random.default_rng(seed).integers(0, 20, size=(r, c))
    try:
        res = gk_gamma(table(counts))
    except DegenerateTable:
        return
    assert -1 <= res.statistic <= 1
    assert 0 <= res.p_value <= 1
    assert gk_gamma(table(counts[::-1])).statistic == -res.statistic
    assert gk_gamma(table(counts[:, ::-1])).statistic == -res.statistic


def test_gamma_fuzz_thousand_tables():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        counts = rng.integers(0, 50, size=tuple(rng.integers(2, 8, size=2)))
        try:
            g = gk_gamma(table(counts)).statistic
        except DegenerateTable:
            continue
        assert abs(g) <= 1


def test_gamma_independent_sample_near_zero():
    rng = np.random.default_rng(2)
    x = rng.integers(0, 5, 10000).astype(str)
    y = rng.permutation(rng.integers(0, 3, 10000)).astype(str)
    ct = ContingencyTable.from_pairs(x, y, tuple("01234"), tuple("012"))
    assert ct.counts.sum() == 10000
    assert abs(gk_gamma(ct).statistic) < 0.1


# -- Kruskal-Wallis ---------------------------------------------------------------------------------

def test_kruskal_wallis_example():
    res = kruskal_wallis([[1, 2], [3, 4]])
    assert res.statistic == 2.4
    assert res.df == (1,)
    assert res.p_value == pytest.approx(CHI2_1_AT_2_4, abs=1e-12)
    assert res.statistic == pytest.approx(sps.kruskal([1, 2], [3, 4]).statistic, abs=1e-12)


def test_kruskal_wallis_identical_groups():
    res = kruskal_wallis([[1, 2, 3], [1, 2, 3]])
    assert res.statistic == 0.0 and res.p_value == 1.0


def test_kruskal_wallis_rank_invariance():
    assert kruskal_wallis([np.exp([1, 2]), np.exp([3, 4])]).statistic == 2.4


def test_kruskal_wallis_errors():
    with pytest.raises(AllValuesIdentical):
        kruskal_wallis([[5, 5], [5, 5]])
    with pytest.raises(InvalidParameter):
        kruskal_wallis([[1, 2, 3]])
    with pytest.raises(InvalidParameter):
        kruskal_wallis([[1], [2]])


def test_kruskal_wallis_exact_flag():
    res = kruskal_wallis([[1, 2], [3, 4]], exact=True)
    assert res.p_value == pytest.approx(2 / 6)  # {1,2} or {3,4} as first group
    with pytest.raises(InvalidParameter):
        kruskal_wallis([list(range(6)), list(range(6, 12))], exact=True)


def test_midranks_average_ties():
    assert midranks([10, 20, 20, 30]).tolist() == [1.0, 2.5, 2.5, 4.0]


@settings(max_examples=80)
@given(st.lists(st.lists(st.integers(-5, 5), min_size=1, max_size=8), min_size=2, max_size=4),
       st.sampled_from(["cube", "exp", "shift"]))
def test_kruskal_wallis_monotone_transform(groups, how):
    if sum(map(len, groups)) < 3 or len({v for g in groups for v in g}) < 2:
        return
    f = {"cube": lambda v: v ** 3 + 7 * v, "exp": np.exp, "shift": lambda v: 3 * v + 100}[how]
    a = kruskal_wallis(groups)
    b = kruskal_wallis([f(np.asarray(g, dtype=float)) for g in groups])
    assert a.statistic == b.statistic
    ref = sps.kruskal(*groups)
    assert a.statistic == pytest.approx(ref.statistic, rel=1e-10, abs=1e-12)
    assert a.p_value == pytest.approx(ref.pvalue, abs=1e-10)


# -- ANOVA ------------------------------------------------------------------------------------------

def test_anova_example():
    res = anova_oneway([[1, 2], [3, 4]])
    assert res.statistic == 8.0 and res.df == (1, 2)
    assert res.p_value == pytest.approx(F_1_2_AT_8, abs=1e-12)


def test_anova_equal_means():
    res = anova_oneway([[1, 3], [0, 4], [2, 2]])
    assert res.statistic == 0.0 and res.p_value == 1.0


def test_anova_zero_within_variance():
    with pytest.raises(ZeroWithinVariance):
        anova_oneway([[2, 2], [2, 2]])
    res = anova_oneway([[1, 1], [3, 3]])
    assert res.p_value == 0.0 and math.isinf(res.statistic)


@settings(max_examples=80)
@given(st.lists(st.lists(st.floats(-100, 100), min_size=2, max_size=10), min_size=2, max_size=4),
       st.floats(0.1, 50), st.floats(-100, 100), st.booleans())
def test_anova_affine_invariance(groups, a, b, flip):
    groups = [np.asarray(g) for g in groups]
    try:
        base = anova_oneway(groups)
    except ZeroWithinVariance:
        return
    if not math.isfinite(base.statistic) or np.ptp(np.concatenate(groups)) < 1e-3:
        return
    if min(np.ptp(g) for g in groups) < 1e-3:
        return
    a = -a if flip else a
    moved = anova_oneway([a * g + b for g in groups])
    assert moved.statistic == pytest.approx(base.statistic, rel=1e-7, abs=1e-9)
    ref = sps.f_oneway(*groups)
    assert base.statistic == pytest.approx(ref.statistic, rel=1e-8, abs=1e-10)


# -- tail probabilities -------------------------------------------------------------------------------

def test_tail_examples():
    assert tail_probability("normal", 0.0) == 0.5
    assert tail_probability("chi_square", 3.8415, 1) == pytest.approx(0.05, abs=1e-4)
    assert tail_probability("chi_square", 3.8415, 1) == pytest.approx(CHI2_1_AT_3_8415, abs=1e-12)
    assert tail_probability("f", 8.0, 1, 2) == pytest.approx(F_1_2_AT_8, abs=1e-12)


def test_frozen_oracles_from_mpmath():
    mpmath.mp.dps = 30
    assert float(mpmath.gammainc(0.5, 1.2, mpmath.inf, regularized=True)) == pytest.approx(CHI2_1_AT_2_4, abs=1e-16)
    assert float(mpmath.betainc(1, 0.5, 0, 2 / (2 + 8), regularized=True)) == pytest.approx(F_1_2_AT_8, abs=1e-16)


@pytest.mark.parametrize("x", [0.0, 0.3, 1.0, 1.96, 3.5, 6.0, 9.0, -2.5])
def test_normal_tail_vs_scipy(x):
    assert normal_sf(x) == pytest.approx(sps.norm.sf(x), abs=1e-10)


@pytest.mark.parametrize("df", [1, 2, 3, 5, 9, 20, 60])
def test_chi2_tail_vs_scipy(df):
    for x in np.concatenate([[0.0, 1e-6], np.linspace(0.01, 4 * df + 30, 40)]):
        assert chi2_sf(float(x), df) == pytest.approx(sps.chi2.sf(x, df), abs=1e-10)


@pytest.mark.parametrize("df1,df2", [(1, 1), (1, 2), (2, 7), (3, 30), (5, 5), (10, 100), (40, 3)])
def test_f_tail_vs_scipy(df1, df2):
    for x in np.concatenate([[0.0], np.linspace(0.01, 25, 40)]):
        assert f_sf(float(x), df1, df2) == pytest.approx(sps.f.sf(x, df1, df2), abs=1e-10)


def test_log_gamma_vs_stdlib():
    for x in (0.5, 1.0, 2.5, 10.0, 123.4):
        assert log_gamma(x) == pytest.approx(math.lgamma(x), abs=1e-12)


@given(st.floats(0, 60), st.floats(0, 60), st.integers(1, 30), st.integers(1, 30))
def test_tails_nonincreasing(x1, x2, d1, d2):
    lo, hi = sorted((x1, x2))
    assert chi2_sf(hi, d1) <= chi2_sf(lo, d1)
    assert f_sf(hi, d1, d2) <= f_sf(lo, d1, d2)
    assert normal_sf(hi) <= normal_sf(lo)


@given(st.integers(1, 50), st.integers(1, 50))
def test_tails_one_at_zero(d1, d2):
    assert chi2_sf(0.0, d1) == pytest.approx(1.0, abs=1e-12)
    assert f_sf(0.0, d1, d2) == pytest.approx(1.0, abs=1e-12)


def test_tail_invalid_parameters():
    for call in (lambda: chi2_sf(1.0, 0), lambda: f_sf(1.0, 1, 0), lambda: tail_probability("t", 1.0),
                 lambda: tail_probability("chi_square", 1.0), lambda: chi2_sf(-math.inf, 1),
                 lambda: f_sf(math.nan, 1, 1), lambda: normal_sf(math.nan)):
        with pytest.raises(InvalidParameter):
            call()
    assert chi2_sf(math.inf, 1) == 0.0 and f_sf(math.inf, 2, 3) == 0.0


# -- descriptive ----------------------------------------------------------------------------------------

def rows_of(t):
    return [dict(zip(t.names, r)) for r in zip(*(t[c].to_list() for c in t.names))]


def test_group_summary_examples():
    t = table_of(g=("categorical", ["a", "a", "a", "b", "b", "b"], ("a", "b", "empty")),
                 v=("numeric", [1, 2, 3, 1, 2, 100]))
    rows = {r["g"]: r for r in rows_of(group_summary(t, "g", ["v"]))}
    assert (rows["a"]["v_mean"], rows["a"]["v_median"]) == (2.0, 2.0)
    assert rows["b"]["v_mean"] == pytest.approx(103 / 3) and rows["b"]["v_median"] == 2.0
    assert rows["empty"]["n"] == 0 and rows["empty"]["v_mean"] is None and rows["empty"]["v_median"] is None
    assert rows["overall"]["v_median"] == 2.0


def test_group_summary_even_median_and_missing():
    t = table_of(g=("categorical", ["a"] * 5, ("a",)), v=("numeric", [4, None, 1, 3, 2]))
    row = rows_of(group_summary(t, "g", ["v"]))[0]
    assert row["v_median"] == 2.5 and row["v_mean"] == 2.5


def test_frequency_table_examples():
    t = table_of(outcome=("categorical", ["pass", "pass", "pass", "fail"], ("fail", "pass")),
                 water=("categorical", ["yes", "yes", "no", "yes"], ("no", "yes")))
    rows = rows_of(frequency_table(t, "outcome", "water"))
    pct = {(r["outcome"], r["water"]): r["percent"] for r in rows}
    assert round(pct[("pass", "yes")], 1) == 66.7
    assert pct[("fail", "yes")] == 100.0 and pct[("fail", "no")] == 0.0


@settings(max_examples=50)
@given(st.lists(st.tuples(st.sampled_from("ab"), st.sampled_from(["x", "y", "z", None])), min_size=1, max_size=60))
def test_frequency_table_recount(pairs):
    g, v = zip(*pairs)
    t = table_of(g=("categorical", list(g), ("a", "b")), v=("categorical", list(v), ("x", "y", "z")))
    rows = rows_of(frequency_table(t, "g", "v"))
    for r in rows:
        assert r["count"] == sum(1 for p in pairs if p == (r["g"], r["v"]))
    for gl in "ab":
        pcts = [r["percent"] for r in rows if r["g"] == gl]
        if any(p is not None for p in pcts):
            assert sum(pcts) == pytest.approx(100.0)


def test_histogram_counts():
    h = histogram([0.0, 1.0, 2.0, 3.0, None, 4.0], bins=4)
    assert h["count"].to_list() == [1, 1, 1, 2]
    assert h["bin_left"].to_list()[0] == 0.0 and h["bin_right"].to_list()[-1] == 4.0


def test_association_csv(tmp_path):
    res = [
        AssociationResult("gamma", 0.6, 0.01, (), (30,), variable="Quintile"),
        AssociationResult("kruskal_wallis", 2.4, CHI2_1_AT_2_4, (1,), (2, 2), variable="ratio"),
    ]
    write_association_csv(tmp_path / "a.csv", res)
    with open(tmp_path / "a.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["variable", "test", "statistic", "df", "p_value", "significant_at_0.05"]
    assert rows[1][-1] == "true" and rows[2][-1] == "false"
    assert rows[2][3] == "1"
