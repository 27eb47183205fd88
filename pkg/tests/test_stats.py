import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mrcalib.params import SearchRange
from mrcalib.stats import (
    BoxplotStats, anova_one_way, assess_archive, f_sf, hb_flag, nc_flag, pooled_t_statistic, rosare, t_test_one_sample,
    t_two_sided, tukey_boxplot, welch_t_test,
)

UNIT = SearchRange(0.0, 1.0)

# Reference values from scipy.stats (f_oneway, ttest_1samp, ttest_ind with equal_var=False),
# computed once and frozen here.
ORACLE_ANOVA = [
    ([[1, 2, 3, 4], [5, 6, 7, 8]], 19.2, 0.004659214943993935),
    ([[1.2, 3.4, 2.2, 5.1], [2.0, 2.9, 4.4], [6.1, 5.5, 7.2, 6.8, 5.9]], 10.580432737535276, 0.004331059941164058),
]
ORACLE_T1 = [
    ([0.52, 0.55, 0.58, 0.54, 0.55], 0.5, 4.950821982042218, 0.00775665828373952),
    ([0.4, 0.7, 0.61, 0.55, 0.48, 0.66], 0.5, 1.4441280189584202, 0.20830916297162672),
]
ORACLE_WELCH = ([1.0, 2.5, 3.1, 4.7], [2.2, 5.5, 6.1, 7.9, 8.0], -2.388937854014548, 0.04925222413204533,
                6.803366170635543)


def box(lo, hi, median=None):
    median = 0.5 * (lo + hi) if median is None else median
    return BoxplotStats(lo, median, hi, hi - lo, lo, hi)


def boxplot_oracle(values):
    """Sort, interpolate quartiles by hand, then apply the 1.5 IQR fences."""
    x = sorted(values)
    n = len(x)

    def q(p):
        h = p * (n - 1)
        i = int(h)
        return x[i] if i + 1 >= n else x[i] + (h - i) * (x[i + 1] - x[i])

    q1, med, q3 = q(0.25), q(0.5), q(0.75)
    iqr = q3 - q1
    inside = [v for v in x if q1 - 1.5 * iqr <= v <= q3 + 1.5 * iqr]
    return q1, med, q3, iqr, inside[0], inside[-1]


class TestBoxplot:
    def test_hand_case(self):
        b = tukey_boxplot([5, 1, 4, 2, 3])
        assert (b.q1, b.median, b.q3, b.iqr, b.lower_whisker, b.upper_whisker) == (2, 3, 4, 2, 1, 5)

    def test_constant(self):
        b = tukey_boxplot([0.7] * 6)
        assert b.iqr == 0 and b.lower_whisker == b.upper_whisker == b.median == 0.7

    def test_outlier_excluded(self):
        b = tukey_boxplot([1, 2, 3, 4, 100])
        # upper fence 4 + 1.5 * 2 = 7
        assert b.upper_whisker == 4

    def test_too_few(self):
        with pytest.raises(ValueError):
            tukey_boxplot([1, 2, 3])

    def test_matches_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            n = int(rng.integers(4, 60))
            values = rng.standard_t(3, size=n) * rng.uniform(0.1, 10)
            b = tukey_boxplot(values)
            got = (b.q1, b.median, b.q3, b.iqr, b.lower_whisker, b.upper_whisker)
            assert np.allclose(got, boxplot_oracle(values.tolist()), rtol=0, atol=1e-12)

    def test_matches_numpy_linear_percentile(self, rng):
        values = rng.random(37)
        b = tukey_boxplot(values)
        assert np.allclose([b.q1, b.median, b.q3], np.percentile(values, [25, 50, 75]), atol=1e-12)


class TestFlags:
    def test_nc(self):
        assert nc_flag(box(0.4, 0.55), UNIT)
        assert not nc_flag(box(0.4, 0.45), UNIT)
        assert not nc_flag(box(0.5, 0.5), UNIT)

    def test_hb(self):
        assert hb_flag(box(0.99, 0.999, median=0.995), UNIT)
        assert not hb_flag(box(0.3, 0.7, median=0.5), UNIT)
        assert hb_flag(box(0.0, 0.3, median=0.2), UNIT)

    @given(st.floats(0.01, 0.99), st.floats(0.0, 0.5), st.floats(-100, 100), st.floats(0.1, 50))
    def test_affine_invariance(self, centre, half, shift, scale):
        b = box(max(0.0, centre - half), min(1.0, centre + half), centre)
        t = BoxplotStats(*(v * scale + shift if i != 3 else v * scale for i, v in
                           enumerate((b.q1, b.median, b.q3, b.iqr, b.lower_whisker, b.upper_whisker))))
        orig = SearchRange(shift, scale + shift)
        # skip instances sitting exactly on a threshold, where rounding decides
        if abs(b.whisker_width - 0.1) < 1e-9 or abs(min(b.median, 1 - b.median) - 0.01) < 1e-9:
            return
        assert nc_flag(b, UNIT) == nc_flag(t, orig)
        assert hb_flag(b, UNIT) == hb_flag(t, orig)


class TestRosARE:
    def test_all_ties(self):
        b = [box(0.4, 0.45)] * 3
        assert rosare(b, b, [UNIT] * 3, [0.4, 0.5, 0.6], [0.4, 0.5, 0.6], [0.5, 0.5, 0.5]) == 0.0

    def test_two_of_three(self):
        b = [box(0.4, 0.45)] * 4
        wide = box(0.0, 1.0)
        value = rosare(b[:3] + [wide], b, [UNIT] * 4, [0.5, 0.5, 0.9, 0.5], [0.6, 0.7, 0.5, 0.0], [0.5] * 4)
        assert value == pytest.approx(2 / 3)

    def test_empty_eligible(self):
        wide = [box(0.0, 1.0)]
        with pytest.raises(ValueError):
            rosare(wide, wide, [UNIT], [0.5], [0.5], [0.5])

    def test_misaligned(self):
        with pytest.raises(ValueError):
            rosare([box(0, 0.01)], [], [UNIT], [0.5], [0.5], [0.5])

    def test_swap_bound(self, rng):
        for _ in range(100):
            n = 8
            b = [box(0.4, 0.45)] * n
            new, trad, truth = rng.random(n).round(1), rng.random(n).round(1), rng.random(n) + 0.1
            r = rosare(b, b, [UNIT] * n, new, trad, truth)
            r_swapped = rosare(b, b, [UNIT] * n, trad, new, truth)
            assert 0 <= r <= 1 and r + r_swapped <= 1 + 1e-12


class TestAnova:
    @pytest.mark.parametrize("groups,F,p", ORACLE_ANOVA)
    def test_oracle(self, groups, F, p):
        res = anova_one_way(groups)
        assert res.statistic == pytest.approx(F, rel=1e-9)
        assert res.p_value == pytest.approx(p, rel=1e-4)

    def test_identical_groups(self):
        assert (anova_one_way([[1, 2, 3], [1, 2, 3]]).statistic, anova_one_way([[1, 2, 3], [1, 2, 3]]).p_value) == (0.0, 1.0)

    def test_all_constant(self):
        res = anova_one_way([[2, 2], [2, 2], [2, 2]])
        assert (res.statistic, res.p_value) == (0.0, 1.0)

    def test_degenerate_inputs(self):
        with pytest.raises(ValueError):
            anova_one_way([[1, 2, 3]])
        with pytest.raises(ValueError):
            anova_one_way([[1], [2, 3]])

    def test_two_groups_is_t_squared(self, rng):
        for _ in range(50):
            a, b = rng.normal(size=int(rng.integers(2, 12))), rng.normal(1, 2, size=int(rng.integers(2, 12)))
            assert anova_one_way([a, b]).statistic == pytest.approx(pooled_t_statistic(a, b) ** 2, rel=1e-9)


class TestTTests:
    @pytest.mark.parametrize("values,mu0,t,p", ORACLE_T1)
    def test_one_sample_oracle(self, values, mu0, t, p):
        res = t_test_one_sample(values, mu0)
        assert res.statistic == pytest.approx(t, rel=1e-9)
        assert res.p_value == pytest.approx(p, rel=1e-4)

    def test_mean_at_mu0(self):
        res = t_test_one_sample([0.4, 0.6, 0.5], 0.5)
        assert res.statistic == pytest.approx(0.0, abs=1e-15) and res.p_value == pytest.approx(1.0)

    def test_zero_variance(self):
        with pytest.raises(ValueError):
            t_test_one_sample([0.5, 0.5, 0.5], 0.4)

    def test_welch_oracle(self):
        a, b, t, p, df = ORACLE_WELCH
        res = welch_t_test(a, b)
        assert res.statistic == pytest.approx(t, rel=1e-9)
        assert res.p_value == pytest.approx(p, rel=1e-4)
        assert res.df[0] == pytest.approx(df, rel=1e-9)


@given(st.floats(0, 50), st.floats(0, 50), st.integers(1, 40))
def test_t_p_monotone(t1, t2, df):
    lo, hi = sorted((t1, t2))
    p_lo, p_hi = t_two_sided(lo, df), t_two_sided(hi, df)
    assert 0 <= p_hi <= p_lo <= 1


@given(st.floats(0, 100), st.floats(0, 100), st.integers(1, 10), st.integers(1, 60))
def test_f_p_monotone(f1, f2, dfn, dfd):
    lo, hi = sorted((f1, f2))
    assert 0 <= f_sf(hi, dfn, dfd) <= f_sf(lo, dfn, dfd) <= 1


def test_infinite_statistics():
    assert f_sf(math.inf, 1, 5) == 0.0 and t_two_sided(math.inf, 3) == 0.0


def test_assess_archive():
    rng = np.random.default_rng(0)
    archive = np.column_stack([0.5 + 0.001 * rng.standard_normal(20), rng.random(20)])
    verdicts = assess_archive(archive, [UNIT, UNIT])
    assert verdicts[0].converged and not verdicts[1].converged
