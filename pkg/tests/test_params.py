import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mrcalib.params import (
    Direction, Discrete, Full, ParameterSpace, ParameterSpec, Scale, SearchRange, Shrunk,
    apply_scale, discrete_points, parse_mode, sample_assignment, shrink_range,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)


def unit(name="x", group=1, scale=Scale.LINEAR, lo=0.0, hi=1.0, truth=None):
    return ParameterSpec(name, lo, hi, scale, group, truth)


class TestScale:
    def test_linear_identity(self):
        assert apply_scale(unit(), 0.42, Direction.TO_SEARCH) == 0.42

    def test_log_power_of_ten(self):
        spec = unit(scale=Scale.LOG10, lo=1e-6, hi=1.0)
        assert apply_scale(spec, 1e-5, "to_search") == -5.0
        assert apply_scale(spec, -5.0, "to_model") == pytest.approx(1e-5, rel=1e-15)

    def test_log_rejects_nonpositive(self):
        with pytest.raises(ValueError, match="positive"):
            apply_scale(unit(scale=Scale.LOG10, lo=1e-3, hi=1.0), 0.0, "to_search")

    @given(st.floats(1e-8, 1e8))
    def test_log_round_trip(self, v):
        spec = unit(scale=Scale.LOG10, lo=1e-9, hi=1e9)
        back = apply_scale(spec, apply_scale(spec, v, "to_search"), "to_model")
        assert back == pytest.approx(v, rel=1e-12)

    def test_log_bounds_are_in_search_scale(self):
        spec = unit(scale=Scale.LOG10, lo=0.1, hi=100.0)
        assert spec.bounds.lo == pytest.approx(-1.0)
        assert spec.bounds.hi == pytest.approx(2.0)


class TestDiscretePoints:
    def test_two_points(self):
        assert discrete_points(SearchRange(0, 1), 2) == pytest.approx([1 / 3, 2 / 3], abs=1e-15)

    def test_five_points(self):
        assert discrete_points(SearchRange(0, 1), 5) == pytest.approx([i / 6 for i in range(1, 6)], abs=1e-15)

    def test_degenerate_range(self):
        assert discrete_points(SearchRange(2, 2), 3) == [2, 2, 2]

    @pytest.mark.parametrize("k", [0, 1, 2.5])
    def test_bad_k(self, k):
        with pytest.raises(ValueError):
            discrete_points(SearchRange(0, 1), k)

    @given(finite, st.floats(0, 100), st.integers(2, 12))
    def test_interior_and_increasing(self, lo, width, k):
        pts = discrete_points(SearchRange(lo, lo + width), k)
        assert len(pts) == k
        assert all(lo <= p <= lo + width for p in pts)
        assert all(b >= a for a, b in zip(pts, pts[1:]))


class TestShrinkRange:
    def test_hand_case(self):
        r = shrink_range(unit(), [0.2, 0.4, 0.6], w=2)
        assert r.lo == pytest.approx(0.0, abs=1e-12)
        assert r.hi == pytest.approx(0.8, abs=1e-12)

    def test_single_sample_collapses(self):
        for w in (0.5, 2, 10):
            r = shrink_range(unit(), [0.5], w)
            assert (r.lo, r.hi) == (0.5, 0.5)

    def test_default_w_is_two(self):
        assert shrink_range(unit(), [0.3, 0.5]) == shrink_range(unit(), [0.3, 0.5], 2.0)

    def test_errors(self):
        with pytest.raises(ValueError):
            shrink_range(unit(), [], 2)
        with pytest.raises(ValueError):
            shrink_range(unit(), [0.1, 0.2], 0)

    @given(st.lists(st.floats(0, 1), min_size=1, max_size=30), st.floats(0.1, 5))
    def test_within_original_and_contains_mean(self, samples, w):
        r = shrink_range(unit(), samples, w)
        assert 0.0 <= r.lo <= r.hi <= 1.0
        assert r.lo - 1e-12 <= np.mean(samples) <= r.hi + 1e-12


class TestModes:
    def test_parse(self):
        assert parse_mode("full") == Full()
        assert parse_mode("shrunk") == Shrunk()
        assert parse_mode(5) == Discrete(5)
        with pytest.raises(ValueError):
            parse_mode("medium")

    def test_json_round_trip(self):
        for m in (Full(), Shrunk(), Discrete(3)):
            assert parse_mode(m.to_json()) == m

    def test_full_degenerate(self, rng):
        assert sample_assignment(unit(), SearchRange(0.3, 0.3), Full(), rng) == 0.3

    def test_discrete_membership(self, rng):
        pts = discrete_points(SearchRange(0, 1), 2)
        for _ in range(50):
            assert sample_assignment(unit(), SearchRange(0, 1), Discrete(2), rng) in pts

    def test_full_mean(self):
        rng = np.random.default_rng(2024)
        draws = [sample_assignment(unit(), SearchRange(0, 1), Full(), rng) for _ in range(10_000)]
        assert abs(np.mean(draws) - 0.5) < 0.02


class TestSpace:
    def make(self):
        return ParameterSpace((unit("a", 1, truth=0.5), unit("b", 2, Scale.LOG10, 0.1, 10.0), unit("c", 2)), 2)

    def test_lookup(self):
        s = self.make()
        assert s.names == ["a", "b", "c"]
        assert s["b"].scale is Scale.LOG10 and s[2].name == "c"
        assert s.index("c") == 2
        assert s.group_sizes() == {1: 1, 2: 2}

    def test_truths(self):
        t = self.make().truths()
        assert t[0] == 0.5 and math.isnan(t[1])

    def test_vector_transforms(self):
        s = self.make()
        x = s.to_search([0.5, 10.0, 0.2])
        assert x.tolist() == pytest.approx([0.5, 1.0, 0.2])
        assert s.to_model(x).tolist() == pytest.approx([0.5, 10.0, 0.2])

    def test_group_out_of_range_names_parameter(self):
        with pytest.raises(ValueError, match="c"):
            ParameterSpace((unit("a", 1), unit("c", 7)), 6)

    def test_duplicate_names(self):
        with pytest.raises(ValueError):
            ParameterSpace((unit("a"), unit("a")), 1)

    def test_regroup_and_json(self):
        s = self.make()
        r = s.with_groups({"a": 2, "b": 1, "c": 1}, 2)
        assert r.groups.tolist() == [2, 1, 1]
        assert s.single_group().groups.tolist() == [1, 1, 1]
        assert ParameterSpace.from_json(s.to_json(), 2) == s

    def test_invalid_spec(self):
        with pytest.raises(ValueError):
            unit(lo=1.0, hi=0.0)
        with pytest.raises(ValueError):
            unit(scale=Scale.LOG10, lo=0.0, hi=1.0)
