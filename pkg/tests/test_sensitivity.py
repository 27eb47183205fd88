import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mrcalib.sensitivity import (
    GroupSource, balanced_partition, expand_homogenized_effects, factorial_design, main_effects,
    rank_and_group, region_overrides, screen,
)
from mrcalib.synthetic import cell_regions, parameter_names


def full_factorial_oracle(k):
    """All 2^k sign combinations in standard order (first factor alternates fastest)."""
    return np.array([combo[::-1] for combo in itertools.product((-1, 1), repeat=k)])


@pytest.mark.parametrize("k", range(1, 8))
def test_full_design_matches_oracle(k):
    d = factorial_design(k, 2 ** k)
    assert d.generators == ()
    assert np.array_equal(d.rows, full_factorial_oracle(k))


def test_seven_factors_in_128_runs():
    assert factorial_design(7, 128).n_runs == 128
    assert factorial_design(3, 8).n_runs == 8


def test_fraction_balanced_and_distinct():
    d = factorial_design(5, 8)
    assert d.rows.shape == (8, 5)
    assert (d.rows.sum(axis=0) == 0).all()
    cols = {tuple(c) for c in d.rows.T}
    assert len(cols) == 5
    assert d.generators == ("D=ABC", "E=AB")


def test_fraction_columns_orthogonal():
    d = factorial_design(7, 16)
    gram = d.rows.T @ d.rows
    assert np.array_equal(gram, 16 * np.eye(7, dtype=int))


@pytest.mark.parametrize("k,runs", [(0, 8), (3, 6), (8, 8)])
def test_design_errors(k, runs):
    with pytest.raises(ValueError):
        factorial_design(k, runs)


def test_constant_response():
    d = factorial_design(4, 16)
    assert np.array_equal(main_effects(d, np.full(16, 3.7)), np.zeros(4))


def test_hand_contrasts():
    d = factorial_design(3, 8)
    x = d.rows
    assert main_effects(d, 3 * x[:, 0]).tolist() == [6, 0, 0]
    assert main_effects(d, x[:, 0] + 2 * x[:, 1]).tolist() == [2, 4, 0]


@given(st.integers(3, 7), st.data())
def test_linear_recovery(k, data):
    coef = np.array(data.draw(st.lists(st.integers(-20, 20), min_size=k, max_size=k)), dtype=float) / 4
    const = data.draw(st.integers(-10, 10))
    d = factorial_design(k, 2 ** k)
    effects = main_effects(d, const + d.rows @ coef)
    assert np.max(np.abs(effects - 2 * coef)) < 1e-12


def test_response_length_checked():
    with pytest.raises(ValueError):
        main_effects(factorial_design(3, 8), np.zeros(7))


def test_screen_uses_levels():
    seen = []
    result = screen(lambda row: seen.append(row.copy()) or row[0] - row[1], ["a", "b"], [0, 10], [1, 20], 4)
    assert {tuple(r) for r in seen} == {(0, 10), (1, 10), (0, 20), (1, 20)}
    assert result.effect_map() == {"a": 1.0, "b": -10.0}


class TestGrouping:
    def test_balanced_partition(self):
        assert balanced_partition(7, 3) == [1, 1, 1, 2, 2, 3, 3]

    @given(st.integers(0, 200), st.integers(1, 10))
    def test_partition_sizes_differ_by_one(self, n, g):
        sizes = np.bincount(balanced_partition(n, g), minlength=g + 1)[1:]
        assert sizes.sum() == n and sizes.max() - sizes.min() <= 1

    def test_twelve_into_six(self):
        effects = {f"p{i}": 12 - i for i in range(12)}
        ranking, assignment, fixed = rank_and_group(effects, 6)
        assert fixed == set()
        assert [assignment.groups[f"p{i}"] for i in range(12)] == [1, 1, 2, 2, 3, 3, 4, 4, 5, 5, 6, 6]
        assert ranking.names[0] == "p0"

    def test_threshold_fixes(self):
        _, assignment, fixed = rank_and_group({"a": 10, "b": 9, "c": 0.001}, 2, 0.01)
        assert fixed == {"c"} and "c" not in assignment.groups

    def test_overrides_win(self):
        _, assignment, _ = rank_and_group({"a": 10, "b": 9, "c": 8}, 2, overrides={"c": 1}, source=GroupSource.MANUAL)
        assert assignment.groups == {"a": 1, "b": 2, "c": 1}
        assert assignment.source is GroupSource.MANUAL

    def test_bad_overrides(self):
        with pytest.raises(ValueError):
            rank_and_group({"a": 1.0}, 2, overrides={"a": 3})
        with pytest.raises(ValueError):
            rank_and_group({"a": 1.0}, 2, overrides={"zz": 1})

    @given(st.dictionaries(st.text("abc", min_size=1, max_size=4), st.floats(-5, 5), min_size=1, max_size=30),
           st.integers(1, 6))
    def test_every_parameter_fixed_or_in_one_group(self, effects, g):
        _, assignment, fixed = rank_and_group(effects, g)
        assert set(assignment.groups) | fixed == set(effects)
        assert not set(assignment.groups) & fixed


class TestRegionOverrides:
    regions = cell_regions(20)

    def test_du_places_downstream_soil_first(self):
        groups = region_overrides(self.regions, "du")
        down = [i for i, r in enumerate(self.regions) if r == "Down"]
        for i in down:
            assert all(groups[f"{kind}_{i:02d}"] == 1 for kind in ("f", "k", "m"))
            assert groups[f"C_{i:02d}"] == groups[f"w_{i:02d}"] == 4
        assert groups["n_ch"] == 6

    def test_ud_reverses(self):
        groups = region_overrides(self.regions, "ud")
        up = [i for i, r in enumerate(self.regions) if r == "Up"]
        assert all(groups[f"f_{i:02d}"] == 1 for i in up)

    def test_covers_all_parameters(self):
        for order in ("du", "ud", "rand"):
            assert set(region_overrides(self.regions, order, 3)) == set(parameter_names(20))

    def test_rand_seeded(self):
        assert region_overrides(self.regions, "rand", 3) == region_overrides(self.regions, "rand", 3)
        assert region_overrides(self.regions, "rand", 3) != region_overrides(self.regions, "rand", 4)

    def test_unknown_order(self):
        with pytest.raises(ValueError):
            region_overrides(self.regions, "sideways")


def test_expand_homogenized_effects():
    eff = expand_homogenized_effects({"C": 1, "f": 2, "w": 3, "k": 4, "m": 5, "a": 6, "n_ch": 7}, parameter_names(3))
    assert eff["k_02"] == 4 and eff["n_ch"] == 7 and len(eff) == 19
