"""Two-level factorial screening, sensitivity ranking and parameter grouping."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from mrcalib.synthetic import INITIAL_ONLY, SHARED, CHANNEL, flow_time_order, parse_name


@dataclass(frozen=True)
class FactorialDesign:
    """Coded (+1/-1) design matrix; ``generators`` records how extra factors are aliased."""

    rows: np.ndarray
    generators: tuple[str, ...] = ()

    @property
    def k(self) -> int:
        return self.rows.shape[1]

    @property
    def n_runs(self) -> int:
        return self.rows.shape[0]

    def to_levels(self, lows, highs) -> np.ndarray:
        """Map coded levels to actual low/high values per factor."""
        lows = np.asarray(lows, dtype=float)
        highs = np.asarray(highs, dtype=float)
        return np.where(self.rows > 0, highs, lows)


def _factor_label(j: int) -> str:
    return chr(ord("A") + j) if j < 26 else f"X{j}"


def factorial_design(k: int, max_runs: int) -> FactorialDesign:
    """Full 2^k design if it fits in ``max_runs``, else a regular 2^(k-p) fraction.

    Extra factors take the highest-order interaction columns of the base
    design first.
    """
    if k < 1:
        raise ValueError(f"need at least one factor, got {k}")
    if max_runs < 2 or max_runs & (max_runs - 1):
        raise ValueError(f"max_runs must be a power of two, got {max_runs}")
    if max_runs < k + 1:
        raise ValueError(f"{k} factors cannot be screened in {max_runs} runs (need at least {k + 1})")
    n_base = min(k, max_runs.bit_length() - 1)
    n_runs = 2 ** n_base
    idx = np.arange(n_runs)
    # Standard order: the first factor alternates fastest.
    base = np.stack([np.where((idx >> j) & 1, 1, -1) for j in range(n_base)], axis=1)
    columns = [base[:, j] for j in range(n_base)]
    generators = []
    extra = k - n_base
    if extra:
        subsets = [
            combo
            for order in range(n_base, 1, -1)
            for combo in itertools.combinations(range(n_base), order)
        ]
        for j, combo in zip(range(n_base, k), subsets[:extra]):
            columns.append(np.prod(base[:, list(combo)], axis=1))
            generators.append(f"{_factor_label(j)}={''.join(_factor_label(c) for c in combo)}")
    return FactorialDesign(np.stack(columns, axis=1).astype(int), tuple(generators))


def main_effects(design: FactorialDesign, responses) -> np.ndarray:
    """Contrast estimate of each factor's effect (mean at high minus mean at low)."""
    y = np.asarray(responses, dtype=float)
    if y.shape != (design.n_runs,):
        raise ValueError(f"expected {design.n_runs} responses, got {y.shape}")
    return 2.0 / design.n_runs * design.rows.T.astype(float) @ y


class GroupSource(str, Enum):
    RANKED = "ranked"
    REGION_DU = "region_du"
    REGION_UD = "region_ud"
    REGION_RAND = "region_rand"
    MANUAL = "manual"


@dataclass(frozen=True)
class SensitivityRanking:
    entries: tuple[tuple[str, float], ...]

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self.entries]


@dataclass(frozen=True)
class GroupAssignment:
    groups: Mapping[str, int]
    source: GroupSource = GroupSource.RANKED

    def members(self, group: int) -> list[str]:
        return [n for n, g in self.groups.items() if g == group]


def balanced_partition(n_items: int, g: int) -> list[int]:
    """Group (1-based) of each position when ``n_items`` ordered items are cut into ``g`` contiguous groups."""
    base, extra = divmod(n_items, g)
    sizes = [base + (1 if j < extra else 0) for j in range(g)]
    out = []
    for grp, size in enumerate(sizes, start=1):
        out.extend([grp] * size)
    return out


def rank_and_group(
    effects: Mapping[str, float],
    g: int,
    insensitive_threshold: float = 0.01,
    overrides: Mapping[str, int] | None = None,
    source: GroupSource = GroupSource.RANKED,
) -> tuple[SensitivityRanking, GroupAssignment, set[str]]:
    """Rank parameters by |effect|, fix the insensitive ones, and cut the rest into ``g`` groups.

    Parameters whose |effect| is below ``insensitive_threshold`` times the
    largest |effect| are returned in the fixed set. Ties in |effect| keep the
    input order. ``overrides`` force the group of named parameters.
    """
    if g < 1:
        raise ValueError(f"g must be >= 1, got {g}")
    names = list(effects)
    overrides = dict(overrides or {})
    unknown = set(overrides) - set(names)
    if unknown:
        raise ValueError(f"overrides reference unknown parameters: {sorted(unknown)}")
    bad = {n: grp for n, grp in overrides.items() if not 1 <= grp <= g}
    if bad:
        raise ValueError(f"override groups outside 1..{g}: {bad}")
    magnitude = {n: abs(float(effects[n])) for n in names}
    order = sorted(names, key=lambda n: -magnitude[n])
    ranking = SensitivityRanking(tuple((n, magnitude[n]) for n in order))
    top = max(magnitude.values()) if magnitude else 0.0
    fixed = {n for n in names if n not in overrides and magnitude[n] < insensitive_threshold * top}
    free = [n for n in order if n not in fixed and n not in overrides]
    groups = dict(zip(free, balanced_partition(len(free), g))) if free else {}
    groups.update(overrides)
    return ranking, GroupAssignment({n: groups[n] for n in order if n in groups}, source if overrides else GroupSource.RANKED), fixed


def expand_homogenized_effects(kind_effects: Mapping[str, float], names: Sequence[str]) -> dict[str, float]:
    """Give every per-cell parameter the effect screened for its kind."""
    return {n: float(kind_effects[parse_name(n)[0]]) for n in names}


def region_overrides(regions: Sequence[str], order: str, seed: int = 0) -> dict[str, int]:
    """Six-group placement of the toy watershed's parameters by cell order.

    Cells are ordered by travel time (``"du"``), reversed (``"ud"``), or by a
    seeded random relabelling (``"rand"``). The ordered cells are cut into
    thirds: their ``f``, ``k`` and ``m`` go to groups 1-3. ``C`` and ``w`` of
    the first half go to group 4, the second half to group 5. Recession
    coefficients and channel smoothing form group 6.
    """
    n = len(regions)
    order = order.lower()
    if order == "du":
        cells = flow_time_order(regions)
    elif order == "ud":
        cells = flow_time_order(regions)[::-1]
    elif order == "rand":
        cells = [int(c) for c in np.random.default_rng(seed).permutation(n)]
    else:
        raise ValueError(f"unknown region order {order!r}; use 'du', 'ud' or 'rand'")
    thirds = balanced_partition(n, 3)
    halves = balanced_partition(n, 2)
    out = {}
    for pos, cell in enumerate(cells):
        for kind in ("f", "k", "m"):
            out[f"{kind}_{cell:02d}"] = thirds[pos]
        for kind in ("C", "w"):
            out[f"{kind}_{cell:02d}"] = 3 + halves[pos]
        out[f"a_{cell:02d}"] = 6
    out[CHANNEL] = 6
    return out


@dataclass(frozen=True)
class ScreeningResult:
    design: FactorialDesign
    factors: tuple[str, ...]
    levels: np.ndarray
    responses: np.ndarray
    effects: np.ndarray

    def effect_map(self) -> dict[str, float]:
        return dict(zip(self.factors, (float(e) for e in self.effects)))


def screen(evaluate, factors: Sequence[str], lows, highs, max_runs: int = 128) -> ScreeningResult:
    """Run a factorial screen: ``evaluate(levels_row) -> response`` for every design row."""
    design = factorial_design(len(factors), max_runs)
    levels = design.to_levels(lows, highs)
    responses = np.array([float(evaluate(row)) for row in levels])
    return ScreeningResult(design, tuple(factors), levels, responses, main_effects(design, responses))


SCREEN_FACTORS = SHARED + INITIAL_ONLY + (CHANNEL,)
