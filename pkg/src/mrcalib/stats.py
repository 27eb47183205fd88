"""Convergence metrics over a trial's best solutions, and the significance tests used to compare schemes."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special

from mrcalib.params import SearchRange


@dataclass(frozen=True)
class BoxplotStats:
    q1: float
    median: float
    q3: float
    iqr: float
    lower_whisker: float
    upper_whisker: float

    @property
    def whisker_width(self) -> float:
        return self.upper_whisker - self.lower_whisker


def quantile(sorted_values: np.ndarray, p: float) -> float:
    """Linear interpolation at zero-based position ``p * (n - 1)``."""
    pos = p * (len(sorted_values) - 1)
    lo = math.floor(pos)
    hi = min(lo + 1, len(sorted_values) - 1)
    frac = pos - lo
    return float(sorted_values[lo] + (sorted_values[hi] - sorted_values[lo]) * frac)


def tukey_boxplot(values: Sequence[float]) -> BoxplotStats:
    x = np.sort(np.asarray(values, dtype=float))
    if x.size < 4:
        raise ValueError(f"a boxplot needs at least 4 values, got {x.size}")
    q1, med, q3 = (quantile(x, p) for p in (0.25, 0.5, 0.75))
    iqr = q3 - q1
    inside = x[(x >= q1 - 1.5 * iqr) & (x <= q3 + 1.5 * iqr)]
    return BoxplotStats(q1, med, q3, iqr, float(inside[0]), float(inside[-1]))


def nc_flag(box: BoxplotStats, original: SearchRange) -> bool:
    """Not converged: whiskers span more than 10% of the original range."""
    return box.whisker_width > 0.10 * (original.hi - original.lo)


def hb_flag(box: BoxplotStats, original: SearchRange) -> bool:
    """Hits the boundary: median within 1% of a bound, or a whisker touching one."""
    width = original.hi - original.lo
    near = min(abs(box.median - original.lo), abs(box.median - original.hi)) < 0.01 * width
    return near or box.lower_whisker <= original.lo or box.upper_whisker >= original.hi


def absolute_relative_error(estimate: float, truth: float) -> float:
    if truth == 0:
        return abs(estimate)
    return abs(estimate - truth) / abs(truth)


def rosare(new_boxes, trad_boxes, originals, new_estimates, trad_estimates, truths) -> float:
    """Share of parameters converged in both schemes where the new scheme's estimate is strictly closer to truth."""
    n = len(truths)
    if not all(len(seq) == n for seq in (new_boxes, trad_boxes, originals, new_estimates, trad_estimates)):
        raise ValueError("rosare inputs must be aligned on the same parameters")
    eligible = wins = 0
    for nb, tb, orig, ne, te, t in zip(new_boxes, trad_boxes, originals, new_estimates, trad_estimates, truths):
        if nc_flag(nb, orig) or nc_flag(tb, orig):
            continue
        eligible += 1
        if absolute_relative_error(ne, t) < absolute_relative_error(te, t):
            wins += 1
    if eligible == 0:
        raise ValueError("no parameter converged in both schemes; RosARE is undefined")
    return wins / eligible


def f_sf(F: float, dfn: float, dfd: float) -> float:
    """Upper tail of the F distribution."""
    if F <= 0:
        return 1.0
    if math.isinf(F):
        return 0.0
    return float(special.betainc(dfd / 2.0, dfn / 2.0, dfd / (dfd + dfn * F)))


def t_two_sided(t: float, df: float) -> float:
    if math.isinf(t):
        return 0.0
    return float(special.betainc(df / 2.0, 0.5, df / (df + t * t)))


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    df: tuple[float, ...]


def anova_one_way(groups: Sequence[Sequence[float]]) -> TestResult:
    """One-way ANOVA F test. All-zero variation (between and within) gives F=0, p=1."""
    samples = [np.asarray(g, dtype=float) for g in groups]
    if len(samples) < 2 or any(s.size < 2 for s in samples):
        raise ValueError("ANOVA needs at least two groups of at least two samples")
    n = sum(s.size for s in samples)
    k = len(samples)
    grand = np.concatenate(samples).mean()
    ss_between = sum(s.size * (s.mean() - grand) ** 2 for s in samples)
    ss_within = sum(((s - s.mean()) ** 2).sum() for s in samples)
    dfn, dfd = k - 1, n - k
    ms_between, ms_within = ss_between / dfn, ss_within / dfd
    if ms_between == 0:
        return TestResult(0.0, 1.0, (dfn, dfd))
    if ms_within == 0:
        return TestResult(math.inf, 0.0, (dfn, dfd))
    F = float(ms_between / ms_within)
    return TestResult(F, f_sf(F, dfn, dfd), (dfn, dfd))


def t_test_one_sample(values: Sequence[float], mu0: float) -> TestResult:
    x = np.asarray(values, dtype=float)
    if x.size < 2:
        raise ValueError("a t-test needs at least two values")
    sd = x.std(ddof=1)
    if sd == 0:
        raise ValueError("t-test is undefined for zero sample variance")
    t = float((x.mean() - mu0) / (sd / math.sqrt(x.size)))
    return TestResult(t, t_two_sided(t, x.size - 1), (x.size - 1,))


def welch_t_test(a: Sequence[float], b: Sequence[float]) -> TestResult:
    """Two-sample t-test without assuming equal variances."""
    x, y = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if x.size < 2 or y.size < 2:
        raise ValueError("Welch's test needs at least two values per sample")
    vx, vy = x.var(ddof=1) / x.size, y.var(ddof=1) / y.size
    diff = x.mean() - y.mean()
    if vx + vy == 0:
        return TestResult(0.0 if diff == 0 else math.copysign(math.inf, diff), 1.0 if diff == 0 else 0.0, (math.nan,))
    t = float(diff / math.sqrt(vx + vy))
    df = (vx + vy) ** 2 / (vx ** 2 / (x.size - 1) + vy ** 2 / (y.size - 1))
    return TestResult(t, t_two_sided(t, df), (float(df),))


def pooled_t_statistic(a: Sequence[float], b: Sequence[float]) -> float:
    x, y = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    sp2 = (((x - x.mean()) ** 2).sum() + ((y - y.mean()) ** 2).sum()) / (x.size + y.size - 2)
    return float((x.mean() - y.mean()) / math.sqrt(sp2 * (1 / x.size + 1 / y.size)))


@dataclass(frozen=True)
class ParameterVerdict:
    box: BoxplotStats
    converged: bool
    hit_boundary: bool


def assess_archive(assignments: np.ndarray, originals: Sequence[SearchRange]) -> list[ParameterVerdict]:
    """Boxplot, NC and HB of every parameter over a set of archived assignments (search scale)."""
    out = []
    for j, orig in enumerate(originals):
        box = tukey_boxplot(assignments[:, j])
        out.append(ParameterVerdict(box, not nc_flag(box, orig), hb_flag(box, orig)))
    return out
