"""Calibratable parameters, search scales, and search-range arithmetic.

All range arithmetic happens in *search scale*: identity for linear
parameters, ``log10`` for parameters whose plausible values span several
orders of magnitude. Model code only ever sees model units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Mapping, Sequence, Union

import numpy as np


class Scale(str, Enum):
    LINEAR = "linear"
    LOG10 = "log10"


class Direction(str, Enum):
    TO_SEARCH = "to_search"
    TO_MODEL = "to_model"


@dataclass(frozen=True)
class Full:
    """Continuous search over the parameter's original range."""

    def to_json(self):
        return "full"


@dataclass(frozen=True)
class Shrunk:
    """Continuous search over a range narrowed from the evolved population."""

    def to_json(self):
        return "shrunk"


@dataclass(frozen=True)
class Discrete:
    """Coarse search among ``k`` interior points of the original range."""

    k: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 2:
            raise ValueError(f"Discrete mode needs an integer k >= 2, got {self.k!r}")

    def to_json(self):
        return int(self.k)


ResolutionMode = Union[Full, Shrunk, Discrete]


def parse_mode(value) -> ResolutionMode:
    """Parse ``"full"``, ``"shrunk"`` or an integer point count."""
    if isinstance(value, (Full, Shrunk, Discrete)):
        return value
    if isinstance(value, str):
        key = value.strip().lower()
        if key == "full":
            return Full()
        if key == "shrunk":
            return Shrunk()
        if key.isdigit():
            return Discrete(int(key))
        raise ValueError(f"unknown resolution mode {value!r}")
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return Discrete(int(value))
    raise ValueError(f"unknown resolution mode {value!r}")


@dataclass(frozen=True)
class SearchRange:
    lo: float
    hi: float

    def __post_init__(self):
        if not (self.lo <= self.hi):
            raise ValueError(f"invalid search range [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, other: "SearchRange", tol: float = 0.0) -> bool:
        return self.lo - tol <= other.lo and other.hi <= self.hi + tol


@dataclass(frozen=True)
class ParameterSpec:
    """One calibratable parameter.

    ``low``/``high``/``truth`` are in model units; ``bounds`` gives the
    original range in search scale.
    """

    name: str
    low: float
    high: float
    scale: Scale = Scale.LINEAR
    group: int = 1
    truth: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "scale", Scale(self.scale))
        if not self.low < self.high:
            raise ValueError(f"{self.name}: low ({self.low}) must be < high ({self.high})")
        if self.scale is Scale.LOG10 and self.low <= 0:
            raise ValueError(f"{self.name}: log10 scale requires a positive lower bound")
        if int(self.group) != self.group or self.group < 1:
            raise ValueError(f"{self.name}: group must be a positive integer, got {self.group!r}")

    @property
    def bounds(self) -> SearchRange:
        return SearchRange(
            apply_scale(self, self.low, Direction.TO_SEARCH),
            apply_scale(self, self.high, Direction.TO_SEARCH),
        )

    def to_json(self) -> dict:
        out = {
            "name": self.name,
            "low": self.low,
            "high": self.high,
            "scale": self.scale.value,
            "group": int(self.group),
        }
        if self.truth is not None:
            out["truth"] = self.truth
        return out

    @classmethod
    def from_json(cls, data: Mapping) -> "ParameterSpec":
        unknown = set(data) - {"name", "low", "high", "scale", "group", "truth"}
        if unknown:
            raise ValueError(f"parameter {data.get('name')!r}: unknown fields {sorted(unknown)}")
        return cls(
            name=str(data["name"]),
            low=float(data["low"]),
            high=float(data["high"]),
            scale=Scale(data.get("scale", "linear")),
            group=int(data.get("group", 1)),
            truth=None if data.get("truth") is None else float(data["truth"]),
        )


def apply_scale(spec: ParameterSpec, value: float, direction: Direction | str) -> float:
    direction = Direction(direction)
    if spec.scale is Scale.LINEAR:
        return float(value)
    if direction is Direction.TO_SEARCH:
        if not value > 0:
            raise ValueError(f"{spec.name}: log10 scale needs a positive value, got {value}")
        return math.log10(value)
    return 10.0 ** value


def discrete_points(rng: SearchRange, k: int) -> list[float]:
    """``k`` evenly spaced interior points ``lo + width * i / (k + 1)``."""
    if int(k) != k or k < 2:
        raise ValueError(f"need k >= 2 discrete points, got {k!r}")
    return [rng.lo + (rng.hi - rng.lo) * i / (k + 1) for i in range(1, k + 1)]


def shrink_range(spec: ParameterSpec, samples: Sequence[float], w: float = 2.0) -> SearchRange:
    """Range ``mean +/- w * std`` of ``samples``, clipped to the original bounds.

    ``samples`` are in search scale. The standard deviation uses the n-1
    denominator and is zero for a single sample.
    """
    values = np.asarray(samples, dtype=float)
    if values.size == 0:
        raise ValueError(f"{spec.name}: cannot shrink a range from zero samples")
    if not w > 0:
        raise ValueError(f"shrink multiplier must be positive, got {w}")
    mu = float(values.mean())
    sigma = float(values.std(ddof=1)) if values.size > 1 else 0.0
    full = spec.bounds
    lo = max(full.lo, mu - w * sigma)
    hi = min(full.hi, mu + w * sigma)
    # The mean of in-range samples is in range, so this only guards rounding.
    lo = min(lo, full.hi)
    hi = max(hi, full.lo)
    if lo > hi:
        lo = hi = min(max(mu, full.lo), full.hi)
    return SearchRange(lo, hi)


def sample_assignment(
    spec: ParameterSpec,
    rng_range: SearchRange,
    mode: ResolutionMode,
    rng: np.random.Generator,
) -> float:
    if isinstance(mode, Discrete):
        points = discrete_points(rng_range, mode.k)
        return points[int(rng.integers(len(points)))]
    if rng_range.hi == rng_range.lo:
        return rng_range.lo
    return float(rng.uniform(rng_range.lo, rng_range.hi))


@dataclass(frozen=True)
class ParameterSpace:
    """Ordered collection of parameters; vectors index parameters in this order."""

    specs: tuple[ParameterSpec, ...]
    n_groups: int = 0
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        specs = tuple(self.specs)
        object.__setattr__(self, "specs", specs)
        if not specs:
            raise ValueError("a parameter space needs at least one parameter")
        index = {}
        for i, s in enumerate(specs):
            if s.name in index:
                raise ValueError(f"duplicate parameter name {s.name!r}")
            index[s.name] = i
        object.__setattr__(self, "_index", index)
        g = self.n_groups or max(s.group for s in specs)
        object.__setattr__(self, "n_groups", int(g))
        for s in specs:
            if s.group > g:
                raise ValueError(f"parameter {s.name!r} has group {s.group} but the space has {g} groups")

    def __len__(self) -> int:
        return len(self.specs)

    def __iter__(self):
        return iter(self.specs)

    def __getitem__(self, key):
        if isinstance(key, str):
            return self.specs[self._index[key]]
        return self.specs[key]

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.specs]

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"unknown parameter {name!r}") from None

    @property
    def groups(self) -> np.ndarray:
        return np.array([s.group for s in self.specs], dtype=int)

    def group_sizes(self) -> dict[int, int]:
        sizes = {g: 0 for g in range(1, self.n_groups + 1)}
        for s in self.specs:
            sizes[s.group] += 1
        return sizes

    def bounds(self) -> list[SearchRange]:
        return [s.bounds for s in self.specs]

    def truths(self) -> np.ndarray:
        """Truth values in model units, NaN where unknown."""
        return np.array([np.nan if s.truth is None else s.truth for s in self.specs])

    def to_search(self, values: Iterable[float]) -> np.ndarray:
        return np.array([apply_scale(s, v, Direction.TO_SEARCH) for s, v in zip(self.specs, values)])

    def to_model(self, values: Iterable[float]) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        out = values.copy()
        log_mask = np.array([s.scale is Scale.LOG10 for s in self.specs])
        out[log_mask] = 10.0 ** values[log_mask]
        return out

    def with_groups(self, groups: Mapping[str, int], n_groups: int | None = None) -> "ParameterSpace":
        unknown = set(groups) - set(self._index)
        if unknown:
            raise ValueError(f"group map names unknown parameters: {sorted(unknown)}")
        specs = [replace(s, group=int(groups.get(s.name, s.group))) for s in self.specs]
        return ParameterSpace(tuple(specs), n_groups or 0)

    def single_group(self) -> "ParameterSpace":
        return ParameterSpace(tuple(replace(s, group=1) for s in self.specs), 1)

    def to_json(self) -> list[dict]:
        return [s.to_json() for s in self.specs]

    @classmethod
    def from_json(cls, items: Sequence[Mapping], n_groups: int = 0) -> "ParameterSpace":
        return cls(tuple(ParameterSpec.from_json(d) for d in items), n_groups)
