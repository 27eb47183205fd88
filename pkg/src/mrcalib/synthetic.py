"""Toy double-model watershed: a reference model makes the observations, a
structurally different initial model is calibrated against them.

Both models are daily bucket models over ``N`` independent cells. Cells are
split into downstream, midstream and upstream regions by index; in the
initial model those regions route to the outlet with 0, 1 and 2 days delay.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numba import njit

from mrcalib.objectives import EvaluationError, ObjectiveRecord, evaluate_candidate
from mrcalib.params import ParameterSpace, ParameterSpec, Scale

REGIONS = ("Down", "Mid", "Up")
REGION_DELAY = {"Down": 0, "Mid": 1, "Up": 2}
SHARED = ("C", "f", "w", "k")
INITIAL_ONLY = ("m", "a")
CHANNEL = "n_ch"
REFERENCE_B = 0.4
DAYS_PER_YEAR = 365

# (low, high, scale) in model units
BOUNDS = {
    "C": (50.0, 400.0, Scale.LINEAR),
    "f": (0.3, 0.8, Scale.LINEAR),
    "w": (0.05, 0.7, Scale.LINEAR),
    "k": (0.1, 20.0, Scale.LOG10),
    "m": (1.0, 8.0, Scale.LINEAR),
    "a": (0.01, 0.5, Scale.LOG10),
    "n_ch": (0.05, 1.0, Scale.LINEAR),
}


@dataclass(frozen=True)
class Forcing:
    precip: np.ndarray
    pet: np.ndarray

    def __post_init__(self):
        p = np.ascontiguousarray(self.precip, dtype=float)
        e = np.ascontiguousarray(self.pet, dtype=float)
        if p.shape != e.shape or p.ndim != 1:
            raise ValueError("precip and pet must be 1-D series of equal length")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(e))) or (p < 0).any() or (e < 0).any():
            raise ValueError("forcing must be finite and non-negative")
        object.__setattr__(self, "precip", p)
        object.__setattr__(self, "pet", e)

    def __len__(self) -> int:
        return self.precip.size


def seasonal_pet(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    return np.maximum(0.0, 2.0 + 1.5 * np.sin(2.0 * np.pi * t / DAYS_PER_YEAR))


def generate_forcing(T: int, seed: int) -> Forcing:
    """Stochastic daily rain (30% wet days, exponential depths with mean 8 mm) and seasonal PET."""
    if T < 2 * DAYS_PER_YEAR:
        raise ValueError(f"need at least {2 * DAYS_PER_YEAR} days (one spin-up and one scored year), got {T}")
    rng = np.random.default_rng(seed)
    wet = rng.random(T) < 0.3
    depth = rng.exponential(8.0, T)
    precip = np.where(wet, depth, 0.0)
    return Forcing(precip, seasonal_pet(np.arange(T)))


def cell_regions(n_cells: int) -> list[str]:
    """First ceil(N/3) cells downstream, next third midstream, the rest upstream."""
    return [REGIONS[min(2, (3 * i) // n_cells)] for i in range(n_cells)]


def flow_time_order(regions: Sequence[str]) -> list[int]:
    """Cell indices sorted by travel time to the outlet, ties by index."""
    return sorted(range(len(regions)), key=lambda i: (REGION_DELAY[regions[i]], i))


@njit(cache=True)
def _reference_kernel(precip, pet, C, f, w, k, b, audit):
    T = precip.size
    N = C.size
    flow = np.zeros(T)
    na = T if audit else 0
    store = np.zeros((na + 1, N))
    qd_out = np.zeros((na, N))
    et_out = np.zeros((na, N))
    qb_out = np.zeros((na, N))
    clamp_out = np.zeros((na, N))
    s = 0.5 * C.copy()
    if audit:
        store[0, :] = s
    for t in range(T):
        total = 0.0
        for i in range(N):
            frac = s[i] / C[i]
            qd = precip[t] * frac ** b
            rel = (frac - w[i]) / (f[i] - w[i])
            if rel < 0.0:
                rel = 0.0
            elif rel > 1.0:
                rel = 1.0
            et = pet[t] * rel
            qb = k[i] * frac
            raw = s[i] + precip[t] - qd - et - qb
            new = raw
            if new < 0.0:
                new = 0.0
            elif new > C[i]:
                new = C[i]
            s[i] = new
            total += qd + qb
            if audit:
                store[t + 1, i] = new
                qd_out[t, i] = qd
                et_out[t, i] = et
                qb_out[t, i] = qb
                clamp_out[t, i] = new - raw
        flow[t] = total / N
    return flow, store, qd_out, et_out, qb_out, clamp_out


@njit(cache=True)
def _initial_kernel(precip, pet, C, f, w, k, m, a, delay, n_ch, audit):
    T = precip.size
    N = C.size
    max_delay = 0
    for i in range(N):
        if delay[i] > max_delay:
            max_delay = delay[i]
    cell_out = np.zeros((T, N))
    na = T if audit else 0
    store = np.zeros((na + 1, N))
    gw_store = np.zeros((na + 1, N))
    et_out = np.zeros((na, N))
    clamp_out = np.zeros((na, N))
    flow = np.zeros(T)
    s = 0.5 * C.copy()
    gw = np.zeros(N)
    if audit:
        store[0, :] = s
    F = 0.0
    for t in range(T):
        for i in range(N):
            frac = s[i] / C[i]
            sat = (s[i] - f[i] * C[i]) / ((1.0 - f[i]) * C[i])
            if sat < 0.0:
                sat = 0.0
            elif sat > 1.0:
                sat = 1.0
            qd = precip[t] * sat
            et = pet[t] * frac if frac > w[i] else 0.0
            perc = k[i] * frac ** m[i]
            raw = s[i] + precip[t] - qd - et - perc
            new = raw
            if new < 0.0:
                new = 0.0
            elif new > C[i]:
                new = C[i]
            s[i] = new
            qb = a[i] * gw[i]
            gw[i] = gw[i] + perc - qb
            cell_out[t, i] = qd + qb
            if audit:
                store[t + 1, i] = new
                gw_store[t + 1, i] = gw[i]
                et_out[t, i] = et
                clamp_out[t, i] = new - raw
        mean = 0.0
        for i in range(N):
            src = t - delay[i]
            if src >= 0:
                mean += cell_out[src, i]
        mean /= N
        F = (1.0 - n_ch) * F + n_ch * mean
        flow[t] = F
    return flow, cell_out, store, gw_store, et_out, clamp_out


def _as_cells(x, n: int, name: str) -> np.ndarray:
    arr = np.ascontiguousarray(x, dtype=float)
    if arr.shape != (n,):
        raise ValueError(f"{name} must have one value per cell ({n}), got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def _check_reference(C, f, w, k, b):
    if (C <= 0).any():
        raise ValueError("capacities C must be positive")
    if not ((0 < w) & (w < f) & (f < 1)).all():
        raise ValueError("reference model requires 0 < w < f < 1 in every cell")
    if (k <= 0).any():
        raise ValueError("conductivities k must be positive")
    if not b > 0:
        raise ValueError("infiltration exponent b must be positive")


def simulate_reference(C, f, w, k, forcing: Forcing, b: float = REFERENCE_B, audit: bool = False):
    """Outlet flow (mm/day) of the reference model.

    With ``audit=True`` returns ``(flow, fluxes)`` where ``fluxes`` maps
    ``storage`` (T+1, N), ``qd``, ``et``, ``qb`` and ``clamp`` (T, N). ``clamp``
    is the storage correction applied when a bucket over- or under-flows.
    """
    C = np.ascontiguousarray(C, dtype=float)
    n = C.size
    f, w, k = (_as_cells(v, n, name) for v, name in ((f, "f"), (w, "w"), (k, "k")))
    _check_reference(C, f, w, k, b)
    flow, store, qd, et, qb, clamp = _reference_kernel(forcing.precip, forcing.pet, C, f, w, k, float(b), audit)
    if not audit:
        return flow
    return flow, {"storage": store, "qd": qd, "et": et, "qb": qb, "clamp": clamp}


@dataclass(frozen=True)
class InitialParams:
    C: np.ndarray
    f: np.ndarray
    w: np.ndarray
    k: np.ndarray
    m: np.ndarray
    a: np.ndarray
    n_ch: float

    @classmethod
    def from_vector(cls, vector, n_cells: int) -> "InitialParams":
        v = np.asarray(vector, dtype=float)
        if v.shape != (6 * n_cells + 1,):
            raise ValueError(f"expected {6 * n_cells + 1} parameters for {n_cells} cells, got {v.shape}")
        blocks = [v[j * n_cells:(j + 1) * n_cells] for j in range(6)]
        return cls(*blocks, n_ch=float(v[-1]))

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.C, self.f, self.w, self.k, self.m, self.a, [self.n_ch]])


def _check_initial(p: InitialParams):
    if (p.C <= 0).any():
        raise ValueError("capacities C must be positive")
    if not ((0 <= p.f) & (p.f < 1)).all():
        raise ValueError("field-capacity fractions f must lie in [0, 1)")
    if not ((0 <= p.w) & (p.w < 1)).all():
        raise ValueError("wilting fractions w must lie in [0, 1)")
    if (p.k < 0).any() or (p.m <= 0).any():
        raise ValueError("k must be non-negative and m positive")
    if not ((0 <= p.a) & (p.a <= 1)).all():
        raise ValueError("recession coefficients a must lie in [0, 1]")
    if not 0 < p.n_ch <= 1:
        raise ValueError(f"channel smoothing n_ch must lie in (0, 1], got {p.n_ch}")


def simulate_initial(params, forcing: Forcing, regions: Sequence[str], audit: bool = False):
    """Outlet flow (mm/day) of the initial model.

    ``params`` is an :class:`InitialParams` or the flat model-unit vector
    ``[C.., f.., w.., k.., m.., a.., n_ch]``. With ``audit=True`` returns
    ``(flow, fluxes)`` with per-cell ``outflow``, ``et``, ``clamp`` (T, N) and
    ``storage``/``groundwater`` (T+1, N).
    """
    n = len(regions)
    if not isinstance(params, InitialParams):
        params = InitialParams.from_vector(params, n)
    p = InitialParams(*(_as_cells(getattr(params, name), n, name) for name in SHARED + INITIAL_ONLY),
                      n_ch=float(params.n_ch))
    _check_initial(p)
    delay = np.array([REGION_DELAY[r] for r in regions], dtype=np.int64)
    flow, cell_out, store, gw, et, clamp = _initial_kernel(
        forcing.precip, forcing.pet, p.C, p.f, p.w, p.k, p.m, p.a, delay, p.n_ch, audit
    )
    if not audit:
        return flow
    return flow, {"outflow": cell_out, "storage": store, "groundwater": gw, "et": et, "clamp": clamp}


def parameter_names(n_cells: int) -> list[str]:
    names = [f"{kind}_{i:02d}" for kind in SHARED + INITIAL_ONLY for i in range(n_cells)]
    return names + [CHANNEL]


def parse_name(name: str) -> tuple[str, int | None]:
    """Split ``"k_07"`` into ``("k", 7)``; the channel parameter has no cell."""
    if name == CHANNEL:
        return CHANNEL, None
    kind, _, cell = name.partition("_")
    return kind, int(cell)


@dataclass(frozen=True)
class WatershedTruth:
    C: np.ndarray
    f: np.ndarray
    w: np.ndarray
    k: np.ndarray
    regions: tuple[str, ...]
    forcing: Forcing
    observed: np.ndarray
    b: float = REFERENCE_B
    seed: int | None = None

    @property
    def n_cells(self) -> int:
        return len(self.regions)

    def shared_truth(self) -> dict[str, float]:
        out = {}
        for kind in SHARED:
            for i, v in enumerate(getattr(self, kind)):
                out[f"{kind}_{i:02d}"] = float(v)
        return out

    def to_json(self) -> dict:
        return {
            "n_cells": self.n_cells,
            "seed": self.seed,
            "b": self.b,
            "regions": list(self.regions),
            **{kind: [float(v) for v in getattr(self, kind)] for kind in SHARED},
        }


def make_truth(n_cells: int, seed: int, days: int = 3 * DAYS_PER_YEAR) -> WatershedTruth:
    """Random per-cell reference parameters and the observations they produce."""
    if n_cells < 3:
        raise ValueError(f"need at least 3 cells (one per region), got {n_cells}")
    param_seq, forcing_seq = np.random.SeedSequence(seed).spawn(2)
    rng = np.random.default_rng(param_seq)
    C = rng.uniform(50.0, 400.0, n_cells)
    f = rng.uniform(0.3, 0.8, n_cells)
    w = 0.05 + rng.random(n_cells) * (f - 0.1 - 0.05)
    k = 10.0 ** rng.uniform(math.log10(0.1), math.log10(20.0), n_cells)
    forcing = generate_forcing(days, int(forcing_seq.generate_state(1)[0]))
    observed = simulate_reference(C, f, w, k, forcing)
    return WatershedTruth(C, f, w, k, tuple(cell_regions(n_cells)), forcing, observed, REFERENCE_B, seed)


def initial_space(n_cells: int, truth: WatershedTruth | None = None) -> ParameterSpace:
    """All ``6N + 1`` initial-model parameters in a single group.

    Shared parameters carry the reference truth when ``truth`` is given.
    """
    known = truth.shared_truth() if truth is not None else {}
    specs = []
    for name in parameter_names(n_cells):
        kind, _ = parse_name(name)
        low, high, scale = BOUNDS[kind]
        specs.append(ParameterSpec(name, low, high, scale, 1, known.get(name)))
    return ParameterSpace(tuple(specs), 1)


def homogenized_space() -> ParameterSpace:
    """One shared value per parameter kind, for screening."""
    specs = [ParameterSpec(kind, *BOUNDS[kind][:2], BOUNDS[kind][2]) for kind in SHARED + INITIAL_ONLY + (CHANNEL,)]
    return ParameterSpace(tuple(specs), 1)


def expand_homogenized(values, n_cells: int) -> np.ndarray:
    """Replicate one value per kind across every cell, in initial-model vector order."""
    v = np.asarray(values, dtype=float)
    return np.concatenate([np.full(n_cells, v[j]) for j in range(6)] + [[v[6]]])


class InitialModelObjective:
    """Picklable ``assignment -> ObjectiveRecord`` for the initial model.

    ``spinup`` days at the start of the window are simulated but not scored.
    """

    def __init__(self, forcing: Forcing, regions: Sequence[str], observed, spinup: int = DAYS_PER_YEAR,
                 metrics=("NSE",)):
        self.forcing = forcing
        self.regions = tuple(regions)
        self.observed = np.asarray(observed, dtype=float)
        self.spinup = int(spinup)
        self.metrics = metrics

    def model(self, vector):
        return simulate_initial(vector, self.forcing, self.regions)

    def __call__(self, assignment) -> ObjectiveRecord:
        try:
            return evaluate_candidate(self.model, assignment, self.observed, self.metrics, self.spinup)
        except ValueError as exc:
            raise EvaluationError(str(exc), assignment) from exc
