"""Population-based ensemble optimizer over mixed continuous/discrete encodings.

Two low-level generators share one population: NSGA-II variation and a
Metropolis-filtered continuous/discrete ant-colony sampler. Each generation
the offspring quota is split between them in proportion to how many of
their offspring survived the previous environmental selection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Sequence

import numpy as np

from mrcalib.objectives import EvaluationError
from mrcalib.params import Discrete, ParameterSpace, ResolutionMode, SearchRange, discrete_points


class Provenance(str, Enum):
    RANDOM_INIT = "random_init"
    CARRYOVER = "carryover"
    NSGA = "nsga_offspring"
    ACO_MH = "aco_mh_offspring"


METHODS = (Provenance.NSGA, Provenance.ACO_MH)


@dataclass
class Candidate:
    assignment: np.ndarray
    objectives: tuple[float, ...] | None = None
    provenance: Provenance = Provenance.RANDOM_INIT

    @property
    def evaluated(self) -> bool:
        return self.objectives is not None

    @property
    def primary(self) -> float:
        if self.objectives is None:
            raise ValueError("candidate has not been evaluated")
        return self.objectives[0]


@dataclass
class OptimizerSettings:
    crossover_rate: float = 0.9
    mutation_rate: float | None = None  # per variable; None means 1 / n_variables
    sbx_eta: float = 15.0
    mutation_eta: float = 20.0
    aco_q: float = 0.25
    aco_xi: float = 0.85
    aco_smoothing: float = 0.1
    weight_floor: float = 0.1


@dataclass
class SearchDomain:
    """Current search box in search scale plus the discrete grids of coarse-mode parameters."""

    lo: np.ndarray
    hi: np.ndarray
    points: dict[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=float)
        self.hi = np.asarray(self.hi, dtype=float)
        if self.lo.shape != self.hi.shape or (self.lo > self.hi).any():
            raise ValueError("domain bounds are inconsistent")
        self.points = {int(i): np.asarray(p, dtype=float) for i, p in self.points.items()}
        mask = np.ones(self.lo.size, dtype=bool)
        mask[list(self.points)] = False
        self.continuous = mask
        self.discrete_index = np.array(sorted(self.points), dtype=int)

    @property
    def size(self) -> int:
        return self.lo.size

    @classmethod
    def build(cls, space: ParameterSpace, ranges: Sequence[SearchRange], group_modes: Sequence[ResolutionMode]) -> "SearchDomain":
        """``ranges[i]`` is parameter i's range, ``group_modes[g - 1]`` the mode of group g."""
        if len(ranges) != len(space):
            raise ValueError(f"{len(ranges)} ranges for {len(space)} parameters")
        points = {}
        for i, spec in enumerate(space):
            mode = group_modes[spec.group - 1]
            if isinstance(mode, Discrete):
                points[i] = discrete_points(ranges[i], mode.k)
        return cls([r.lo for r in ranges], [r.hi for r in ranges], points)

    def project(self, x: np.ndarray) -> np.ndarray:
        """Clamp into the box and snap discrete components to their nearest grid point."""
        y = np.clip(np.asarray(x, dtype=float), self.lo, self.hi)
        for i, pts in self.points.items():
            y[i] = pts[int(np.argmin(np.abs(pts - y[i])))]
        return y

    def contains(self, x: np.ndarray) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape != self.lo.shape or (x < self.lo).any() or (x > self.hi).any():
            return False
        return all(np.any(pts == x[i]) for i, pts in self.points.items())

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        x = rng.uniform(self.lo, self.hi)
        x = np.where(self.hi > self.lo, x, self.lo)
        for i, pts in self.points.items():
            x[i] = pts[int(rng.integers(len(pts)))]
        return x

    def point_index(self, i: int, value: float) -> int:
        pts = self.points[i]
        return int(np.argmin(np.abs(pts - value)))


# --- Pareto machinery -------------------------------------------------------


def _as_matrix(objectives: Sequence[Sequence[float]]) -> np.ndarray:
    rows = [tuple(np.atleast_1d(np.asarray(o, dtype=float))) for o in objectives]
    dims = {len(r) for r in rows}
    if len(dims) > 1:
        raise ValueError(f"objective vectors have mixed dimensionality {sorted(dims)}")
    return np.array(rows, dtype=float).reshape(len(rows), dims.pop() if dims else 0)


def nondominated_sort(objectives: Sequence[Sequence[float]]) -> list[list[int]]:
    """Partition indices into Pareto fronts (minimization), best front first."""
    F = _as_matrix(objectives)
    n = F.shape[0]
    if n == 0:
        return []
    if F.shape[1] == 1:
        values = F[:, 0]
        order = np.argsort(values, kind="stable")
        fronts, current, last = [], [], None
        for i in order:
            if last is not None and values[i] != last:
                fronts.append(sorted(current))
                current = []
            current.append(int(i))
            last = values[i]
        fronts.append(sorted(current))
        return fronts
    le = np.all(F[:, None, :] <= F[None, :, :], axis=2)
    lt = np.any(F[:, None, :] < F[None, :, :], axis=2)
    dominates = le & lt  # dominates[i, j]: i dominates j
    count = dominates.sum(axis=0)
    fronts = []
    remaining = np.ones(n, dtype=bool)
    current = np.flatnonzero(count == 0)
    while current.size:
        fronts.append([int(i) for i in current])
        remaining[current] = False
        count = count - dominates[current].sum(axis=0)
        current = np.flatnonzero(remaining & (count == 0))
    return fronts


def crowding_distance(front: Sequence[Sequence[float]]) -> np.ndarray:
    F = _as_matrix(front)
    n, m = F.shape
    dist = np.zeros(n)
    if n <= 2:
        dist[:] = np.inf
        return dist
    for j in range(m):
        order = np.argsort(F[:, j], kind="stable")
        span = F[order[-1], j] - F[order[0], j]
        dist[order[0]] = dist[order[-1]] = np.inf
        if span == 0:
            continue
        gaps = (F[order[2:], j] - F[order[:-2], j]) / span
        dist[order[1:-1]] += gaps
    return dist


def rank_and_crowding(objectives: Sequence[Sequence[float]]) -> tuple[np.ndarray, np.ndarray]:
    F = _as_matrix(objectives)
    rank = np.zeros(len(F), dtype=int)
    crowd = np.zeros(len(F))
    for r, front in enumerate(nondominated_sort(F)):
        rank[front] = r
        crowd[front] = crowding_distance(F[front])
    return rank, crowd


def preference_order(objectives: Sequence[Sequence[float]]) -> np.ndarray:
    """Indices best-first by (front rank, -crowding, primary objective, index)."""
    F = _as_matrix(objectives)
    rank, crowd = rank_and_crowding(F)
    return np.lexsort((np.arange(len(F)), F[:, 0], -crowd, rank))


def environmental_selection(objectives: Sequence[Sequence[float]], size: int) -> list[int]:
    """Indices of the ``size`` survivors: whole fronts first, then the most crowded-apart."""
    F = _as_matrix(objectives)
    chosen: list[int] = []
    for front in nondominated_sort(F):
        if len(chosen) + len(front) <= size:
            chosen.extend(front)
            continue
        d = crowding_distance(F[front])
        order = np.lexsort((np.array(front), F[front, 0], -d))
        chosen.extend(front[i] for i in order[: size - len(chosen)])
        break
    return sorted(chosen)


# --- initialization ----------------------------------------------------------


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def initialize_population(
    domain: SearchDomain,
    size: int,
    rng: np.random.Generator,
    carryover: Sequence[Candidate] | None = None,
    reinit_fraction: float = 0.2,
) -> list[Candidate]:
    """Random population, or the best carryover members re-projected plus fresh random ones.

    A carried member keeps its objectives only if projection left it unchanged.
    """
    if size < 2:
        raise ValueError(f"population size must be >= 2, got {size}")
    if not 0.0 <= reinit_fraction <= 1.0:
        raise ValueError(f"reinit_fraction must lie in [0, 1], got {reinit_fraction}")
    members: list[Candidate] = []
    if carryover:
        for c in carryover:
            if c.assignment.shape != domain.lo.shape:
                raise ValueError("carryover member has the wrong dimensionality")
        n_fresh = _round_half_up(size * reinit_fraction)
        pool = list(carryover)
        if all(c.evaluated for c in pool):
            pool = [pool[i] for i in preference_order([c.objectives for c in pool])]
        for c in pool[: size - n_fresh]:
            x = domain.project(c.assignment)
            same = np.array_equal(x, c.assignment)
            members.append(Candidate(x, c.objectives if same else None, Provenance.CARRYOVER))
    while len(members) < size:
        members.append(Candidate(domain.sample(rng), None, Provenance.RANDOM_INIT))
    # Fresh members first keeps the evaluation order independent of carryover size.
    return [m for m in members if m.provenance is Provenance.RANDOM_INIT] + [
        m for m in members if m.provenance is Provenance.CARRYOVER
    ]


# --- NSGA-II variation -------------------------------------------------------


def _require_evaluated(population: Sequence[Candidate]):
    if not population:
        raise ValueError("source population is empty")
    if not all(c.evaluated for c in population):
        raise ValueError("source population contains unevaluated candidates")


def _sbx_pair(p1, p2, lo, hi, eta, rng):
    """Bounded simulated binary crossover on one variable."""
    if abs(p1 - p2) < 1e-14 or hi <= lo:
        return p1, p2
    y1, y2 = min(p1, p2), max(p1, p2)
    u = rng.random()
    children = []
    for beta_edge in (1.0 + 2.0 * (y1 - lo) / (y2 - y1), 1.0 + 2.0 * (hi - y2) / (y2 - y1)):
        alpha = 2.0 - beta_edge ** -(eta + 1.0)
        if u <= 1.0 / alpha:
            betaq = (u * alpha) ** (1.0 / (eta + 1.0))
        else:
            betaq = (1.0 / (2.0 - u * alpha)) ** (1.0 / (eta + 1.0))
        children.append(betaq)
    c1 = 0.5 * ((y1 + y2) - children[0] * (y2 - y1))
    c2 = 0.5 * ((y1 + y2) + children[1] * (y2 - y1))
    c1, c2 = min(max(c1, lo), hi), min(max(c2, lo), hi)
    if rng.random() < 0.5:
        c1, c2 = c2, c1
    return c1, c2


def _polynomial_mutation(x, lo, hi, eta, rng):
    if hi <= lo:
        return lo
    d1 = (x - lo) / (hi - lo)
    d2 = (hi - x) / (hi - lo)
    u = rng.random()
    power = 1.0 / (eta + 1.0)
    if u < 0.5:
        val = 2.0 * u + (1.0 - 2.0 * u) * (1.0 - d1) ** (eta + 1.0)
        dq = val ** power - 1.0
    else:
        val = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d2) ** (eta + 1.0)
        dq = 1.0 - val ** power
    return min(max(x + dq * (hi - lo), lo), hi)


def _tournament(rank, crowd, rng) -> int:
    a, b = rng.integers(len(rank), size=2)
    if rank[a] != rank[b]:
        return int(a if rank[a] < rank[b] else b)
    if crowd[a] != crowd[b]:
        return int(a if crowd[a] > crowd[b] else b)
    return int(min(a, b))


def generate_offspring_nsga2(
    population: Sequence[Candidate],
    domain: SearchDomain,
    count: int,
    rng: np.random.Generator,
    settings: OptimizerSettings | None = None,
) -> list[Candidate]:
    """Tournament selection, SBX crossover and polynomial mutation; discrete genes swap and resample."""
    if count <= 0:
        return []
    _require_evaluated(population)
    s = settings or OptimizerSettings()
    rank, crowd = rank_and_crowding([c.objectives for c in population])
    n = domain.size
    pm = s.mutation_rate if s.mutation_rate is not None else 1.0 / n
    out: list[Candidate] = []
    while len(out) < count:
        x1 = population[_tournament(rank, crowd, rng)].assignment.copy()
        x2 = population[_tournament(rank, crowd, rng)].assignment.copy()
        if rng.random() < s.crossover_rate:
            for i in range(n):
                if rng.random() >= 0.5:
                    continue
                if domain.continuous[i]:
                    x1[i], x2[i] = _sbx_pair(x1[i], x2[i], domain.lo[i], domain.hi[i], s.sbx_eta, rng)
                else:
                    x1[i], x2[i] = x2[i], x1[i]
        for child in (x1, x2):
            if pm > 0:
                for i in np.flatnonzero(rng.random(n) < pm):
                    if domain.continuous[i]:
                        child[i] = _polynomial_mutation(child[i], domain.lo[i], domain.hi[i], s.mutation_eta, rng)
                    else:
                        pts = domain.points[i]
                        child[i] = pts[int(rng.integers(len(pts)))]
            out.append(Candidate(domain.project(child), None, Provenance.NSGA))
    return out[:count]


# --- Metropolis-filtered ant-colony sampler ----------------------------------


def rank_weights(k: int, q: float) -> np.ndarray:
    """Gaussian rank weights of continuous ant-colony optimization, normalized."""
    ranks = np.arange(k)
    w = np.exp(-(ranks ** 2) / (2.0 * (q * k) ** 2))
    return w / w.sum()


def discrete_choice_probabilities(chosen: Sequence[int], weights: Sequence[float], n_points: int, smoothing: float) -> np.ndarray:
    """P(point) from rank-weighted elite frequencies with additive smoothing."""
    weights = np.asarray(weights, dtype=float)
    freq = np.zeros(n_points)
    np.add.at(freq, np.asarray(chosen, dtype=int), weights)
    freq /= weights.sum()
    return (freq + smoothing) / (1.0 + n_points * smoothing)


def _interquartile_range(values: np.ndarray) -> float:
    q1, q3 = np.percentile(values, [25, 75])
    return float(q3 - q1)


def _reflect(x, lo, hi):
    """Fold values back into ``[lo, hi]``; zero-width dimensions collapse to ``lo``."""
    width = hi - lo
    safe = np.where(width > 0, width, 1.0)
    y = np.mod(x - lo, 2.0 * safe)
    y = np.where(y > safe, 2.0 * safe - y, y)
    return np.where(width > 0, np.clip(lo + y, lo, hi), lo)


def generate_offspring_aco_mh(
    source: Sequence[Candidate],
    domain: SearchDomain,
    count: int,
    rng: np.random.Generator,
    settings: OptimizerSettings | None = None,
) -> list[Candidate]:
    """Sample around elite solutions chosen by a Metropolis walk over the ranked elites.

    Elites are the source members ordered best first. Each draw proposes a
    kernel center by rank weight and accepts it against the current center's
    objective at a temperature equal to the interquartile range of the source
    objectives. Continuous genes are Gaussian around the center with width
    ``xi`` times the elites' mean absolute deviation from it; discrete genes
    follow smoothed rank-weighted elite frequencies.
    """
    if count <= 0:
        return []
    if not source:
        raise ValueError("ant-colony sampler needs a non-empty evaluated source")
    _require_evaluated(source)
    s = settings or OptimizerSettings()
    order = preference_order([c.objectives for c in source])
    elites = np.array([source[i].assignment for i in order])
    fitness = np.array([source[i].primary for i in order])
    K = len(elites)
    weights = rank_weights(K, s.aco_q)
    temperature = _interquartile_range(fitness)
    cont = np.flatnonzero(domain.continuous)
    disc = domain.discrete_index

    disc_probs = {}
    for i in disc:
        chosen = [domain.point_index(i, v) for v in elites[:, i]]
        disc_probs[i] = discrete_choice_probabilities(chosen, weights, len(domain.points[i]), s.aco_smoothing)

    current = 0
    out: list[Candidate] = []
    for _ in range(count):
        proposal = int(rng.choice(K, p=weights))
        delta = fitness[proposal] - fitness[current]
        if delta <= 0:
            current = proposal
        elif temperature > 0 and rng.random() < math.exp(-delta / temperature):
            current = proposal
        x = elites[current].copy()
        if cont.size:
            center = elites[current, cont]
            if K > 1:
                sigma = s.aco_xi * np.abs(elites[:, cont] - center).sum(axis=0) / (K - 1)
            else:
                sigma = np.zeros(cont.size)
            draw = center + sigma * rng.standard_normal(cont.size)
            x[cont] = _reflect(draw, domain.lo[cont], domain.hi[cont])
        for i in disc:
            pts = domain.points[i]
            x[i] = pts[int(rng.choice(len(pts), p=disc_probs[i]))]
        out.append(Candidate(domain.project(x), None, Provenance.ACO_MH))
    return out


# --- adaptive allocation -----------------------------------------------------


def allocate_queries(survivors: Sequence[int] | None = None, n_methods: int = 2, floor: float = 0.1) -> np.ndarray:
    """Method weights proportional to (surviving offspring + 1), each at least ``floor``."""
    if not survivors:
        return np.full(n_methods, 1.0 / n_methods)
    raw = np.asarray(survivors, dtype=float) + 1.0
    if (raw < 1.0).any():
        raise ValueError("survivor counts must be non-negative")
    if floor * len(raw) > 1.0:
        raise ValueError(f"floor {floor} is infeasible for {len(raw)} methods")
    weights = raw / raw.sum()
    pinned = np.zeros(len(raw), dtype=bool)
    while True:
        low = (weights < floor) & ~pinned
        if not low.any():
            break
        pinned |= low
        free_mass = 1.0 - floor * pinned.sum()
        weights = np.where(pinned, floor, raw / raw[~pinned].sum() * free_mass)
    return weights


def split_count(weights: Sequence[float], total: int) -> list[int]:
    """Integer shares of ``total`` by largest remainder; ties go to the earlier method."""
    weights = np.asarray(weights, dtype=float)
    exact = weights / weights.sum() * total
    base = np.floor(exact).astype(int)
    rest = total - base.sum()
    order = np.lexsort((np.arange(len(weights)), -(exact - base)))
    base[order[:rest]] += 1
    return [int(b) for b in base]


# --- run driver --------------------------------------------------------------


@dataclass
class Evaluation:
    assignment: np.ndarray
    objectives: tuple[float, ...]
    provenance: Provenance


def _evaluate_batch(evaluator, candidates: Sequence[Candidate], map_fn) -> list[tuple[float, ...]]:
    def one(c: Candidate):
        try:
            values = evaluator(c.assignment)
        except EvaluationError as exc:
            if exc.assignment is None:
                exc.assignment = np.asarray(c.assignment).tolist()
            raise
        except Exception as exc:
            raise EvaluationError(f"evaluation failed: {exc}", c.assignment) from exc
        return tuple(float(v) for v in np.atleast_1d(values))

    return list((map_fn or map)(one, candidates))


def evolve_run(
    evaluator: Callable[[np.ndarray], Sequence[float]],
    population: Sequence[Candidate],
    budget: int,
    domain: SearchDomain,
    pop_size: int,
    rng: np.random.Generator,
    settings: OptimizerSettings | None = None,
    map_fn: Callable | None = None,
) -> tuple[list[Candidate], list[Evaluation]]:
    """Spend exactly ``budget`` evaluations evolving ``population`` inside ``domain``.

    ``evaluator`` maps a search-scale assignment to its objective vector.
    ``map_fn`` (default: builtin ``map``) may evaluate a batch concurrently;
    results are logged in batch order, so the log does not depend on it.
    """
    if budget < 1:
        raise ValueError(f"run budget must be >= 1, got {budget}")
    s = settings or OptimizerSettings()
    log: list[Evaluation] = []
    members = list(population)
    pending = [c for c in members if not c.evaluated][:budget]
    for c, obj in zip(pending, _evaluate_batch(evaluator, pending, map_fn)):
        c.objectives = obj
        log.append(Evaluation(c.assignment, obj, c.provenance))
    members = [c for c in members if c.evaluated]
    if not members:
        raise ValueError("no evaluated members to evolve")
    weights = allocate_queries(None, len(METHODS), s.weight_floor)
    while len(log) < budget:
        n_off = min(pop_size, budget - len(log))
        n_nsga, n_aco = split_count(weights, n_off)
        offspring = generate_offspring_nsga2(members, domain, n_nsga, rng, s)
        offspring += generate_offspring_aco_mh(members, domain, n_aco, rng, s)
        for c, obj in zip(offspring, _evaluate_batch(evaluator, offspring, map_fn)):
            c.objectives = obj
            log.append(Evaluation(c.assignment, obj, c.provenance))
        combined = members + offspring
        keep = environmental_selection([c.objectives for c in combined], pop_size)
        survivors = [combined[i] for i in keep]
        n_old = len(members)
        counts = [sum(1 for i in keep if i >= n_old and combined[i].provenance is m) for m in METHODS]
        members = survivors
        weights = allocate_queries(counts, len(METHODS), s.weight_floor)
    return members, log


class Archive:
    """The ``capacity`` best distinct evaluated assignments, best first by primary objective."""

    def __init__(self, capacity: int = 20):
        if capacity < 1:
            raise ValueError("archive capacity must be positive")
        self.capacity = capacity
        self.members: list[Candidate] = []
        self._keys: set[bytes] = set()

    def __len__(self) -> int:
        return len(self.members)

    def add(self, assignment: np.ndarray, objectives: Sequence[float], provenance=Provenance.RANDOM_INIT) -> bool:
        x = np.asarray(assignment, dtype=float)
        key = x.tobytes()
        if key in self._keys:
            return False
        value = float(objectives[0])
        if len(self.members) == self.capacity and value >= self.members[-1].primary:
            return False
        pos = len(self.members)
        while pos > 0 and self.members[pos - 1].primary > value:
            pos -= 1
        self.members.insert(pos, Candidate(x.copy(), tuple(float(v) for v in objectives), Provenance(provenance)))
        self._keys.add(key)
        if len(self.members) > self.capacity:
            dropped = self.members.pop()
            self._keys.discard(dropped.assignment.tobytes())
        return True

    def extend(self, evaluations: Iterable[Evaluation]) -> None:
        for e in evaluations:
            self.add(e.assignment, e.objectives, e.provenance)

    def assignments(self) -> np.ndarray:
        return np.array([m.assignment for m in self.members])
