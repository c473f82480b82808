"""Customized NSGA-II search over fixed-size input subsets.

An individual is a subset of ``budget`` distinct input ids with cached
objective values (mean Gini, log geometric diversity).  The two custom
operators are:

* crossover — each parent's genes are sorted by per-input Gini (descending,
  ties by ascending id), a single cut point is drawn, and the high-Gini
  prefixes form one offspring while the remainders form the other; ids that
  collide inside an offspring are replaced by fresh uniform-random ids.
* mutation — the k2 = max(1, round(0.02*budget)) lowest-Gini genes are
  shortlisted, and the k1 = max(1, k2 // 2) of them contributing least to
  subset diversity are replaced by fresh uniform-random ids.

Survival is elitist (mu + lambda) truncation by non-dominated rank then
crowding distance.  A generation-by-generation archive keeps every
non-dominated individual seen; the final answer is the archive's knee point.

Reproducibility: all randomness flows through one seeded generator, consumed
in a fixed order (parent draws, crossover coin, cut point, offspring-1 then
offspring-2 repairs, mutation coin and replacement draws per offspring).
Fitness evaluation consumes no randomness, so the optional worker threads
cannot perturb results.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import data_model, fitness
from .data_model import (
    NormalizedFeatureMatrix,
    ProbabilityMatrix,
    RunManifest,
    SelectionResult,
)
from .errors import BudgetError, EmptyFrontError
from .fitness import FitnessPair

log = logging.getLogger(__name__)

VARIANTS = (
    "full",
    "simple_crossover",
    "simple_mutation",
    "gini_only_mutation",
    "gd_only_mutation",
)

#: population size / generations presets; rates are shared.
PROFILES = {
    "paper": {"population_size": 700, "generations": 300},
    "desk": {"population_size": 100, "generations": 50},
}


def threads_from_env() -> int:
    try:
        return max(1, int(os.environ.get("DEEPSELECT_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class SearchParams:
    budget: int
    population_size: int = 700
    generations: int = 300
    crossover_rate: float = 0.75
    mutation_rate: float = 0.70
    tournament_size: int = 2
    seed: int = 0
    variant: str = "full"

    def __post_init__(self):
        if self.budget < 2:
            raise BudgetError(f"budget must be >= 2, got {self.budget}")
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if self.generations < 0:
            raise ValueError("generations must be >= 0")
        for name in ("crossover_rate", "mutation_rate"):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {rate}")
        if self.tournament_size < 1:
            raise ValueError("tournament_size must be >= 1")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; pick one of {VARIANTS}")

    @classmethod
    def for_profile(cls, profile: str, **overrides) -> "SearchParams":
        if profile not in PROFILES:
            raise ValueError(f"unknown profile {profile!r}; pick one of {tuple(PROFILES)}")
        merged = {**PROFILES[profile], **overrides}
        return cls(**merged)


class Individual:
    """A candidate subset with cached fitness.

    ``genes`` is a read-only int64 array whose stored order is meaningful to
    the operators; ``key()`` gives the canonical sorted-tuple identity used
    for deduplication and tie-breaking.
    """

    __slots__ = ("genes", "fitness", "_key")

    def __init__(self, genes: np.ndarray, fit: FitnessPair | None = None):
        arr = np.asarray(genes, dtype=np.int64)
        arr.setflags(write=False)
        self.genes = arr
        self.fitness = fit
        self._key: tuple[int, ...] | None = None

    def key(self) -> tuple[int, ...]:
        if self._key is None:
            self._key = tuple(sorted(int(g) for g in self.genes))
        return self._key

    def __repr__(self) -> str:  # debugging aid
        return f"Individual(size={self.genes.size}, fitness={self.fitness})"


def dominates(a: FitnessPair, b: FitnessPair) -> bool:
    """Pareto dominance under maximization of both objectives."""
    return (
        a.gini >= b.gini
        and a.log_gd >= b.log_gd
        and (a.gini > b.gini or a.log_gd > b.log_gd)
    )


# --------------------------------------------------------------------------
# Ranking machinery (standard NSGA-II components)
# --------------------------------------------------------------------------

def _fronts_from_scores(f1: np.ndarray, f2: np.ndarray) -> list[np.ndarray]:
    """Indices grouped into non-dominated fronts, best rank first."""
    ge1 = f1[:, None] >= f1[None, :]
    ge2 = f2[:, None] >= f2[None, :]
    gt = (f1[:, None] > f1[None, :]) | (f2[:, None] > f2[None, :])
    dom = ge1 & ge2 & gt  # dom[i, j]: i dominates j
    counts = dom.sum(axis=0)
    fronts: list[np.ndarray] = []
    active = np.ones(f1.size, dtype=bool)
    while active.any():
        front = np.flatnonzero(active & (counts == 0))
        if front.size == 0:  # cannot happen with a strict partial order
            front = np.flatnonzero(active)
        fronts.append(front)
        active[front] = False
        counts = counts - dom[front].sum(axis=0)
    return fronts


def non_dominated_sort(population: Sequence[Individual]) -> list[list[Individual]]:
    """Partition a population into Pareto fronts ordered by rank."""
    f1 = np.array([ind.fitness.gini for ind in population])
    f2 = np.array([ind.fitness.log_gd for ind in population])
    return [[population[i] for i in front] for front in _fronts_from_scores(f1, f2)]


def crowding_distance(front: Sequence[Individual]) -> np.ndarray:
    """Crowding distances of one front, in the front's given order.

    Boundary members per objective get +inf; interior members accumulate the
    normalized gap between their neighbours.  -inf diversity sentinels are
    treated as sitting at the objective minimum.
    """
    if len(front) == 0:
        raise ValueError("crowding_distance needs a non-empty front")
    scores = np.array([[ind.fitness.gini, ind.fitness.log_gd] for ind in front])
    return _crowding_from_scores(scores)


def _crowding_from_scores(scores: np.ndarray) -> np.ndarray:
    size = scores.shape[0]
    dist = np.zeros(size)
    if size <= 2:
        dist[:] = np.inf
        return dist
    for col in range(scores.shape[1]):
        vals = scores[:, col].copy()
        finite = np.isfinite(vals)
        if not finite.all():
            vals[~finite] = vals[finite].min() if finite.any() else 0.0
        order = np.argsort(vals, kind="stable")
        dist[order[0]] = np.inf
        dist[order[-1]] = np.inf
        span = vals[order[-1]] - vals[order[0]]
        if span > 0:
            gaps = (vals[order[2:]] - vals[order[:-2]]) / span
            interior = order[1:-1]
            dist[interior] = dist[interior] + gaps
    return dist


def tournament_select(
    population: Sequence[Individual],
    rng: np.random.Generator,
    tournament_size: int = 2,
    ranks: np.ndarray | None = None,
    crowding: np.ndarray | None = None,
) -> Individual:
    """Draw ``tournament_size`` members uniformly (with replacement) and keep
    the best by (rank, crowding distance, lowest sorted-gene tuple)."""
    if len(population) == 0:
        raise ValueError("tournament over an empty population")
    if ranks is None or crowding is None:
        ranks, crowding = _rank_population(population)
    picks = rng.integers(0, len(population), size=tournament_size)
    best = None
    for i in picks:
        cand = (ranks[i], -crowding[i], population[i].key())
        if best is None or cand < best[0]:
            best = (cand, int(i))
    return population[best[1]]


def _rank_population(
    population: Sequence[Individual],
) -> tuple[np.ndarray, np.ndarray]:
    ranks = np.empty(len(population), dtype=np.int64)
    crowd = np.empty(len(population), dtype=np.float64)
    f1 = np.array([ind.fitness.gini for ind in population])
    f2 = np.array([ind.fitness.log_gd for ind in population])
    for rank, front in enumerate(_fronts_from_scores(f1, f2)):
        ranks[front] = rank
        crowd[front] = _crowding_from_scores(
            np.column_stack((f1[front], f2[front]))
        )
    return ranks, crowd


# --------------------------------------------------------------------------
# Archive and knee point
# --------------------------------------------------------------------------

class ParetoArchive:
    """Unbounded store of the non-dominated individuals seen so far.

    Members are unique by gene set and mutually non-dominated; an incoming
    dominator evicts every member it dominates.
    """

    def __init__(self):
        self._members: dict[tuple[int, ...], Individual] = {}

    def __len__(self) -> int:
        return len(self._members)

    def __iter__(self):
        return iter(self._members.values())

    @property
    def members(self) -> list[Individual]:
        return list(self._members.values())

    def update(self, candidates: Iterable[Individual]) -> None:
        for cand in candidates:
            key = cand.key()
            if key in self._members:
                continue
            dominated = False
            evict: list[tuple[int, ...]] = []
            for k, member in self._members.items():
                if dominates(member.fitness, cand.fitness):
                    dominated = True
                    break
                if dominates(cand.fitness, member.fitness):
                    evict.append(k)
            if dominated:
                continue
            for k in evict:
                del self._members[k]
            self._members[key] = cand


def knee_point(front: ParetoArchive | Sequence[Individual]) -> Individual:
    """Front member closest to the ideal point in min-max-normalized space.

    Each objective is scaled over the front to [0, 1] (a constant objective
    contributes 0, and -inf sentinels sit at 0); the ideal point is (1, 1).
    Distance ties break toward the lowest sorted-gene tuple.
    """
    members = list(front)
    if not members:
        raise EmptyFrontError("knee_point needs a non-empty front")
    gini = np.array([ind.fitness.gini for ind in members])
    lgd = np.array([ind.fitness.log_gd for ind in members])
    dist = (1.0 - _norm_objective(gini)) ** 2 + (1.0 - _norm_objective(lgd)) ** 2
    best = np.flatnonzero(dist == dist.min())
    chosen = min(best, key=lambda i: members[i].key())
    return members[int(chosen)]


def _norm_objective(vals: np.ndarray) -> np.ndarray:
    finite = np.isfinite(vals)
    out = np.zeros_like(vals)
    if not finite.any():
        return out
    lo = vals[finite].min()
    hi = vals[finite].max()
    if hi > lo:
        out[finite] = (vals[finite] - lo) / (hi - lo)
    return out


# --------------------------------------------------------------------------
# The engine
# --------------------------------------------------------------------------

@dataclass
class GenerationStats:
    generation: int
    best_gini: float
    best_log_gd: float
    archive_size: int


class NsgaSubsetSelector:
    """Evolves subsets of one dataset under fixed search parameters."""

    def __init__(
        self,
        probabilities: ProbabilityMatrix,
        features: NormalizedFeatureMatrix,
        params: SearchParams,
        threads: int | None = None,
    ):
        if features.n != probabilities.n:
            raise ValueError("probabilities and features disagree on input count")
        if params.budget > probabilities.n:
            raise BudgetError(
                f"budget {params.budget} exceeds dataset size {probabilities.n}"
            )
        self.params = params
        self.n = probabilities.n
        self._gini = fitness.gini_rows(probabilities)
        self._features = features.values
        self._threads = threads_from_env() if threads is None else max(1, threads)
        self.history: list[GenerationStats] = []
        self.last_archive: ParetoArchive | None = None

    # -- fitness ------------------------------------------------------------

    def _evaluate(self, individuals: Sequence[Individual]) -> None:
        todo = [ind for ind in individuals if ind.fitness is None]
        if not todo:
            return
        genes = np.stack([ind.genes for ind in todo])
        ginis = self._gini[genes].mean(axis=1)
        if self._threads > 1 and len(todo) > 1:
            chunks = np.array_split(np.arange(len(todo)), self._threads)
            chunks = [c for c in chunks if c.size]
            with ThreadPoolExecutor(max_workers=self._threads) as pool:
                parts = list(
                    pool.map(lambda c: fitness.log_gd_batch(self._features, genes[c]), chunks)
                )
            lgds = np.concatenate(parts)
        else:
            lgds = fitness.log_gd_batch(self._features, genes)
        for ind, g, l in zip(todo, ginis, lgds):
            ind.fitness = FitnessPair(float(g), float(l))

    # -- operators ------------------------------------------------------------

    def init_population(self, rng: np.random.Generator) -> list[Individual]:
        pop = [
            Individual(rng.choice(self.n, size=self.params.budget, replace=False))
            for _ in range(self.params.population_size)
        ]
        self._evaluate(pop)
        return pop

    def _gini_sorted(self, genes: np.ndarray) -> np.ndarray:
        # descending Gini, ties by ascending id
        return genes[np.lexsort((genes, -self._gini[genes]))]

    def crossover(
        self, parent1: Individual, parent2: Individual, rng: np.random.Generator
    ) -> tuple[Individual, Individual]:
        budget = self.params.budget
        if self.params.variant == "simple_crossover":
            a, b = parent1.genes, parent2.genes
        else:
            a, b = self._gini_sorted(parent1.genes), self._gini_sorted(parent2.genes)
        cut = int(rng.integers(1, budget))  # uniform on [1, budget - 1]
        first = np.concatenate((a[:cut], b[: budget - cut]))
        second = np.concatenate((a[cut:], b[budget - cut :]))
        off1 = Individual(self._repair(first, rng))
        off2 = Individual(self._repair(second, rng))
        self._evaluate([off1, off2])
        return off1, off2

    def _repair(self, genes: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Replace duplicate ids with uniform-random unused ids, left to right."""
        out = genes.copy()
        seen: set[int] = set()
        for pos, gid in enumerate(out):
            gid = int(gid)
            if gid in seen:
                gid = self._fresh_id(seen, rng)
                out[pos] = gid
            seen.add(gid)
        return out

    def _fresh_id(self, used: set[int], rng: np.random.Generator) -> int:
        while True:  # rejection keeps the draw uniform over unused ids
            cand = int(rng.integers(0, self.n))
            if cand not in used:
                return cand

    def mutation_counts(self) -> tuple[int, int]:
        """(shortlist size k2, replaced count k1) for the configured budget."""
        k2 = max(1, int(0.02 * self.params.budget + 0.5))
        k1 = max(1, k2 // 2)
        return k2, k1

    def mutate(self, ind: Individual, rng: np.random.Generator) -> Individual:
        genes = ind.genes
        k2, k1 = self.mutation_counts()
        variant = self.params.variant
        if variant == "simple_mutation":
            positions = rng.choice(genes.size, size=k1, replace=False)
        else:
            by_gini = np.lexsort((genes, self._gini[genes]))  # ascending
            if variant == "gini_only_mutation":
                positions = by_gini[:k1]
            else:
                contrib = fitness.gd_contributions_all(self._features, genes)
                if variant == "gd_only_mutation":
                    candidates = np.arange(genes.size)
                else:  # full: least diverse half of the lowest-Gini shortlist
                    candidates = by_gini[:k2]
                order = np.lexsort((genes[candidates], contrib[candidates]))
                positions = candidates[order[:k1]]
        out = genes.copy()
        used = set(int(g) for g in out)
        for pos in positions:
            used.discard(int(out[pos]))
            fresh = self._fresh_id(used, rng)
            out[pos] = fresh
            used.add(fresh)
        child = Individual(out)
        self._evaluate([child])
        return child

    # -- main loop ------------------------------------------------------------

    def evolve(self, rng: np.random.Generator | None = None) -> ParetoArchive:
        params = self.params
        if rng is None:
            rng = np.random.default_rng(params.seed)
        population = self.init_population(rng)
        ranks, crowd = _rank_population(population)
        archive = ParetoArchive()
        archive.update(population[i] for i in np.flatnonzero(ranks == 0))
        self.history = [self._snapshot(0, population, archive)]
        for gen in range(1, params.generations + 1):
            offspring: list[Individual] = []
            while len(offspring) < params.population_size:
                p1 = tournament_select(
                    population, rng, params.tournament_size, ranks, crowd
                )
                p2 = tournament_select(
                    population, rng, params.tournament_size, ranks, crowd
                )
                if rng.random() < params.crossover_rate:
                    c1, c2 = self.crossover(p1, p2, rng)
                else:
                    c1, c2 = Individual(p1.genes, p1.fitness), Individual(p2.genes, p2.fitness)
                for child in (c1, c2):
                    if rng.random() < params.mutation_rate:
                        child = self.mutate(child, rng)
                    offspring.append(child)
            offspring = offspring[: params.population_size]
            self._evaluate(offspring)
            population, ranks, crowd = self._truncate(population + offspring)
            archive.update(population[i] for i in np.flatnonzero(ranks == 0))
            self.history.append(self._snapshot(gen, population, archive))
            if gen % 10 == 0 or gen == params.generations:
                last = self.history[-1]
                log.info(
                    "gen %d: best gini %.4f, best log_gd %.4f, archive %d",
                    gen, last.best_gini, last.best_log_gd, last.archive_size,
                )
        self.last_archive = archive
        return archive

    def _truncate(
        self, combined: list[Individual]
    ) -> tuple[list[Individual], np.ndarray, np.ndarray]:
        size = self.params.population_size
        f1 = np.array([ind.fitness.gini for ind in combined])
        f2 = np.array([ind.fitness.log_gd for ind in combined])
        fronts = _fronts_from_scores(f1, f2)
        survivors: list[Individual] = []
        ranks: list[int] = []
        crowd: list[float] = []
        for rank, front in enumerate(fronts):
            front_crowd = _crowding_from_scores(np.column_stack((f1[front], f2[front])))
            if len(survivors) + front.size <= size:
                chosen = range(front.size)
            else:
                room = size - len(survivors)
                # Keep each objective's front-best member ahead of the
                # crowding order so the population maxima never regress
                # (elitism over both objectives, not just Pareto rank).
                reserved: list[int] = []
                for scores in (f1, f2):
                    tops = [j for j in range(front.size)
                            if scores[front[j]] == scores[front].max()]
                    best = min(tops, key=lambda j: combined[front[j]].key())
                    if best not in reserved:
                        reserved.append(best)
                rest = sorted(
                    (j for j in range(front.size) if j not in reserved),
                    key=lambda j: (-front_crowd[j], combined[front[j]].key()),
                )
                chosen = (reserved + rest)[:room]
            for j in chosen:
                survivors.append(combined[front[j]])
                ranks.append(rank)
                crowd.append(float(front_crowd[j]))
            if len(survivors) >= size:
                break
        return survivors, np.asarray(ranks), np.asarray(crowd)

    def _snapshot(
        self, gen: int, population: Sequence[Individual], archive: ParetoArchive
    ) -> GenerationStats:
        return GenerationStats(
            generation=gen,
            best_gini=max(ind.fitness.gini for ind in population),
            best_log_gd=max(ind.fitness.log_gd for ind in population),
            archive_size=len(archive),
        )


# --------------------------------------------------------------------------
# Front end
# --------------------------------------------------------------------------

def run_deepgd(
    manifest: RunManifest,
    params: SearchParams | None = None,
    threads: int | None = None,
) -> tuple[SelectionResult, NsgaSubsetSelector]:
    """Load a manifest, evolve, and return the knee-point selection."""
    run = data_model.load_run(manifest)
    probs = run.probabilities
    feats = fitness.normalize_features(run.features)
    if params is None:
        if manifest.budget is None:
            raise BudgetError("manifest declares no budget")
        params = SearchParams(budget=manifest.budget, seed=manifest.seed)
    return select_deepgd(probs, feats, params, threads=threads)


def select_deepgd(
    probabilities: ProbabilityMatrix,
    features: NormalizedFeatureMatrix,
    params: SearchParams,
    threads: int | None = None,
) -> tuple[SelectionResult, NsgaSubsetSelector]:
    engine = NsgaSubsetSelector(probabilities, features, params, threads=threads)
    archive = engine.evolve()
    best = knee_point(archive)
    method = "deepgd" if params.variant == "full" else f"deepgd:{params.variant}"
    result = SelectionResult(
        subset=tuple(int(g) for g in best.genes),
        method=method,
        budget=params.budget,
        seed=params.seed,
        gini=best.fitness.gini,
        log_gd=best.fitness.log_gd,
        params={
            "population_size": params.population_size,
            "generations": params.generations,
            "crossover_rate": params.crossover_rate,
            "mutation_rate": params.mutation_rate,
            "tournament_size": params.tournament_size,
            "variant": params.variant,
        },
    )
    return result, engine
