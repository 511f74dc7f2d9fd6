"""Constrained MAP-Elites over graph-grammar genotypes.

Each cell of the (step, interestingness) grid keeps two bounded populations,
one feasible and one infeasible, both sorted best first.
"""
from __future__ import annotations

import bisect
import csv
import json
import logging
import math
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterator

from .grammar import (
    Genotype,
    Recipe,
    crossover,
    derive,
    genotype_to_dict,
    mutate,
    random_genotype,
)
from .graph import NarrativeGraph, serialize_ng
from .metrics import STEP_THRESHOLD, Evaluation, is_feasible
from .patterns import PatternCatalog, detect_all

log = logging.getLogger(__name__)

CELL_CAPACITY = 25


def feasibility(g: NarrativeGraph, catalog: PatternCatalog | None = None) -> bool:
    return is_feasible(g, catalog if catalog is not None else detect_all(g))


@dataclass(frozen=True)
class Individual:
    genotype: Genotype
    phenotype: NarrativeGraph
    recipe: Recipe
    evaluation: Evaluation

    @property
    def feasible(self) -> bool:
        return self.evaluation.feasible

    @property
    def fitness(self) -> float:
        return self.evaluation.fitness

    @property
    def dims(self) -> tuple[int, float]:
        return self.evaluation.step, self.evaluation.interestingness


@dataclass
class RunConfig:
    generations: int = 500
    initial_population: int = 1000
    offspring_per_generation: int = 100
    mutation_probability: float = 0.5
    rule_add_remove_probability: float = 0.1
    recipes_per_individual: int = 10
    step_threshold: int = STEP_THRESHOLD
    interestingness_bins: int = 10
    cell_capacity: int = CELL_CAPACITY
    exclusive_variation: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("mutation_probability", "rule_add_remove_probability"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")
        if self.interestingness_bins < 1 or self.step_threshold < 0:
            raise ValueError("grid needs at least one bin per dimension")
        if min(self.generations, self.initial_population, self.offspring_per_generation) < 0:
            raise ValueError("population sizes and generations must be non-negative")
        if self.initial_population < 1:
            raise ValueError("initial population must be at least 1")


def cell_index(
    step: int,
    interestingness: float,
    step_threshold: int = STEP_THRESHOLD,
    bins: int = 10,
) -> tuple[int, int]:
    if not 0 <= step <= step_threshold or step != int(step):
        raise ValueError(f"step {step} outside 0..{step_threshold}")
    if not 0.0 <= interestingness <= 1.0 or math.isnan(interestingness):
        raise ValueError(f"interestingness {interestingness} outside [0, 1]")
    return int(step), min(bins - 1, int(interestingness * bins))


@dataclass
class Cell:
    feasible: list[Individual] = field(default_factory=list)
    infeasible: list[Individual] = field(default_factory=list)

    @property
    def elite(self) -> Individual | None:
        return self.feasible[0] if self.feasible else None


@dataclass(frozen=True)
class Insertion:
    cell: tuple[int, int]
    survived: bool
    new_elite: bool


class EliteArchive:
    def __init__(
        self,
        step_threshold: int = STEP_THRESHOLD,
        interestingness_bins: int = 10,
        capacity: int = CELL_CAPACITY,
    ):
        self.step_threshold = step_threshold
        self.bins = interestingness_bins
        self.capacity = capacity
        self.rows = step_threshold + 1
        self.grid = [[Cell() for _ in range(self.bins)] for _ in range(self.rows)]

    @property
    def n_cells(self) -> int:
        return self.rows * self.bins

    def cell_of(self, ind: Individual) -> tuple[int, int]:
        return cell_index(*ind.dims, self.step_threshold, self.bins)

    def cells(self) -> Iterator[tuple[tuple[int, int], Cell]]:
        for r, row in enumerate(self.grid):
            for c, cell in enumerate(row):
                yield (r, c), cell

    def insert(self, ind: Individual) -> Insertion:
        r, c = self.cell_of(ind)
        cell = self.grid[r][c]
        pop = cell.feasible if ind.feasible else cell.infeasible
        # descending by fitness; ties keep the incumbent first
        keys = [-x.fitness for x in pop]
        at = bisect.bisect_right(keys, -ind.fitness)
        pop.insert(at, ind)
        if len(pop) > self.capacity:
            pop.pop()
        survived = at < len(pop) and pop[at] is ind
        return Insertion((r, c), survived, survived and ind.feasible and at == 0)

    def remove(self, ind: Individual) -> bool:
        for _, cell in self.cells():
            for pop in (cell.feasible, cell.infeasible):
                for i, x in enumerate(pop):
                    if x is ind:
                        del pop[i]
                        return True
        return False

    def reinsert(self, old: Individual, new: Individual) -> Insertion:
        """Replace ``old`` by its re-evaluated version, moving it between
        the feasible and infeasible populations when its class changed."""
        self.remove(old)
        return self.insert(new)

    def individuals(self) -> list[Individual]:
        out: list[Individual] = []
        for _, cell in self.cells():
            out.extend(cell.feasible)
            out.extend(cell.infeasible)
        return out

    def elites(self) -> list[tuple[tuple[int, int], Individual]]:
        return [(pos, cell.elite) for pos, cell in self.cells() if cell.elite is not None]

    def counts(self) -> tuple[int, int]:
        feas = sum(len(cell.feasible) for _, cell in self.cells())
        infeas = sum(len(cell.infeasible) for _, cell in self.cells())
        return feas, infeas


def coverage(archive: EliteArchive) -> float:
    return len(archive.elites()) / archive.n_cells


@dataclass(frozen=True)
class MetricsRow:
    generation: int
    coverage: float
    avg_fitness: float
    avg_interestingness: float
    feasible: int
    infeasible: int


def metrics_row(generation: int, archive: EliteArchive) -> MetricsRow:
    elites = [e for _, e in archive.elites()]
    n = len(elites)
    feas, infeas = archive.counts()
    return MetricsRow(
        generation=generation,
        coverage=n / archive.n_cells,
        avg_fitness=sum(e.fitness for e in elites) / n if n else 0.0,
        avg_interestingness=sum(e.evaluation.interestingness for e in elites) / n if n else 0.0,
        feasible=feas,
        infeasible=infeas,
    )


class InfeasibleRootError(ValueError):
    pass


def _stream(seed: int, *key) -> random.Random:
    return random.Random(":".join(str(k) for k in (seed, *key)))


@dataclass
class RunResult:
    root: NarrativeGraph
    config: RunConfig
    archive: EliteArchive
    metrics: list[MetricsRow]


def evolve(
    root: NarrativeGraph,
    config: RunConfig,
    progress: Callable[[MetricsRow], None] | None = None,
    observe: Callable[[int, EliteArchive], None] | None = None,
) -> RunResult:
    """Run Constrained MAP-Elites from ``root``.

    Random streams are keyed by (seed, generation, offspring index), so the
    outcome depends on the config and root only. ``observe`` sees the live
    archive after every generation (0 is the seeded population).
    """
    root_catalog = detect_all(root)
    if not is_feasible(root, root_catalog):
        raise InfeasibleRootError(f"root graph {root.name!r} is infeasible")

    archive = EliteArchive(config.step_threshold, config.interestingness_bins, config.cell_capacity)
    cache: dict = {}

    def make(genotype: Genotype, rng: random.Random) -> Individual:
        if len(cache) > 200_000:
            cache.clear()
        d = derive(
            genotype, root, rng, root_catalog,
            config.recipes_per_individual, cache, config.step_threshold,
        )
        return Individual(genotype, d.graph, d.recipe, d.evaluation)

    for k in range(config.initial_population):
        rng = _stream(config.seed, 0, k)
        archive.insert(make(random_genotype(rng), rng))
    rows = [metrics_row(0, archive)]
    if progress:
        progress(rows[-1])
    if observe:
        observe(0, archive)

    for gen in range(1, config.generations + 1):
        pool = archive.individuals()
        select = _stream(config.seed, gen, "select")
        parents = [select.choice(pool) for _ in range(2 * config.offspring_per_generation)]
        children: list[Individual] = []
        for k in range(config.offspring_per_generation):
            rng = _stream(config.seed, gen, k)
            a, b = parents[2 * k].genotype, parents[2 * k + 1].genotype
            offspring = list(_vary(a, b, rng, config))
            children.extend(make(g, rng) for g in offspring)
        for child in children:
            archive.insert(child)
        rows.append(metrics_row(gen, archive))
        if progress:
            progress(rows[-1])
        if observe:
            observe(gen, archive)
    return RunResult(root, config, archive, rows)


def _vary(a: Genotype, b: Genotype, rng: random.Random, config: RunConfig):
    p_mut = config.mutation_probability
    p_rule = config.rule_add_remove_probability
    if config.exclusive_variation:
        if rng.random() < p_mut:
            return mutate(a, rng, p_rule), mutate(b, rng, p_rule)
        return crossover(a, b, rng)
    ca, cb = crossover(a, b, rng)
    if rng.random() < p_mut:
        ca = mutate(ca, rng, p_rule)
    if rng.random() < p_mut:
        cb = mutate(cb, rng, p_rule)
    return ca, cb


# -- artifacts -------------------------------------------------------------------


def _individual_record(ind: Individual) -> dict:
    ev = ind.evaluation
    return {
        "fitness": ev.fitness,
        "coherence": ev.coherence,
        "feasible": ev.feasible,
        "step": ev.step,
        "interestingness": ev.interestingness,
        "genotype": genotype_to_dict(ind.genotype),
        "recipe": [list(s) for s in ind.recipe.steps],
        "phenotype": serialize_ng(ind.phenotype),
    }


def archive_document(result: RunResult) -> dict:
    cells = []
    for (r, c), cell in result.archive.cells():
        if not cell.feasible and not cell.infeasible:
            continue
        cells.append(
            {
                "step": r,
                "interestingness_bin": c,
                "feasible": len(cell.feasible),
                "infeasible": len(cell.infeasible),
                "elite": _individual_record(cell.elite) if cell.elite else None,
            }
        )
    return {
        "config": asdict(result.config),
        "root": serialize_ng(result.root),
        "grid": {"rows": result.archive.rows, "columns": result.archive.bins},
        "coverage": coverage(result.archive),
        "cells": cells,
    }


METRIC_FIELDS = ("generation", "coverage", "avg_fitness", "avg_interestingness", "feasible", "infeasible")


def write_metrics_csv(rows: list[MetricsRow], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_FIELDS)
        for row in rows:
            w.writerow([getattr(row, f) for f in METRIC_FIELDS])


def write_archive(result: RunResult, path: Path) -> None:
    path.write_text(json.dumps(archive_document(result), indent=1, sort_keys=True) + "\n")


def best_per_step(archive: EliteArchive) -> dict[int, Individual]:
    """Highest-fitness feasible elite of every occupied step row."""
    best: dict[int, Individual] = {}
    for (r, _), elite in archive.elites():
        if r not in best or elite.fitness > best[r].fitness:
            best[r] = elite
    return best
