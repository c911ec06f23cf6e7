"""Steady-state genetic algorithm over real-valued genomes.

One step draws two parents by binary tournament, applies uniform crossover and
per-gene Gaussian mutation, and the child replaces the worst individual other
than the current best. A generation is `population` steps.
"""

import time
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from pbgcavity import __version__
from pbgcavity.config import DefaultGaConfig
from pbgcavity.errors import CheckpointError, ConfigError
from pbgcavity.ga.checkpoint import load_checkpoint, save_checkpoint
from pbgcavity.utils import format_float, log_event, thread_map

DEFAULTS = DefaultGaConfig()

FitnessFn = Callable[[np.ndarray], float]


class Propagation(Enum):
    steady_state = "steady_state"


@dataclass(frozen=True)
class GaConfig:
    population: int = DEFAULTS.population
    mutation_rate: float = DEFAULTS.mutation_rate
    crossover_rate: float = DEFAULTS.crossover_rate
    sigma: float = DEFAULTS.sigma
    budget: int = DEFAULTS.budget
    seed: int = 0
    propagation: Propagation = Propagation.steady_state
    checkpoint_every: int = DEFAULTS.checkpoint_every

    def __post_init__(self):
        errors = []
        if self.population < 2:
            errors.append(f"population must be >= 2, got {self.population}")
        for name in ("mutation_rate", "crossover_rate"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                errors.append(f"{name} must lie in [0, 1], got {value}")
        if self.sigma < 0:
            errors.append(f"sigma must be >= 0, got {self.sigma}")
        if self.budget < 0:
            errors.append(f"budget must be >= 0, got {self.budget}")
        if self.checkpoint_every < 1:
            errors.append(f"checkpoint_every must be >= 1, got {self.checkpoint_every}")
        if errors:
            raise ConfigError(errors, module="ga_optimizer")

    def echo(self) -> dict:
        values = asdict(self)
        values["propagation"] = self.propagation.value
        return values


@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    evaluations: int
    best_fitness: float
    mean_fitness: float
    best_genome: Tuple[float, ...]
    wall_clock: float = 0.0


@dataclass
class GenerationLog:
    records: List[GenerationRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, index) -> GenerationRecord:
        return self.records[index]

    def append(self, record: GenerationRecord):
        self.records.append(record)

    @property
    def best_fitness(self) -> List[float]:
        return [record.best_fitness for record in self.records]

    def is_monotone(self) -> bool:
        best = self.best_fitness
        return all(later >= earlier for earlier, later in zip(best, best[1:]))

    def csv_rows(self) -> Tuple[List[str], List[List[str]]]:
        """Rows without wall-clock, so identical runs give identical files."""
        size = len(self.records[0].best_genome) if self.records else 0
        header = ["generation", "evaluations", "best_fitness", "mean_fitness"]
        header += [f"g{i}" for i in range(size)]
        rows = [
            [str(r.generation), str(r.evaluations), format_float(r.best_fitness), format_float(r.mean_fitness)]
            + [format_float(value) for value in r.best_genome]
            for r in self.records
        ]
        return header, rows


class SteadyStateGA:
    def __init__(
        self,
        config: GaConfig,
        fitness_fn: FitnessFn,
        bounds: Tuple[np.ndarray, np.ndarray],
        workers: int = 1,
        checkpoint_path: Optional[Path] = None,
        on_generation: Optional[Callable[[GenerationRecord], None]] = None,
    ):
        self.config = config
        self.fitness_fn = fitness_fn
        self.low = np.asarray(bounds[0], dtype=float)
        self.high = np.asarray(bounds[1], dtype=float)
        self.workers = workers
        self.checkpoint_path = checkpoint_path
        self.on_generation = on_generation
        self.rng = np.random.default_rng(config.seed)
        self.population: Optional[np.ndarray] = None
        self.fitness: Optional[np.ndarray] = None
        self.generation = 0
        self.evaluations = 0
        self.log = GenerationLog()
        self._started = time.monotonic()

    @property
    def dimension(self) -> int:
        return len(self.low)

    @property
    def best_index(self) -> int:
        return int(np.argmax(self.fitness))

    @property
    def best(self) -> Tuple[np.ndarray, float]:
        index = self.best_index
        return self.population[index].copy(), float(self.fitness[index])

    def initialize(self, initial_population: Optional[Sequence[Sequence[float]]] = None):
        if initial_population is None:
            population = self.rng.uniform(self.low, self.high, size=(self.config.population, self.dimension))
        else:
            population = np.clip(np.array(initial_population, dtype=float), self.low, self.high)
            if population.shape != (self.config.population, self.dimension):
                raise ConfigError(
                    [f"initial population has shape {population.shape}, "
                     f"expected {(self.config.population, self.dimension)}"],
                    module="ga_optimizer",
                )
        self.population = population
        self.fitness = np.array(thread_map(self.fitness_fn, list(population), self.workers), dtype=float)
        self.evaluations = len(population)
        self.generation = 0
        self._record()

    def _tournament(self) -> int:
        first, second = self.rng.integers(self.config.population, size=2)
        return int(first if self.fitness[first] >= self.fitness[second] else second)

    def offspring(self) -> np.ndarray:
        parent_a = self.population[self._tournament()]
        parent_b = self.population[self._tournament()]
        mask = self.rng.random(self.dimension) < 0.5
        if self.rng.random() < self.config.crossover_rate:
            child = np.where(mask, parent_a, parent_b)
        else:
            child = parent_a.copy()
        mutate = self.rng.random(self.dimension) < self.config.mutation_rate
        noise = self.rng.normal(0.0, self.config.sigma, self.dimension)
        return np.clip(child + mutate * noise, self.low, self.high)

    def step(self):
        child = self.offspring()
        value = float(self.fitness_fn(child))
        self.evaluations += 1
        best = self.best_index
        candidates = np.delete(np.arange(self.config.population), best)
        worst = int(candidates[np.argmin(self.fitness[candidates])])
        self.population[worst] = child
        self.fitness[worst] = value

    def _record(self):
        genome, best_fitness = self.best
        record = GenerationRecord(
            generation=self.generation,
            evaluations=self.evaluations,
            best_fitness=best_fitness,
            mean_fitness=float(np.mean(self.fitness)),
            best_genome=tuple(float(value) for value in genome),
            wall_clock=time.monotonic() - self._started,
        )
        self.log.append(record)
        logger.info(
            f"generation {record.generation}: best {record.best_fitness:.6g}, "
            f"mean {record.mean_fitness:.6g}, evaluations {record.evaluations}"
        )
        log_event(
            "generation",
            generation=record.generation,
            evaluations=record.evaluations,
            best_fitness=record.best_fitness,
            mean_fitness=record.mean_fitness,
        )
        if self.on_generation is not None:
            self.on_generation(record)

    def run(self, budget: Optional[int] = None) -> Tuple[np.ndarray, GenerationLog]:
        budget = self.config.budget if budget is None else budget
        if self.population is None:
            self.initialize()
        while self.generation < budget:
            for _ in range(self.config.population):
                self.step()
            self.generation += 1
            self._record()
            if self.checkpoint_path is not None and self.generation % self.config.checkpoint_every == 0:
                self.save(self.checkpoint_path)
        if self.checkpoint_path is not None:
            self.save(self.checkpoint_path)
        genome, value = self.best
        logger.success(f"GA finished after {self.generation} generations: best fitness {value:.6g}")
        return genome, self.log

    def state(self) -> dict:
        return {
            "version": __version__,
            "config": self.config.echo(),
            "generation": self.generation,
            "evaluations": self.evaluations,
            "population": self.population.tolist(),
            "fitness": self.fitness.tolist(),
            "rng": self.rng.bit_generator.state,
            "log": [asdict(record) for record in self.log.records],
        }

    def save(self, path: Path):
        save_checkpoint(path, self.state())

    def restore(self, state: dict):
        try:
            population = np.array(state["population"], dtype=float)
            fitness = np.array(state["fitness"], dtype=float)
            rng_state = state["rng"]
            records = [
                GenerationRecord(**{**record, "best_genome": tuple(record["best_genome"])})
                for record in state["log"]
            ]
            generation = int(state["generation"])
            evaluations = int(state["evaluations"])
        except (KeyError, TypeError, ValueError) as e:
            raise CheckpointError(f"incomplete checkpoint payload: {e}", module="ga_optimizer")

        if population.shape != (self.config.population, self.dimension):
            raise CheckpointError(
                f"checkpoint population {population.shape} does not match "
                f"{(self.config.population, self.dimension)}",
                module="ga_optimizer",
            )
        self.rng.bit_generator.state = rng_state
        self.population = population
        self.fitness = fitness
        self.generation = generation
        self.evaluations = evaluations
        self.log = GenerationLog(records)
        logger.info(f"Resumed GA at generation {generation} ({evaluations} evaluations)")


def evolve(
    config: GaConfig,
    fitness_fn: FitnessFn,
    bounds: Tuple[np.ndarray, np.ndarray],
    initial_population: Optional[Sequence[Sequence[float]]] = None,
    workers: int = 1,
    checkpoint_path: Optional[Path] = None,
    resume: bool = False,
    on_generation: Optional[Callable[[GenerationRecord], None]] = None,
) -> Tuple[np.ndarray, GenerationLog]:
    """Best genome and per-generation log after `config.budget` generations.

    With `resume`, the state in `checkpoint_path` is continued up to the budget of
    `config`, which may exceed the budget the checkpoint was written with.
    """
    ga = SteadyStateGA(config, fitness_fn, bounds, workers, checkpoint_path, on_generation)
    if resume:
        if checkpoint_path is None:
            raise CheckpointError("resume requested without a checkpoint path", module="ga_optimizer")
        ga.restore(load_checkpoint(checkpoint_path))
    else:
        ga.initialize(initial_population)
    return ga.run()
