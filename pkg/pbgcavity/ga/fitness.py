import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from pbgcavity.config import DefaultGaConfig, DefaultSlabConfig
from pbgcavity.errors import PbgCavityError
from pbgcavity.ga.genome import SlabGenome, decode_genome, repair_genome
from pbgcavity.objective import CostWeights
from pbgcavity.planar.resonance import extract_q
from pbgcavity.planar.slab import SlabSpec
from pbgcavity.planar.solver import scan_reflection, simulate
from pbgcavity.planar.volume import mode_volume_3d

GA_DEFAULTS = DefaultGaConfig()
SLAB_DEFAULTS = DefaultSlabConfig()
SENTINEL = -1e12


class FitnessModelType(Enum):
    planar = "planar"
    surrogate = "surrogate"


@dataclass(frozen=True)
class PlanarFigures:
    omega0: float
    q: float
    intensity: float
    volume: float
    fitness: float


class BaseFitnessModel(ABC):
    """Pure genome → fitness map; failures score the sentinel instead of raising."""

    def __init__(self, sites: Sequence[Tuple[int, int]]):
        self.sites = tuple(map(tuple, sites))

    @property
    @abstractmethod
    def name(self) -> str: ...

    def __str__(self) -> str:
        return str(self.name)

    def __repr__(self) -> str:
        return str(self.name)

    @abstractmethod
    def evaluate(self, genome: SlabGenome) -> float: ...

    def __call__(self, flat: np.ndarray) -> float:
        genome = SlabGenome.from_flat(flat, self.sites)
        try:
            value = float(self.evaluate(genome))
        except PbgCavityError as e:
            logger.warning(f"{self.name} fitness failed ({e.module}: {e}); scoring {SENTINEL:g}")
            return SENTINEL
        if not math.isfinite(value):
            logger.warning(f"{self.name} fitness is not finite; scoring {SENTINEL:g}")
            return SENTINEL
        return value


class SurrogateFitnessModel(BaseFitnessModel):
    """−‖g − g*‖² over the per-site parameters, for exercising the search."""

    def __init__(self, target: SlabGenome):
        super().__init__(target.sites)
        self.target = target.as_dict()

    @property
    def name(self) -> str:
        return FitnessModelType.surrogate.value

    def evaluate(self, genome: SlabGenome) -> float:
        return -float(sum(np.sum((row - self.target[site]) ** 2) for site, row in genome.as_dict().items()))


class PlanarFitnessModel(BaseFitnessModel):
    """J = Q + β_I·I − β_V·V of the strongest in-band resonance of the repaired geometry.

    I is the centre intensity relative to the field maximum and V the interior mode
    volume in units of λ³.
    """

    def __init__(
        self,
        slab: SlabSpec,
        weights: CostWeights,
        omega_range: Tuple[float, float],
        sites: Sequence[Tuple[int, int]],
        n_points: int = SLAB_DEFAULTS.n_points,
        refinement_levels: int = SLAB_DEFAULTS.refinement_levels,
        min_depth: float = SLAB_DEFAULTS.min_depth,
        clearance: float = GA_DEFAULTS.clearance,
        workers: int = 1,
    ):
        super().__init__(sites)
        self.slab = slab
        self.weights = weights
        self.omega_range = omega_range
        self.n_points = n_points
        self.refinement_levels = refinement_levels
        self.min_depth = min_depth
        self.clearance = clearance
        self.workers = workers

    @property
    def name(self) -> str:
        return FitnessModelType.planar.value

    def interior(self) -> Tuple[Tuple[float, float], ...]:
        lx, ly = self.slab.cell_size
        half_height = 0.5 * self.slab.thickness + 0.5 * self.slab.padding
        return (-0.5 * lx, 0.5 * lx), (-0.5 * ly, 0.5 * ly), (-half_height, half_height)

    def figures(self, genome: SlabGenome) -> PlanarFigures:
        repaired = repair_genome(genome, self.slab.lattice, self.clearance)
        spec = self.slab.with_overrides(decode_genome(repaired))
        spectrum = scan_reflection(
            spec,
            self.omega_range,
            self.n_points,
            refinement_levels=self.refinement_levels,
            min_depth=self.min_depth,
            workers=self.workers,
        )
        resonance = extract_q(spectrum, self.min_depth)
        field = simulate(spec, resonance.omega0).field.crop(self.interior())
        peak = field.max_abs**2
        intensity = abs(field.value_at((0.0, 0.0, 0.0))) ** 2 / peak if peak > 0 else 0.0
        volume = mode_volume_3d(field) * resonance.omega0**3
        fitness = resonance.q + self.weights.beta_I * intensity - self.weights.beta_V * volume
        logger.debug(
            f"ω0={resonance.omega0:.6f}, Q={resonance.q:.4g}, I={intensity:.4f}, V={volume:.4f} λ³, J={fitness:.6g}"
        )
        return PlanarFigures(
            omega0=resonance.omega0, q=resonance.q, intensity=intensity, volume=volume, fitness=fitness
        )

    def evaluate(self, genome: SlabGenome) -> float:
        return self.figures(genome).fitness


def get_fitness_model(
    model_type: FitnessModelType, target: Optional[SlabGenome] = None, **kwargs
) -> BaseFitnessModel:
    if model_type is FitnessModelType.surrogate:
        return SurrogateFitnessModel(target)
    return PlanarFitnessModel(**kwargs)
