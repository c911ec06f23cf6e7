"""Per-site hole parameters of the planar cavity and their decoding into slab overrides.

Each of the 13 parameterized sites carries [dx, dy, major, minor]: the offset from the
nominal lattice site and the ŷ and x̂ semi-axes.
"""

import math
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from pbgcavity.config import DefaultGaConfig
from pbgcavity.errors import ConfigError
from pbgcavity.lattice import LatticeSpec
from pbgcavity.planar.slab import HoleOverride

DEFAULTS = DefaultGaConfig()
GENES_PER_SITE = 4
OFFSET_LIMIT = 0.25
AXIS_RANGE = (0.05, 0.45)
NEIGHBOUR_REACH = 2.5
MAX_REPAIR_PASSES = 100

Site = Tuple[int, int]


def default_sites() -> List[Site]:
    """The cavity, its six nearest neighbours and three sites each way along x̂."""
    return [
        (0, 0),
        (1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1),
        (2, 0), (-2, 0), (3, 0), (-3, 0), (4, 0), (-4, 0),
    ]


@dataclass(frozen=True, eq=False)
class SlabGenome:
    values: np.ndarray
    sites: Tuple[Site, ...]

    def __post_init__(self):
        if self.values.shape != (len(self.sites), GENES_PER_SITE):
            raise ConfigError(
                [f"genome shape {self.values.shape} does not match {len(self.sites)} sites"],
                module="ga_optimizer",
            )

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel().copy()

    @classmethod
    def from_flat(cls, flat: Sequence[float], sites: Sequence[Site]) -> "SlabGenome":
        return cls(np.asarray(flat, dtype=float).reshape(len(sites), GENES_PER_SITE), tuple(map(tuple, sites)))

    @classmethod
    def nominal(cls, spec: LatticeSpec, sites: Sequence[Site] = None) -> "SlabGenome":
        """The unperturbed bulk lattice."""
        sites = tuple(map(tuple, sites or default_sites()))
        values = np.zeros((len(sites), GENES_PER_SITE))
        values[:, 2:] = spec.hole_radius
        return cls(values, sites)

    def as_dict(self) -> Dict[Site, np.ndarray]:
        return {site: row for site, row in zip(self.sites, self.values)}


def genome_bounds(sites: Sequence[Site] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Flat lower and upper bounds."""
    count = len(sites or default_sites())
    low = np.tile([-OFFSET_LIMIT, -OFFSET_LIMIT, AXIS_RANGE[0], AXIS_RANGE[0]], count)
    high = np.tile([OFFSET_LIMIT, OFFSET_LIMIT, AXIS_RANGE[1], AXIS_RANGE[1]], count)
    return low, high


def _support(semi_x: float, semi_y: float, direction: np.ndarray) -> float:
    return math.hypot(semi_x * direction[0], semi_y * direction[1])


def _fixed_neighbours(spec: LatticeSpec, sites: Sequence[Site]) -> List[np.ndarray]:
    own = set(sites)
    reach = int(math.ceil(NEIGHBOUR_REACH)) + 1
    found = {}
    for m, n in sites:
        for dm in range(-reach, reach + 1):
            for dn in range(-reach, reach + 1):
                site = (m + dm, n + dn)
                if site in own or site in found:
                    continue
                offset = spec.site_position(dm, dn)
                if np.linalg.norm(offset) <= NEIGHBOUR_REACH:
                    found[site] = spec.site_position(*site)
    return [found[site] for site in sorted(found)]


def repair_genome(
    genome: SlabGenome, spec: LatticeSpec, clearance: float = DEFAULTS.clearance
) -> SlabGenome:
    """Clip to bounds, then shrink overlapping holes proportionally until every pair is
    separated by `clearance` along the line between their centres.

    Separation uses the ellipse support function, so a repaired pair is disjoint.
    """
    low, high = genome_bounds(genome.sites)
    values = np.clip(genome.flat, low, high).reshape(genome.values.shape)
    centers = np.array([spec.site_position(*site) for site in genome.sites]) + values[:, :2]
    fixed = _fixed_neighbours(spec, genome.sites)
    radius = spec.hole_radius

    for _ in range(MAX_REPAIR_PASSES):
        changed = False
        for i in range(len(values)):
            for center in fixed:
                delta = center - centers[i]
                distance = float(np.linalg.norm(delta))
                direction = delta / distance
                own = _support(values[i, 3], values[i, 2], direction)
                if own + radius + clearance > distance:
                    factor = max(distance - clearance - radius, 0.0) / own * (1 - 1e-9)
                    values[i, 2:] = np.maximum(values[i, 2:] * factor, AXIS_RANGE[0])
                    changed = True
            for j in range(i + 1, len(values)):
                delta = centers[j] - centers[i]
                distance = float(np.linalg.norm(delta))
                direction = delta / distance
                reach = _support(values[i, 3], values[i, 2], direction) + _support(values[j, 3], values[j, 2], direction)
                if reach + clearance > distance:
                    factor = max(distance - clearance, 0.0) / reach * (1 - 1e-9)
                    values[i, 2:] = np.maximum(values[i, 2:] * factor, AXIS_RANGE[0])
                    values[j, 2:] = np.maximum(values[j, 2:] * factor, AXIS_RANGE[0])
                    changed = True
        if not changed:
            break
    return SlabGenome(values, genome.sites)


def decode_genome(genome: SlabGenome) -> List[HoleOverride]:
    return [
        HoleOverride(site=site, dx=float(row[0]), dy=float(row[1]), major=float(row[2]), minor=float(row[3]))
        for site, row in zip(genome.sites, genome.values)
    ]
