import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np

from pbgcavity.bulk_solver import Polarization
from pbgcavity.config import DefaultSlabConfig
from pbgcavity.errors import ConfigError
from pbgcavity.lattice import SQRT3, LatticeSpec

DEFAULTS = DefaultSlabConfig()


class Incidence(Enum):
    vertical = "vertical"
    edge = "edge"


class IlluminationSide(Enum):
    near = "near"
    far = "far"


@dataclass(frozen=True)
class HoleOverride:
    """Per-site hole change; `major` is the ŷ semi-axis and `minor` the x̂ semi-axis.

    A zero axis fills the hole.
    """

    site: Tuple[int, int]
    dx: float = 0.0
    dy: float = 0.0
    major: Optional[float] = None
    minor: Optional[float] = None


@dataclass(frozen=True)
class EllipticHole:
    center: Tuple[float, float]
    semi_x: float
    semi_y: float


@dataclass(frozen=True)
class SlabSpec:
    lattice: LatticeSpec = field(default_factory=LatticeSpec)
    thickness: float = DEFAULTS.thickness
    layers: int = DEFAULTS.layers
    hole_geometry: Tuple[HoleOverride, ...] = ()
    mesh: int = DEFAULTS.mesh
    padding: float = DEFAULTS.padding
    modes: Optional[int] = DEFAULTS.modes
    incidence: Incidence = Incidence.edge
    polarization: Polarization = Polarization.TE
    subsamples: int = 3

    def __post_init__(self):
        errors = []
        if self.thickness <= 0:
            errors.append(f"thickness must be positive, got {self.thickness}")
        if self.layers < 1:
            errors.append(f"layers must be >= 1, got {self.layers}")
        if self.mesh < 2:
            errors.append(f"mesh must be >= 2 cells per a, got {self.mesh}")
        if self.padding < 1:
            errors.append(f"padding must be >= 1, got {self.padding}")
        if self.modes is not None and self.modes < 1:
            errors.append(f"modes must be >= 1, got {self.modes}")
        if self.subsamples < 1:
            errors.append(f"subsamples must be >= 1, got {self.subsamples}")
        if errors:
            raise ConfigError(errors, module="planar_solver")

    @property
    def cell_size(self) -> Tuple[float, float]:
        """Lx (sites across x) and Ly (periodic rectangle of height √3 per two rows)."""
        return float(2 * self.layers + 1), float((self.layers + 1) * SQRT3)

    @property
    def periodic_x(self) -> bool:
        return self.incidence is Incidence.vertical

    def overrides(self) -> Dict[Tuple[int, int], HoleOverride]:
        return {tuple(override.site): override for override in self.hole_geometry}

    def with_overrides(self, overrides) -> "SlabSpec":
        return SlabSpec(
            lattice=self.lattice,
            thickness=self.thickness,
            layers=self.layers,
            hole_geometry=tuple(overrides),
            mesh=self.mesh,
            padding=self.padding,
            modes=self.modes,
            incidence=self.incidence,
            polarization=self.polarization,
            subsamples=self.subsamples,
        )


def lattice_sites(spec: SlabSpec) -> List[Tuple[Tuple[int, int], np.ndarray]]:
    """Sites (m, n) with nominal positions inside the half-open supercell."""
    lx, ly = spec.cell_size
    a = spec.lattice.primitive_vectors
    reach = int(math.ceil(max(lx, ly))) + 2
    sites = []
    for m in range(-2 * reach, 2 * reach + 1):
        for n in range(-reach, reach + 1):
            position = m * a[0] + n * a[1]
            if -lx / 2 <= position[0] < lx / 2 and -ly / 2 <= position[1] < ly / 2:
                sites.append(((m, n), position))
    sites.sort(key=lambda item: (item[1][1], item[1][0]))
    return sites


def slab_holes(spec: SlabSpec) -> List[EllipticHole]:
    overrides = spec.overrides()
    radius = spec.lattice.hole_radius
    holes = []
    for site, position in lattice_sites(spec):
        override = overrides.get(site)
        if override is None:
            holes.append(EllipticHole(tuple(position), radius, radius))
            continue
        semi_x = radius if override.minor is None else override.minor
        semi_y = radius if override.major is None else override.major
        if semi_x <= 0 or semi_y <= 0:
            continue
        center = (position[0] + override.dx, position[1] + override.dy)
        holes.append(EllipticHole(center, semi_x, semi_y))
    return holes


def rasterize_slab(spec: SlabSpec) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """In-plane permittivity of the patterned slab on the cell-centred mesh.

    Returns x and y pixel centres and ε with shape (nx, ny); pixels average ε over
    `subsamples`² sub-points.
    """
    lx, ly = spec.cell_size
    nx = max(1, int(round(lx * spec.mesh)))
    ny = max(1, int(round(ly * spec.mesh)))
    hx, hy = lx / nx, ly / ny
    sub = spec.subsamples

    fine_x = -lx / 2 + (np.arange(nx * sub) + 0.5) * hx / sub
    fine_y = -ly / 2 + (np.arange(ny * sub) + 0.5) * hy / sub
    inside = np.zeros((len(fine_x), len(fine_y)), dtype=bool)

    for hole in slab_holes(spec):
        dx = fine_x - hole.center[0]
        if spec.periodic_x:
            dx = dx - lx * np.round(dx / lx)
        dy = fine_y - hole.center[1]
        dy = dy - ly * np.round(dy / ly)
        inside |= (dx[:, None] / hole.semi_x) ** 2 + (dy[None, :] / hole.semi_y) ** 2 <= 1.0

    eps_bulk = spec.lattice.bulk_index**2
    eps_hole = spec.lattice.hole_index**2
    fine = np.where(inside, eps_hole, eps_bulk)
    eps = fine.reshape(nx, sub, ny, sub).mean(axis=(1, 3))

    x = -lx / 2 + (np.arange(nx) + 0.5) * hx
    y = -ly / 2 + (np.arange(ny) + 0.5) * hy
    return x, y, eps
