# The MIT License (MIT)
# Copyright © 2024 pbgcavity developers
# Copyright © 2025 pbgcavity contributors

# Permission is hereby granted, free of charge, to any person obtaining a copy of this software and associated
# documentation files (the “Software”), to deal in the Software without restriction, including without limitation
# the rights to use, copy, modify, merge, publish, distribute, sublicense, and/or sell copies of the Software,
# and to permit persons to whom the Software is furnished to do so, subject to the following conditions:

# The above copyright notice and this permission notice shall be included in all copies or substantial portions of
# the Software.

# THE SOFTWARE IS PROVIDED “AS IS”, WITHOUT WARRANTY OF ANY KIND, EXPRESS OR IMPLIED, INCLUDING BUT NOT LIMITED TO
# THE WARRANTIES OF MERCHANTABILITY, FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL
# THE AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER LIABILITY, WHETHER IN AN ACTION
# OF CONTRACT, TORT OR OTHERWISE, ARISING FROM, OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER
# DEALINGS IN THE SOFTWARE.
from dataclasses import dataclass
from enum import Enum


class Command(Enum):
    bands = "bands"
    invert2d = "invert2d"
    planar_scan = "planar-scan"
    ga_opt = "ga-opt"


@dataclass(frozen=True)
class DefaultSolverConfig:
    """Plane-wave expansion defaults.
    Note: n_q = n_g keeps the inversion system square.
    """

    n_g: int = 61
    n_q: int = 61
    n_bands: int = 8
    path_resolution: int = 16
    polarization: str = "TE"


@dataclass(frozen=True)
class DefaultObjectiveConfig:
    """Cost functional and inversion defaults."""

    beta_I: float = 1.0
    beta_V: float = 1.0
    q_min: float = 1e-3
    gamma_penalty: float = 1e6
    # Side of the square evaluation domain, in units of a
    domain: float = 10.0
    layers: int = 5
    resolution: int = 32
    contour_resolution: int = 64
    weight_budget: int = 30
    svd_tolerance: float = 1e-8
    selector: str = "smallest_eigenvalue"


@dataclass(frozen=True)
class DefaultSlabConfig:
    """Planar slab defaults."""

    thickness: float = 0.75
    layers: int = 8
    mesh: int = 12
    padding: float = 5.0
    modes: int = 40
    incidence: str = "edge"
    polarization: str = "TE"
    n_points: int = 41
    refinement_levels: int = 3
    min_depth: float = 0.01


@dataclass(frozen=True)
class DefaultGaConfig:
    """Steady-state genetic algorithm defaults.
    Note: the rates are per offspring, sigma is in units of a.
    """

    population: int = 10
    mutation_rate: float = 0.15
    crossover_rate: float = 0.85
    sigma: float = 0.02
    budget: int = 27
    checkpoint_every: int = 1
    clearance: float = 0.02
