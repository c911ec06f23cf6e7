"""Stationary fields and reflection spectra of the finite-thickness slab.

Vertical incidence stacks slices along z over the periodic in-plane supercell.
Edge incidence stacks one slice per mesh column along x over a (y, z)
cross-section, with graded absorbers in the outer half of the vertical padding,
and launches the fundamental mode of the unpatterned slab.
"""

import math
from dataclasses import dataclass
from functools import partial
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy.signal import find_peaks

from pbgcavity.bulk_solver import Polarization
from pbgcavity.errors import MeshError, SolverError
from pbgcavity.planar.slab import IlluminationSide, Incidence, SlabSpec, rasterize_slab
from pbgcavity.planar.smatrix import (
    Slice,
    SliceModes,
    cascade,
    interface_amplitudes,
    make_slice,
    slice_field,
    transverse_modes,
)
from pbgcavity.utils import thread_map

MIN_CELLS_PER_WAVELENGTH = 4
RECOMMENDED_MESH = 8
ABSORBER_REFLECTION = 1e-6
PROPAGATING_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class FieldGrid3D:
    """Field samples on a rectilinear grid; `values` has shape (len(x), len(y), len(z))."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    values: np.ndarray
    component: str = "E"

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.values.shape

    @property
    def max_abs(self) -> float:
        return float(np.abs(self.values).max()) if self.values.size else 0.0

    def crop(self, interior: Sequence[Tuple[float, float]]) -> "FieldGrid3D":
        masks = [
            (axis >= low - 1e-12) & (axis <= high + 1e-12)
            for axis, (low, high) in zip((self.x, self.y, self.z), interior)
        ]
        return FieldGrid3D(
            x=self.x[masks[0]],
            y=self.y[masks[1]],
            z=self.z[masks[2]],
            values=self.values[np.ix_(*masks)],
            component=self.component,
        )

    def value_at(self, point: Sequence[float]) -> complex:
        ix, iy, iz = (int(np.argmin(np.abs(axis - p))) for axis, p in zip((self.x, self.y, self.z), point))
        return complex(self.values[ix, iy, iz])


class Simulation(NamedTuple):
    reflectance: float
    transmittance: float
    field: Optional[FieldGrid3D]


@dataclass(frozen=True, eq=False)
class ReflectionSpectrum:
    frequencies: np.ndarray
    reflectance: np.ndarray
    transmittance: np.ndarray

    def __post_init__(self):
        if len(self.frequencies) > 1 and np.any(np.diff(self.frequencies) <= 0):
            raise SolverError("spectrum frequencies must be strictly increasing", module="planar_solver")
        for name in ("reflectance", "transmittance"):
            values = getattr(self, name)
            if np.any(values < -1e-6) or np.any(values > 1 + 1e-6):
                raise SolverError(f"{name} left [0, 1]", module="planar_solver")

    @property
    def size(self) -> int:
        return len(self.frequencies)

    def csv_rows(self) -> Tuple[List[str], List[list]]:
        header = ["omega", "R", "T"]
        rows = [list(row) for row in zip(self.frequencies, self.reflectance, self.transmittance)]
        return header, rows


def check_mesh(spec: SlabSpec, omega: float):
    """MeshError when a material wavelength spans fewer than four cells."""
    if omega <= 0:
        raise SolverError(f"omega must be positive, got {omega}", module="planar_solver")
    n_max = max(spec.lattice.bulk_index, spec.lattice.hole_index)
    cells = spec.mesh / (omega * n_max)
    if cells < MIN_CELLS_PER_WAVELENGTH:
        raise MeshError(
            f"mesh {spec.mesh}/a resolves λ/n with {cells:.2f} cells at ω={omega:g}",
            module="planar_solver",
        )
    if spec.mesh < RECOMMENDED_MESH:
        logger.warning(f"mesh {spec.mesh}/a is below {RECOMMENDED_MESH} cells/a; results are exploratory")


def thin_film_reflectance(n: float, d: float, omega):
    """Airy reflectance of a free-standing film of index n and thickness d at normal incidence."""
    r = (1.0 - n) / (1.0 + n)
    phase = np.exp(2j * (2.0 * math.pi * n * d * np.asarray(omega, dtype=float)))
    return np.abs(r * (1.0 - phase) / (1.0 - r**2 * phase)) ** 2


def _samples(thickness: float, mesh: int) -> np.ndarray:
    count = max(1, int(round(thickness * mesh)))
    return (np.arange(count) + 0.5) * thickness / count


def _propagating_flux(beta: np.ndarray, amplitudes: np.ndarray) -> float:
    propagating = np.abs(beta.imag) <= PROPAGATING_TOLERANCE * np.abs(beta)
    return float(np.sum(beta.real[propagating] * np.abs(amplitudes[propagating]) ** 2))


class _ModeCache:
    """Transverse eigenmodes keyed by the slice permittivity."""

    def __init__(self, steps, k0, pol, periodic, count=None):
        self.steps = steps
        self.count = count
        self.k0 = k0
        self.pol = pol
        self.periodic = periodic
        self._modes: Dict[bytes, SliceModes] = {}

    def __call__(self, eps: np.ndarray) -> SliceModes:
        key = eps.tobytes()
        if key not in self._modes:
            self._modes[key] = transverse_modes(eps, self.steps, self.k0, self.pol, self.periodic, self.count)
        return self._modes[key]

    def __len__(self):
        return len(self._modes)


def _fields(
    slices: List[Slice],
    incident: np.ndarray,
    side: IlluminationSide,
    positions: List[np.ndarray],
) -> np.ndarray:
    amplitudes = interface_amplitudes(slices, incident, from_far_side=side is IlluminationSide.far)
    blocks = [
        slice_field(layer, amplitudes[j], amplitudes[j + 1], positions[j])
        for j, layer in enumerate(slices)
    ]
    return np.concatenate(blocks, axis=1)


def _simulate_vertical(spec: SlabSpec, omega: float, side: IlluminationSide, fields: bool) -> Simulation:
    k0 = 2.0 * math.pi * omega
    x, y, eps = rasterize_slab(spec)
    steps = (x[1] - x[0] if len(x) > 1 else spec.cell_size[0], y[1] - y[0] if len(y) > 1 else spec.cell_size[1])
    modes = _ModeCache(steps, k0, spec.polarization, (True, True), spec.modes)

    air = modes(np.ones_like(eps))
    slab = modes(eps.astype(float))
    thicknesses = (spec.padding, spec.thickness, spec.padding)
    slices = [
        make_slice(air, air, spec.padding),
        make_slice(slab, air, spec.thickness),
        make_slice(air, air, spec.padding),
    ]
    total = cascade(slices)

    incident = air.coefficients(np.ones(air.W.shape[0], dtype=complex))
    if side is IlluminationSide.near:
        reflected, transmitted = total.S11 @ incident, total.S21 @ incident
    else:
        reflected, transmitted = total.S22 @ incident, total.S12 @ incident
    power = _propagating_flux(air.beta, incident)
    reflectance = _propagating_flux(air.beta, reflected) / power
    transmittance = _propagating_flux(air.beta, transmitted) / power

    field = None
    if fields:
        positions = [_samples(t, spec.mesh) for t in thicknesses]
        values = _fields(slices, incident, side, positions)
        origin = -(spec.padding + 0.5 * spec.thickness)
        offsets = np.cumsum((0.0,) + thicknesses[:-1])
        z = np.concatenate([origin + offset + p for offset, p in zip(offsets, positions)])
        field = FieldGrid3D(
            x=x, y=y, z=z,
            values=values.reshape(len(x), len(y), len(z)),
            component="E" if spec.polarization is Polarization.TE else "H",
        )
    return Simulation(reflectance, transmittance, field)


def _vertical_profile(spec: SlabSpec, k0: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """z cell centres, slab filling per cell and the absorber's imaginary permittivity."""
    height = spec.thickness + 2.0 * spec.padding
    nz = max(1, int(round(height * spec.mesh)))
    hz = height / nz
    z = -0.5 * height + (np.arange(nz) + 0.5) * hz
    lower = np.clip(z - 0.5 * hz, -0.5 * spec.thickness, 0.5 * spec.thickness)
    upper = np.clip(z + 0.5 * hz, -0.5 * spec.thickness, 0.5 * spec.thickness)
    filling = (upper - lower) / hz

    absorber_length = 0.5 * spec.padding
    start = 0.5 * spec.thickness + spec.padding - absorber_length
    depth = np.clip((np.abs(z) - start) / absorber_length, 0.0, 1.0)
    kappa = 3.0 * math.log(1.0 / ABSORBER_REFLECTION) / (k0 * absorber_length)
    return z, filling, kappa * depth**2


def _simulate_edge(spec: SlabSpec, omega: float, side: IlluminationSide, fields: bool) -> Simulation:
    k0 = 2.0 * math.pi * omega
    x, y, eps = rasterize_slab(spec)
    z, filling, absorber = _vertical_profile(spec, k0)
    hx = spec.cell_size[0] / len(x)
    steps = (y[1] - y[0] if len(y) > 1 else spec.cell_size[1], z[1] - z[0] if len(z) > 1 else 1.0)
    modes = _ModeCache(steps, k0, spec.polarization, (True, False), spec.modes)

    def cross_section(column: np.ndarray) -> np.ndarray:
        real = 1.0 + (column[:, None] - 1.0) * filling[None, :]
        return real + 1j * absorber[None, :]

    gap_column = np.full(len(y), spec.lattice.bulk_index**2)
    gap = modes(cross_section(gap_column))

    runs: List[Tuple[int, int]] = []
    for i in range(len(x)):
        if runs and np.array_equal(eps[i], eps[runs[-1][0]]):
            runs[-1] = (runs[-1][0], runs[-1][1] + 1)
        else:
            runs.append((i, 1))
    slices = [make_slice(modes(cross_section(eps[i])), gap, count * hx) for i, count in runs]
    logger.debug(f"Edge stack: {len(slices)} slices, {len(modes)} distinct cross-sections at ω={omega:.6f}")
    total = cascade(slices)

    fundamental = int(np.argmax(gap.beta.real))
    incident = np.zeros(gap.size, dtype=complex)
    incident[fundamental] = 1.0
    if side is IlluminationSide.near:
        reflected, transmitted = total.S11 @ incident, total.S21 @ incident
    else:
        reflected, transmitted = total.S22 @ incident, total.S12 @ incident
    reflectance = float(abs(reflected[fundamental]) ** 2)
    transmittance = float(abs(transmitted[fundamental]) ** 2)

    field = None
    if fields:
        positions = [(np.arange(count) + 0.5) * hx for _, count in runs]
        values = _fields(slices, incident, side, positions)
        field = FieldGrid3D(
            x=x, y=y, z=z,
            values=values.reshape(len(y), len(z), len(x)).transpose(2, 0, 1),
            component="E" if spec.polarization is Polarization.TE else "H",
        )
    return Simulation(min(reflectance, 1.0), min(transmittance, 1.0), field)


def simulate(
    spec: SlabSpec,
    omega: float,
    illuminate_from: IlluminationSide = IlluminationSide.near,
    fields: bool = True,
) -> Simulation:
    """Reflectance, transmittance and (optionally) the interior field at frequency `omega` (a/λ)."""
    check_mesh(spec, omega)
    if spec.incidence is Incidence.vertical:
        result = _simulate_vertical(spec, omega, illuminate_from, fields)
    else:
        result = _simulate_edge(spec, omega, illuminate_from, fields)
    logger.debug(f"ω={omega:.6f}: R={result.reflectance:.6f}, T={result.transmittance:.6f}")
    return result


def _features(values: np.ndarray, min_depth: float) -> np.ndarray:
    deviation = values - np.median(values)
    peaks_up, _ = find_peaks(deviation, prominence=min_depth)
    peaks_down, _ = find_peaks(-deviation, prominence=min_depth)
    return np.union1d(peaks_up, peaks_down)


def scan_reflection(
    spec: SlabSpec,
    omega_range: Tuple[float, float],
    n_points: int,
    refinement_levels: int = 3,
    min_depth: float = 0.01,
    points_per_feature: int = 8,
    workers: int = 1,
    illuminate_from: IlluminationSide = IlluminationSide.near,
    simulator: Optional[Callable[[float], Simulation]] = None,
) -> ReflectionSpectrum:
    """R(ω) on a uniform grid, refined `refinement_levels` times around every detected feature.

    Each refinement fills the interval between the neighbours of a feature with
    `points_per_feature` new frequencies.
    """
    low, high = omega_range
    if not 0 < low < high:
        raise SolverError(f"invalid frequency range {omega_range}", module="planar_solver")
    if n_points < 3:
        raise SolverError(f"n_points must be >= 3, got {n_points}", module="planar_solver")
    if simulator is None:
        simulator = partial(simulate, spec, illuminate_from=illuminate_from, fields=False)

    def evaluate(frequencies: np.ndarray) -> Dict[float, Tuple[float, float]]:
        results = thread_map(simulator, list(frequencies), workers)
        return {float(w): (r.reflectance, r.transmittance) for w, r in zip(frequencies, results)}

    samples = evaluate(np.linspace(low, high, n_points))
    for level in range(refinement_levels):
        frequencies = np.array(sorted(samples))
        reflectance = np.array([samples[w][0] for w in frequencies])
        features = _features(reflectance, min_depth)
        if features.size == 0:
            logger.debug(f"Refinement level {level + 1}: no features above depth {min_depth:g}")
            break
        added = []
        for index in features:
            left = frequencies[max(index - 1, 0)]
            right = frequencies[min(index + 1, len(frequencies) - 1)]
            for w in np.linspace(left, right, points_per_feature + 2)[1:-1]:
                if not np.any(np.isclose(w, frequencies, rtol=0.0, atol=1e-12)):
                    added.append(w)
        if not added:
            break
        logger.debug(f"Refinement level {level + 1}: {len(features)} features, {len(added)} new points")
        samples.update(evaluate(np.unique(added)))

    frequencies = np.array(sorted(samples))
    return ReflectionSpectrum(
        frequencies=frequencies,
        reflectance=np.array([samples[w][0] for w in frequencies]),
        transmittance=np.array([samples[w][1] for w in frequencies]),
    )
