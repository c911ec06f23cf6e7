import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy.special import j1

from pbgcavity.bulk_solver import (
    BandGap,
    BulkModeSet,
    Polarization,
    clamp_eigenvalues,
    fix_phase,
    hermitian_eigh,
    omega_from_eigenvalue,
    wavevector_kernel,
)
from pbgcavity.errors import MissingCoefficientError, NoInGapModeError, SolverError
from pbgcavity.lattice import IndexTable, LatticeSpec, is_below_light_line

POINT_CHUNK = 4096
# Relative margin that keeps bulk band edges out of the gap
GAP_MARGIN = 1e-9


@dataclass(frozen=True)
class PlantedHole:
    """Elliptic region whose reciprocal dielectric changes by `delta_eta`."""

    center: Tuple[float, float]
    semi_x: float
    semi_y: float
    delta_eta: float
    angle: float = 0.0

    @classmethod
    def filled(cls, spec: LatticeSpec, center=(0.0, 0.0)) -> "PlantedHole":
        radius = spec.hole_radius
        return cls(center=tuple(center), semi_x=radius, semi_y=radius,
                   delta_eta=spec.eta_bulk - spec.eta_hole)

    @classmethod
    def circle(cls, spec: LatticeSpec, radius: float, center=(0.0, 0.0), sign: float = 1.0):
        return cls(center=tuple(center), semi_x=radius, semi_y=radius,
                   delta_eta=sign * (spec.eta_hole - spec.eta_bulk))


@dataclass(frozen=True, eq=False)
class DefectFourier:
    """δη_k on the wavevector grid k = q + G, keyed by fine-lattice integers.

    A wavevector with integer key (I, J) is (I·b1 + J·b2)/divisions. Components
    outside the stored grid are zero (truncated expansion).
    """

    b: np.ndarray
    divisions: int
    indices: np.ndarray
    coefficients: np.ndarray
    _table: IndexTable = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_table", IndexTable(self.indices))

    @property
    def size(self) -> int:
        return len(self.indices)

    @property
    def vectors(self) -> np.ndarray:
        return self.indices @ self.b / self.divisions

    @property
    def supercell_area(self) -> float:
        return self.divisions**2 * (2.0 * math.pi) ** 2 / abs(float(np.linalg.det(self.b)))

    def positions(self, query: np.ndarray) -> np.ndarray:
        return self._table.positions(query)

    def lookup(self, query: np.ndarray) -> np.ndarray:
        positions = self._table.positions(query)
        values = np.zeros(positions.shape, dtype=complex)
        inside = positions >= 0
        values[inside] = self.coefficients[positions[inside]]
        return values

    def negation_map(self) -> np.ndarray:
        return self._table.positions(-self.indices)

    def reality_error(self) -> float:
        partner = self.negation_map()
        valid = partner >= 0
        if not valid.any():
            return 0.0
        return float(
            np.abs(self.coefficients[valid] - np.conj(self.coefficients[partner[valid]])).max()
        )

    def symmetrized(self) -> "DefectFourier":
        partner = self.negation_map()
        values = self.coefficients.copy()
        valid = partner >= 0
        values[valid] = 0.5 * (self.coefficients[valid] + np.conj(self.coefficients[partner[valid]]))
        return replace(self, coefficients=values)

    def check_compatible(self, mode_set: BulkModeSet):
        if self.divisions != mode_set.sampling.divisions or not np.allclose(
            self.b, mode_set.basis.b
        ):
            raise MissingCoefficientError(
                f"defect grid (divisions {self.divisions}) does not match the mode set "
                f"(divisions {mode_set.sampling.divisions})",
                module="defect_model",
            )

    @classmethod
    def zeros(cls, mode_set: BulkModeSet) -> "DefectFourier":
        indices = mode_set.k_indices.reshape(-1, 2)
        return cls(
            b=mode_set.basis.b,
            divisions=mode_set.sampling.divisions,
            indices=indices,
            coefficients=np.zeros(len(indices), dtype=complex),
        )

    @classmethod
    def from_holes(cls, mode_set: BulkModeSet, holes: Sequence[PlantedHole]) -> "DefectFourier":
        """Analytic transform of elliptic index changes, one copy per supercell."""
        empty = cls.zeros(mode_set)
        k = empty.vectors
        area = empty.supercell_area
        values = np.zeros(len(k), dtype=complex)
        for hole in holes:
            u = np.array([math.cos(hole.angle), math.sin(hole.angle)])
            v = np.array([-math.sin(hole.angle), math.cos(hole.angle)])
            rho = np.hypot(hole.semi_x * (k @ u), hole.semi_y * (k @ v))
            shape = np.divide(2.0 * j1(rho), rho, out=np.ones_like(rho), where=rho > 0)
            weight = hole.delta_eta * math.pi * hole.semi_x * hole.semi_y / area
            values += weight * shape * np.exp(-1j * (k @ np.asarray(hole.center, dtype=float)))
        return replace(empty, coefficients=values)

    @classmethod
    def from_real_space(
        cls, mode_set: BulkModeSet, values: np.ndarray, points: np.ndarray, cell_area: float
    ) -> "DefectFourier":
        """Quadrature δη_k = (1/A_s) Σ δη(r) e^{-ik·r} dA over one supercell of samples."""
        empty = cls.zeros(mode_set)
        flat_points = np.asarray(points, dtype=float).reshape(-1, 2)
        flat_values = np.asarray(values, dtype=float).ravel()
        k = empty.vectors
        coefficients = np.zeros(len(k), dtype=complex)
        for start in range(0, len(flat_points), POINT_CHUNK):
            chunk = slice(start, start + POINT_CHUNK)
            phase = np.exp(-1j * (k @ flat_points[chunk].T))
            coefficients += phase @ flat_values[chunk]
        return replace(empty, coefficients=coefficients * cell_area / empty.supercell_area)


@dataclass(frozen=True, eq=False)
class CavityExpansion:
    """Cavity mode as coefficients a_{n,q} over the flat mode index iq·N_b + n."""

    coefficients: np.ndarray
    band_indices: np.ndarray
    q_indices: np.ndarray
    omega_m: Optional[float] = None
    mode_index: int = 0

    @property
    def eigenvalue(self) -> Optional[float]:
        if self.omega_m is None:
            return None
        return (2.0 * math.pi * self.omega_m) ** 2

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.coefficients))

    def normalized(self) -> "CavityExpansion":
        norm = self.norm
        if norm == 0.0:
            raise SolverError("cannot normalize a zero expansion", module="defect_model")
        return replace(self, coefficients=self.coefficients / norm)

    def with_frequency(self, omega_m: float) -> "CavityExpansion":
        return replace(self, omega_m=float(omega_m))

    def light_cone_fraction(self, mode_set: BulkModeSet) -> float:
        """Share of |a|² on bulk modes above the light line."""
        weights = np.abs(self.coefficients) ** 2
        total = weights.sum()
        if total == 0.0:
            return 0.0
        q_points = mode_set.sampling.q_points
        above = np.array([
            not is_below_light_line(q_points[iq], omega)
            for iq, omega in zip(self.q_indices, mode_set.omegas.ravel())
        ])
        return float(weights[above].sum() / total)

    @classmethod
    def from_vector(
        cls,
        mode_set: BulkModeSet,
        vector: np.ndarray,
        omega_m: Optional[float] = None,
        mode_index: int = 0,
    ) -> "CavityExpansion":
        return cls(
            coefficients=np.asarray(vector, dtype=complex),
            band_indices=mode_set.band_labels,
            q_indices=mode_set.q_labels,
            omega_m=omega_m,
            mode_index=mode_index,
        )


@dataclass(frozen=True)
class GridSpec:
    """Cell-centred sampling of a rectangle: x_i = xmin + (i + 1/2)/resolution."""

    extent: Tuple[float, float, float, float]
    resolution: int

    @classmethod
    def centered(cls, half_width: float, resolution: int) -> "GridSpec":
        return cls(extent=(-half_width, half_width, -half_width, half_width), resolution=resolution)

    @property
    def shape(self) -> Tuple[int, int]:
        xmin, xmax, ymin, ymax = self.extent
        return (
            max(1, int(round((ymax - ymin) * self.resolution))),
            max(1, int(round((xmax - xmin) * self.resolution))),
        )

    @property
    def x(self) -> np.ndarray:
        ny, nx = self.shape
        return self.extent[0] + (np.arange(nx) + 0.5) / self.resolution

    @property
    def y(self) -> np.ndarray:
        ny, nx = self.shape
        return self.extent[2] + (np.arange(ny) + 0.5) / self.resolution

    @property
    def cell_area(self) -> float:
        return 1.0 / self.resolution**2

    def points(self) -> np.ndarray:
        """Shape (ny, nx, 2)."""
        xx, yy = np.meshgrid(self.x, self.y)
        return np.stack([xx, yy], axis=-1)


@dataclass(frozen=True, eq=False)
class FieldGrid2D:
    extent: Tuple[float, float, float, float]
    resolution: int
    values: np.ndarray

    @property
    def max_abs(self) -> float:
        return float(np.abs(self.values).max()) if self.values.size else 0.0

    @property
    def peak_intensity(self) -> float:
        return self.max_abs**2

    def normalized(self) -> "FieldGrid2D":
        peak = self.max_abs
        if peak == 0.0:
            raise SolverError("cannot max-one normalize a zero field", module="defect_model")
        return replace(self, values=self.values / peak)

    def grid(self) -> GridSpec:
        return GridSpec(extent=self.extent, resolution=self.resolution)


def plane_wave_coefficients(expansion: CavityExpansion, mode_set: BulkModeSet) -> np.ndarray:
    """c_{q+G} = Σ_n a_{n,q} h_{n,q+G}, shape (N_q, N_G)."""
    a = np.asarray(expansion.coefficients).reshape(mode_set.n_q, mode_set.n_bands)
    return np.einsum("qgn,qn->qg", mode_set.coefficients, a)


def _plane_wave_sum(coefficients: np.ndarray, wavevectors: np.ndarray, points: np.ndarray) -> np.ndarray:
    flat = points.reshape(-1, 2)
    out = np.empty(len(flat), dtype=complex)
    for start in range(0, len(flat), POINT_CHUNK):
        chunk = slice(start, start + POINT_CHUNK)
        out[chunk] = np.exp(1j * (flat[chunk] @ wavevectors.T)) @ coefficients
    return out.reshape(points.shape[:-1])


def assemble_defect_operator(
    mode_set: BulkModeSet, defect: DefectFourier, workers: int = 1
) -> np.ndarray:
    """D = diag(ω²) + U†ΔU with Δ_{kk'} = δη_{k-k'}·(k·k' or |k||k'|)."""
    defect.check_compatible(mode_set)
    k_indices = mode_set.k_indices
    k_vectors = mode_set.wavevectors
    flat_indices = k_indices.reshape(-1, 2)
    flat_vectors = k_vectors.reshape(-1, 2)
    pol = mode_set.polarization

    def row_block(iq: int) -> np.ndarray:
        differences = k_indices[iq][:, None, :] - flat_indices[None, :, :]
        return defect.lookup(differences) * wavevector_kernel(k_vectors[iq], flat_vectors, pol)

    matrix = mode_set.to_mode_basis(row_block, workers)
    matrix[np.diag_indices_from(matrix)] += mode_set.eigenvalues

    asymmetry = float(np.abs(matrix - matrix.conj().T).max())
    if asymmetry > 1e-10 * max(1.0, float(np.abs(matrix).max())):
        logger.warning(f"Defect operator asymmetry {asymmetry:.3e}; is δη real?")
    return 0.5 * (matrix + matrix.conj().T)


def solve_cavity_modes(
    operator: np.ndarray,
    mode_set: BulkModeSet,
    gap: BandGap,
    require: bool = False,
) -> List[CavityExpansion]:
    eigenvalues, vectors = hermitian_eigh(operator, module="defect_model")
    eigenvalues = clamp_eigenvalues(eigenvalues, module="defect_model")
    omegas = omega_from_eigenvalue(eigenvalues)

    modes = []
    inside = (omegas > gap.low * (1.0 + GAP_MARGIN)) & (omegas < gap.high * (1.0 - GAP_MARGIN))
    for j in np.flatnonzero(inside):
        modes.append(
            CavityExpansion.from_vector(
                mode_set, fix_phase(vectors[:, j]), omega_m=float(omegas[j]), mode_index=int(j)
            )
        )

    if modes:
        logger.info(
            f"Found {len(modes)} in-gap defect modes: "
            + ", ".join(f"{mode.omega_m:.6f}" for mode in modes)
        )
    elif require:
        raise NoInGapModeError(
            f"no defect eigenfrequency inside the gap [{gap.low:.6f}, {gap.high:.6f}]",
            module="defect_model",
        )
    else:
        logger.warning("No in-gap defect modes")
    return modes


def synthesize_field(
    expansion: CavityExpansion, mode_set: BulkModeSet, grid: GridSpec
) -> FieldGrid2D:
    """H_m(r) = Σ a_{n,q} H_{n,q}(r) on the grid, by direct plane-wave sums."""
    c = plane_wave_coefficients(expansion, mode_set).ravel()
    k = mode_set.wavevectors.reshape(-1, 2)
    values = _plane_wave_sum(c, k, grid.points())
    return FieldGrid2D(extent=grid.extent, resolution=grid.resolution, values=values)


def defect_real_space(defect: DefectFourier, points: np.ndarray) -> np.ndarray:
    values = _plane_wave_sum(defect.coefficients, defect.vectors, np.asarray(points, dtype=float))
    imaginary = float(np.abs(values.imag).max()) if values.size else 0.0
    if imaginary > 1e-8:
        logger.warning(f"δη(r) has imaginary part up to {imaginary:.3e}")
    return values.real


def electric_field(
    expansion: CavityExpansion,
    mode_set: BulkModeSet,
    eta_values: np.ndarray,
    grid: GridSpec,
) -> Tuple[FieldGrid2D, FieldGrid2D]:
    """In-plane E of a TE cavity mode, E = (i/ω) η(r) ∇×(H_z ẑ)."""
    if mode_set.polarization is not Polarization.TE:
        raise SolverError("electric field export is implemented for TE modes", module="defect_model")
    if expansion.omega_m is None or expansion.omega_m <= 0:
        raise SolverError("electric field export needs a positive ω_m", module="defect_model")

    c = plane_wave_coefficients(expansion, mode_set).ravel()
    k = mode_set.wavevectors.reshape(-1, 2)
    points = grid.points()
    dh_dy = _plane_wave_sum(1j * k[:, 1] * c, k, points)
    dh_dx = _plane_wave_sum(1j * k[:, 0] * c, k, points)
    scale = 1j * np.asarray(eta_values) / (2.0 * math.pi * expansion.omega_m)
    ex = FieldGrid2D(grid.extent, grid.resolution, scale * dh_dy)
    ey = FieldGrid2D(grid.extent, grid.resolution, -scale * dh_dx)
    return ex, ey
