"""Inverse design of the 2D defect: optimal cavity coefficients, then the δη that supports them.

The cavity mode is chosen by a linear eigenproblem in the bulk-mode basis and the
dielectric perturbation that makes it an eigenmode is recovered from a linear system
over the wavevectors k = q + G.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, List, Optional, Tuple

import numpy as np
import scipy.linalg
from loguru import logger
from scipy import ndimage

from pbgcavity.bulk_solver import (
    BandGap,
    BulkModeSet,
    Polarization,
    fix_phase,
    hermitian_eigh,
)
from pbgcavity.config import DefaultObjectiveConfig
from pbgcavity.defect_model import (
    CavityExpansion,
    DefectFourier,
    FieldGrid2D,
    GridSpec,
    defect_real_space,
    plane_wave_coefficients,
)
from pbgcavity.errors import GapError, RankError, SolverError
from pbgcavity.lattice import FourierDielectric, IndexTable, eta_real_space, nearest_site
from pbgcavity.objective import CostWeights, ObjectiveGrams, cost, system_matrix
from pbgcavity.utils import log_event, thread_map

DEFAULTS = DefaultObjectiveConfig()
WEIGHT_FLOOR = 1e-8


class Selector(Enum):
    smallest_eigenvalue = "smallest_eigenvalue"
    max_cost = "max_cost"


@dataclass(frozen=True, eq=False)
class VariationalResult:
    coefficients: CavityExpansion
    lagrange_eigenvalue: float
    cost_value: float
    weights: CostWeights
    residual: float


@dataclass(frozen=True, eq=False)
class InversionSystem:
    matrix: np.ndarray
    rhs: np.ndarray
    omega_m: float
    k_indices: np.ndarray
    divisions: int
    b: np.ndarray

    def residual(self, defect: DefectFourier) -> float:
        return float(np.linalg.norm(self.matrix @ defect.coefficients - self.rhs))


class TruncatedSVD:
    """SVD of a (possibly rank-deficient) matrix with a relative singular-value cutoff."""

    def __init__(self, matrix: np.ndarray, tolerance: float = DEFAULTS.svd_tolerance):
        self.matrix = matrix
        self.tolerance = tolerance
        try:
            self.U, self.s, self.Vh = scipy.linalg.svd(matrix, full_matrices=False)
        except np.linalg.LinAlgError:
            logger.warning("gesdd did not converge; retrying the SVD with gesvd")
            self.U, self.s, self.Vh = scipy.linalg.svd(
                matrix, full_matrices=False, lapack_driver="gesvd"
            )

        largest = float(self.s[0]) if self.s.size else 0.0
        self.kept = self.s >= tolerance * largest if largest > 0 else np.zeros_like(self.s, bool)
        self.rank = int(self.kept.sum())
        self.cond = largest / float(self.s[self.kept][-1]) if self.rank else math.inf

    def lstsq(self, rhs: np.ndarray) -> np.ndarray:
        if self.rank == 0:
            raise RankError("effective rank of the inversion system is 0", module="analytic_inverter")
        U = self.U[:, self.kept]
        Vh = self.Vh[self.kept]
        return Vh.conj().T @ ((U.conj().T @ rhs) / self.s[self.kept])


@dataclass(frozen=True)
class HoleRecord:
    site: Tuple[int, int]
    center_x: float
    center_y: float
    major: float
    minor: float
    angle: float
    mean_index: float
    area: float

    def as_dict(self) -> dict:
        return {
            "site": list(self.site),
            "center_x": self.center_x,
            "center_y": self.center_y,
            "major": self.major,
            "minor": self.minor,
            "angle": self.angle,
            "mean_index": self.mean_index,
            "area": self.area,
        }


@dataclass(frozen=True, eq=False)
class ContourResult:
    dielectric: FieldGrid2D
    level: float
    holes: List[HoleRecord]

    def hole_at(self, site: Tuple[int, int]) -> Optional[HoleRecord]:
        for hole in self.holes:
            if hole.site == tuple(site):
                return hole
        return None

    def disk_index(self, radius: float, center: Tuple[float, float] = (0.0, 0.0)) -> float:
        """Effective refractive index 1/sqrt(<η>) over a disk of the reconstructed dielectric.

        With the bulk hole radius this reports the recovered hole index even when the
        defect no longer crosses the contour level.
        """
        points = self.dielectric.grid().points()
        inside = np.hypot(points[..., 0] - center[0], points[..., 1] - center[1]) <= radius
        if not inside.any():
            raise SolverError(f"no grid point within {radius} of {center}", module="analytic_inverter")
        mean_eta = float(np.real(self.dielectric.values[inside]).mean())
        return 1.0 / math.sqrt(mean_eta) if mean_eta > 0 else math.inf

    def center_radius(self) -> float:
        """Equivalent-area radius of the hole at the origin; 0 when it was filled away."""
        center = self.hole_at((0, 0))
        return math.sqrt(center.area / math.pi) if center is not None else 0.0


def solve_variational(
    grams: ObjectiveGrams,
    weights: CostWeights,
    selector: Selector = Selector.smallest_eigenvalue,
    merit: Optional[Callable[[np.ndarray], float]] = None,
) -> VariationalResult:
    """Eigenpair of (W + β_I P - β_V S) picked by `selector`."""
    matrix = system_matrix(grams, weights)
    eigenvalues, vectors = hermitian_eigh(matrix, module="analytic_inverter")

    if selector is Selector.smallest_eigenvalue:
        index = 0
    elif merit is None:
        index = len(eigenvalues) - 1
    else:
        index = int(np.argmax([merit(vectors[:, j]) for j in range(len(eigenvalues))]))

    vector = fix_phase(vectors[:, index])
    eigenvalue = float(eigenvalues[index])
    residual = float(np.linalg.norm(matrix @ vector - eigenvalue * vector))
    if residual > 1e-8 * max(1.0, float(np.abs(eigenvalues).max())):
        logger.warning(f"Variational residual {residual:.3e} exceeds tolerance")

    expansion = CavityExpansion(
        coefficients=vector,
        band_indices=grams.band_indices,
        q_indices=grams.q_indices,
        mode_index=index,
    )
    return VariationalResult(
        coefficients=expansion,
        lagrange_eigenvalue=eigenvalue,
        cost_value=cost(vector, grams, weights),
        weights=weights,
        residual=residual,
    )


def optimize_weights(
    grams: ObjectiveGrams,
    initial: CostWeights,
    budget: int = DEFAULTS.weight_budget,
    merit: Optional[Callable[[CostWeights, VariationalResult], float]] = None,
    selector: Selector = Selector.smallest_eigenvalue,
    step: float = 1.0,
    tolerance: float = 1e-3,
    history: Optional[list] = None,
) -> Tuple[CostWeights, VariationalResult]:
    """Compass search over (ln β_I, ln β_V) maximizing `merit`.

    The Grams are built once; every trial only rescales them. Polls go +β_I, -β_I,
    +β_V, -β_V, the first improvement is accepted, and the step halves after a
    failed poll. Each trial costs one eigenproblem.
    """
    if budget < 1:
        raise SolverError(f"weight budget must be >= 1, got {budget}", module="analytic_inverter")
    if merit is None:
        def merit(weights, result):
            return result.cost_value

    def evaluate(weights: CostWeights):
        result = solve_variational(grams, weights, selector)
        value = float(merit(weights, result))
        if history is not None:
            history.append((weights, value))
        log_event(
            "weight_trial",
            beta_I=weights.beta_I,
            beta_V=weights.beta_V,
            merit=value,
        )
        return result, value

    best_weights = initial
    best_result, best_value = evaluate(initial)
    evaluations = 1
    point = np.log([max(initial.beta_I, WEIGHT_FLOOR), max(initial.beta_V, WEIGHT_FLOOR)])
    directions = (np.array([1.0, 0.0]), np.array([-1.0, 0.0]), np.array([0.0, 1.0]), np.array([0.0, -1.0]))

    while evaluations < budget and step >= tolerance:
        improved = False
        for direction in directions:
            if evaluations >= budget:
                break
            trial_point = point + step * direction
            trial = CostWeights(beta_I=float(math.exp(trial_point[0])), beta_V=float(math.exp(trial_point[1])))
            result, value = evaluate(trial)
            evaluations += 1
            if value > best_value:
                best_weights, best_result, best_value = trial, result, value
                point = trial_point
                improved = True
                break
        if not improved:
            step *= 0.5

    logger.info(
        f"Weight search finished after {evaluations} evaluations: "
        f"β_I={best_weights.beta_I:.6g}, β_V={best_weights.beta_V:.6g}, merit={best_value:.6g}"
    )
    return best_weights, best_result


def _check_frequency(omega_m: Optional[float], gap: Optional[BandGap]) -> float:
    if omega_m is None:
        raise SolverError("the cavity expansion carries no ω_m", module="analytic_inverter")
    if gap is None:
        logger.warning(f"No band gap given; ω_m={omega_m:.6f} is not checked against the gap")
    elif not gap.contains(omega_m):
        raise GapError(
            f"ω_m={omega_m:.6f} lies outside the gap [{gap.low:.6f}, {gap.high:.6f}]",
            module="analytic_inverter",
        )
    return float(omega_m)


def _inversion_rows(
    h: np.ndarray,
    wavevectors: np.ndarray,
    k_indices: np.ndarray,
    grid_indices: np.ndarray,
    grid_vectors: np.ndarray,
    table: IndexTable,
    c_flat: np.ndarray,
    pol: Polarization,
) -> np.ndarray:
    """Rows of one q: Σ_G h*_{n,q+G} kernel(k, k-p) c_{k-p} for every grid vector p."""
    positions = table.positions(k_indices[:, None, :] - grid_indices[None, :, :])
    present = positions >= 0
    c_shifted = np.where(present, c_flat[np.where(present, positions, 0)], 0.0)
    source = wavevectors[:, None, :] - grid_vectors[None, :, :]
    if pol is Polarization.TE:
        kernel = np.einsum("gd,gpd->gp", wavevectors, source)
    else:
        kernel = np.linalg.norm(wavevectors, axis=1)[:, None] * np.linalg.norm(source, axis=2)
    return h.conj().T @ (kernel * c_shifted)


def _inversion_inputs(expansion, mode_set, k_indices):
    s = mode_set.sampling.divisions
    mode_k = mode_set.k_indices
    c = plane_wave_coefficients(expansion, mode_set)
    table = IndexTable(mode_k.reshape(-1, 2))
    grid = mode_k.reshape(-1, 2) if k_indices is None else np.asarray(k_indices, dtype=np.int64)
    grid_vectors = grid @ mode_set.basis.b / s
    return c, table, grid, grid_vectors


def _inversion_rhs(expansion: CavityExpansion, mode_set: BulkModeSet, omega_m: float) -> np.ndarray:
    return expansion.coefficients * ((2.0 * math.pi * omega_m) ** 2 - mode_set.eigenvalues)


def build_inversion_system(
    expansion: CavityExpansion,
    mode_set: BulkModeSet,
    omega_m: Optional[float] = None,
    gap: Optional[BandGap] = None,
    k_indices: Optional[np.ndarray] = None,
    workers: int = 1,
) -> InversionSystem:
    """Linear system D·δη = a(ω_m² - ω²) over the (n, q) rows and the k columns.

    `k_indices` overrides the unknown wavevector grid (fine-lattice integers); it
    defaults to the q + G grid of the mode set.
    """
    omega_m = _check_frequency(expansion.omega_m if omega_m is None else omega_m, gap)
    c, table, grid, grid_vectors = _inversion_inputs(expansion, mode_set, k_indices)
    c_flat = c.ravel()
    mode_k = mode_set.k_indices
    wavevectors = mode_set.wavevectors
    pol = mode_set.polarization

    def rows(iq: int) -> np.ndarray:
        return _inversion_rows(
            mode_set.coefficients[iq], wavevectors[iq], mode_k[iq],
            grid, grid_vectors, table, c_flat, pol,
        )

    matrix = np.vstack(thread_map(rows, range(mode_set.n_q), workers))
    rhs = _inversion_rhs(expansion, mode_set, omega_m)
    if not np.isfinite(rhs).all():
        raise SolverError("non-finite right-hand side", module="analytic_inverter")

    logger.debug(f"Inversion system {matrix.shape[0]}x{matrix.shape[1]} at ω_m={omega_m:.6f}")
    return InversionSystem(
        matrix=matrix,
        rhs=rhs,
        omega_m=omega_m,
        k_indices=grid,
        divisions=mode_set.sampling.divisions,
        b=mode_set.basis.b,
    )


def assemble_inversion_matrix_multizone(
    expansion: CavityExpansion,
    mode_set: BulkModeSet,
    zones: int,
    k_indices: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Inversion matrix assembled over `zones` Brillouin zones, then folded back.

    Zone z relabels every mode (n, q) as (n, q + G_z) with plane waves at
    (q + G_z) + (G - G_z); the copies are summed row-wise and divided by the
    zone count.
    """
    if not 1 <= zones <= mode_set.basis.size:
        raise SolverError(f"zones must lie in [1, {mode_set.basis.size}]", module="analytic_inverter")
    c, table, grid, grid_vectors = _inversion_inputs(expansion, mode_set, k_indices)
    c_flat = c.ravel()
    s = mode_set.sampling.divisions
    basis = mode_set.basis
    pol = mode_set.polarization

    folded = np.zeros((mode_set.size, len(grid)), dtype=complex)
    for z in range(zones):
        shift_index = basis.indices[z]
        shift = basis.vectors[z]
        for iq in range(mode_set.n_q):
            zone_q_index = mode_set.sampling.fine_indices[iq] + s * shift_index
            zone_q = mode_set.sampling.q_points[iq] + shift
            relative = basis.indices - shift_index
            k_index = zone_q_index[None, :] + s * relative
            wavevectors = zone_q[None, :] + relative @ basis.b
            block = _inversion_rows(
                mode_set.coefficients[iq], wavevectors, k_index,
                grid, grid_vectors, table, c_flat, pol,
            )
            rows = slice(iq * mode_set.n_bands, (iq + 1) * mode_set.n_bands)
            folded[rows] += block
    return folded / zones


def solve_defect(
    system: InversionSystem,
    tolerance: float = DEFAULTS.svd_tolerance,
    svd: Optional[TruncatedSVD] = None,
) -> DefectFourier:
    """Minimum-norm truncated-SVD solution, symmetrized so that δη(r) is real."""
    svd = svd or TruncatedSVD(system.matrix, tolerance)
    solution = svd.lstsq(system.rhs)
    defect = DefectFourier(
        b=system.b,
        divisions=system.divisions,
        indices=system.k_indices,
        coefficients=solution,
    ).symmetrized()
    logger.info(
        f"Defect solve: rank {svd.rank}/{min(system.matrix.shape)}, "
        f"condition {svd.cond:.3e}, residual {system.residual(defect):.3e}"
    )
    return defect


def _fit_hole(spec, mask, eta, points, cell_area) -> HoleRecord:
    coordinates = points[mask]
    center = coordinates.mean(axis=0)
    covariance = np.cov(coordinates.T, bias=True)
    variances, axes = np.linalg.eigh(covariance)
    variances = np.clip(variances, 0.0, None)
    major_axis = axes[:, 1]
    angle = math.atan2(major_axis[1], major_axis[0]) % math.pi
    mean_eta = float(eta[mask].mean())
    return HoleRecord(
        site=nearest_site(spec, center),
        center_x=float(center[0]),
        center_y=float(center[1]),
        major=2.0 * math.sqrt(variances[1]),
        minor=2.0 * math.sqrt(variances[0]),
        angle=angle,
        mean_index=1.0 / math.sqrt(mean_eta) if mean_eta > 0 else math.inf,
        area=float(mask.sum() * cell_area),
    )


def reconstruct_and_contour(
    defect: DefectFourier,
    eta0: FourierDielectric,
    grid: GridSpec,
    bulk: str = "fourier",
) -> ContourResult:
    """η = η₀ + δη on the grid and the holes enclosed by the half-way contour.

    `bulk="fourier"` synthesizes η₀ from the basis coefficients, matching the
    truncation of δη; `bulk="geometry"` uses the exact circular holes. Regions
    touching the grid border are not reported.
    """
    points = grid.points()
    if bulk == "fourier":
        eta_bulk = eta0.synthesize(points)
    elif bulk == "geometry":
        eta_bulk = eta_real_space(eta0.spec, points)
    else:
        raise SolverError(f"unknown bulk reconstruction '{bulk}'", module="analytic_inverter")

    eta = eta_bulk + defect_real_space(defect, points)
    level = 0.5 * (float(eta.min()) + float(eta.max()))
    holes_above = eta0.spec.eta_hole >= eta0.spec.eta_bulk
    mask = eta > level if holes_above else eta < level

    labels, count = ndimage.label(mask)
    border = set(np.unique(np.concatenate([labels[0], labels[-1], labels[:, 0], labels[:, -1]])))
    holes = []
    for label in range(1, count + 1):
        if label in border:
            continue
        holes.append(_fit_hole(eta0.spec, labels == label, eta, points, grid.cell_area))
    holes.sort(key=lambda hole: (math.hypot(hole.center_x, hole.center_y), hole.center_x, hole.center_y))

    logger.info(f"Contour at η={level:.6f} enclosed {len(holes)} interior holes")
    dielectric = FieldGrid2D(extent=grid.extent, resolution=grid.resolution, values=eta)
    return ContourResult(dielectric=dielectric, level=level, holes=holes)
