import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, List, Optional, Tuple

import numpy as np
import scipy.linalg
from loguru import logger

from pbgcavity.errors import ConfigError, EigensolverError
from pbgcavity.lattice import (
    BzSampling,
    FourierDielectric,
    ReciprocalBasis,
    high_symmetry_points,
)
from pbgcavity.utils import format_float, thread_map

TWO_PI = 2.0 * math.pi
CLAMP_TOLERANCE = 1e-10
DEGENERACY_TOLERANCE = 1e-8
PATH_LABELS = ("Γ", "X", "J", "Γ")


class Polarization(Enum):
    TE = "TE"
    TM = "TM"


def wavevector_kernel(k_rows: np.ndarray, k_cols: np.ndarray, pol: Polarization) -> np.ndarray:
    """k·k' for TE, |k||k'| for TM."""
    if pol is Polarization.TE:
        return k_rows @ k_cols.T
    return np.outer(np.linalg.norm(k_rows, axis=-1), np.linalg.norm(k_cols, axis=-1))


def omega_from_eigenvalue(eigenvalue):
    return np.sqrt(eigenvalue) / TWO_PI


def eigenvalue_from_omega(omega):
    return (TWO_PI * np.asarray(omega)) ** 2


@dataclass(frozen=True, eq=False)
class BulkMode:
    band_index: int
    q: np.ndarray
    omega: float
    h_coeffs: np.ndarray
    g_vectors: np.ndarray
    polarization: Polarization

    @property
    def eigenvalue(self) -> float:
        return float(eigenvalue_from_omega(self.omega))

    @property
    def wavevectors(self) -> np.ndarray:
        return self.q + self.g_vectors


@dataclass(frozen=True)
class BandGap:
    lower_band: int
    low: float
    high: float

    @property
    def width(self) -> float:
        return self.high - self.low

    @property
    def midgap(self) -> float:
        return 0.5 * (self.low + self.high)

    @property
    def relative_width(self) -> float:
        return self.width / self.midgap

    def contains(self, omega: float) -> bool:
        return self.low < omega < self.high


@dataclass(frozen=True, eq=False)
class BandStructure:
    path: np.ndarray
    path_coordinate: np.ndarray
    ticks: Tuple[Tuple[str, float], ...]
    bands: np.ndarray
    gaps: Tuple[BandGap, ...]
    polarization: Polarization

    @property
    def gap(self) -> Optional[BandGap]:
        return self.gaps[0] if self.gaps else None

    def gap_width(self, lower_band: Optional[int] = None) -> float:
        for gap in self.gaps:
            if lower_band is None or gap.lower_band == lower_band:
                return gap.width
        return 0.0

    def midgap(self, lower_band: Optional[int] = None) -> Optional[float]:
        for gap in self.gaps:
            if lower_band is None or gap.lower_band == lower_band:
                return gap.midgap
        return None

    def csv_rows(self) -> Tuple[List[str], List[List[str]]]:
        header = ["path_coordinate", "q_x", "q_y"] + [
            f"band_{n}" for n in range(self.bands.shape[1])
        ]
        rows = []
        for s, q, freqs in zip(self.path_coordinate, self.path, self.bands):
            rows.append([format_float(s), format_float(q[0]), format_float(q[1])] + [
                format_float(f) for f in freqs
            ])
        return header, rows


@dataclass(frozen=True, eq=False)
class BulkModeSet:
    """Every band of every sampled q, stacked for the defect and objective algebra.

    `coefficients[iq, :, n]` holds h_{n,q+G} and the flat mode index is iq·N_b + n.
    """

    sampling: BzSampling
    basis: ReciprocalBasis
    polarization: Polarization
    omegas: np.ndarray
    coefficients: np.ndarray

    @property
    def n_q(self) -> int:
        return self.omegas.shape[0]

    @property
    def n_bands(self) -> int:
        return self.omegas.shape[1]

    @property
    def size(self) -> int:
        return self.omegas.size

    @property
    def eigenvalues(self) -> np.ndarray:
        return eigenvalue_from_omega(self.omegas).ravel()

    @property
    def wavevectors(self) -> np.ndarray:
        """q + G, shape (N_q, N_G, 2)."""
        return self.sampling.q_points[:, None, :] + self.basis.vectors[None, :, :]

    @property
    def k_indices(self) -> np.ndarray:
        """Fine-lattice integer coordinates of q + G, shape (N_q, N_G, 2)."""
        s = self.sampling.divisions
        return self.sampling.fine_indices[:, None, :] + s * self.basis.indices[None, :, :]

    @property
    def band_labels(self) -> np.ndarray:
        return np.tile(np.arange(self.n_bands), self.n_q)

    @property
    def q_labels(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_q), self.n_bands)

    def mode(self, iq: int, band: int) -> BulkMode:
        return BulkMode(
            band_index=band,
            q=self.sampling.q_points[iq],
            omega=float(self.omegas[iq, band]),
            h_coeffs=self.coefficients[iq, :, band],
            g_vectors=self.basis.vectors,
            polarization=self.polarization,
        )

    def origin_values(self) -> np.ndarray:
        """H_{n,q}(0) = Σ_G h_{n,q+G}, flat over modes."""
        return self.coefficients.sum(axis=1).ravel()

    def to_mode_basis(
        self, row_block: Callable[[int], np.ndarray], workers: int = 1
    ) -> np.ndarray:
        """Project a plane-wave operator onto the modes, one q row block at a time.

        `row_block(iq)` returns the operator rows of q, shape (N_G, N_q·N_G), in the
        flattened (q, G) column order.
        """
        n_q, n_g, n_b = self.coefficients.shape

        def project(iq: int) -> np.ndarray:
            rows = row_block(iq).reshape(n_g, n_q, n_g)
            right = np.einsum("gqh,qhn->gqn", rows, self.coefficients)
            return self.coefficients[iq].conj().T @ right.reshape(n_g, n_q * n_b)

        return np.vstack(thread_map(project, range(n_q), workers))


def assemble_operator(
    eta: FourierDielectric, basis: ReciprocalBasis, q: np.ndarray, pol: Polarization
) -> np.ndarray:
    differences = basis.indices[:, None, :] - basis.indices[None, :, :]
    eta_matrix = eta.lookup(differences)
    k = np.asarray(q, dtype=float) + basis.vectors
    matrix = eta_matrix * wavevector_kernel(k, k, pol)

    asymmetry = float(np.abs(matrix - matrix.conj().T).max()) if matrix.size else 0.0
    scale = max(1.0, float(np.abs(matrix).max()))
    if asymmetry > 1e-12 * scale:
        logger.warning(f"Operator asymmetry {asymmetry:.3e} at q={q}; symmetrizing")
    return 0.5 * (matrix + matrix.conj().T)


def fix_phase(vector: np.ndarray) -> np.ndarray:
    """Make the first significant component real and positive."""
    magnitude = np.abs(vector)
    peak = magnitude.max() if magnitude.size else 0.0
    if peak == 0.0:
        return vector
    first = int(np.argmax(magnitude > 1e-3 * peak))
    return vector * (np.conj(vector[first]) / magnitude[first])


def canonicalize_degenerate(eigenvalues: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """Deterministic orthonormal basis inside every degenerate eigenvalue cluster.

    Unit vectors e_0, e_1, ... are projected onto the cluster subspace and
    orthonormalized in that order; the first basis vector therefore carries the
    largest |h| on the lowest-index G.
    """
    vectors = vectors.copy()
    scale = max(1.0, float(np.abs(eigenvalues).max())) if eigenvalues.size else 1.0
    start = 0
    count = len(eigenvalues)
    while start < count:
        stop = start + 1
        while stop < count:
            gap = abs(eigenvalues[stop] - eigenvalues[stop - 1])
            if gap > DEGENERACY_TOLERANCE * max(abs(eigenvalues[stop]), 1e-4 * scale):
                break
            stop += 1

        if stop - start > 1:
            cluster = vectors[:, start:stop]
            chosen = []
            for row in range(cluster.shape[0]):
                candidate = cluster @ np.conj(cluster[row])
                for basis_vector in chosen:
                    candidate = candidate - basis_vector * np.vdot(basis_vector, candidate)
                norm = np.linalg.norm(candidate)
                if norm > 1e-6:
                    chosen.append(candidate / norm)
                if len(chosen) == stop - start:
                    break
            vectors[:, start:stop] = np.stack(chosen, axis=1)

        for column in range(start, stop):
            vectors[:, column] = fix_phase(vectors[:, column])
        start = stop
    return vectors


def hermitian_eigh(matrix: np.ndarray, module: str) -> Tuple[np.ndarray, np.ndarray]:
    try:
        return scipy.linalg.eigh(matrix)
    except (np.linalg.LinAlgError, ValueError) as e:
        condition = np.linalg.cond(matrix) if np.isfinite(matrix).all() else float("inf")
        raise EigensolverError(
            f"dense eigensolve failed ({e}); condition number {condition:.3e}",
            module=module,
        )


def clamp_eigenvalues(eigenvalues: np.ndarray, module: str) -> np.ndarray:
    scale = max(1.0, float(np.abs(eigenvalues).max())) if eigenvalues.size else 1.0
    lowest = float(eigenvalues.min()) if eigenvalues.size else 0.0
    if lowest < -CLAMP_TOLERANCE * scale:
        raise EigensolverError(
            f"negative eigenvalue {lowest:.3e} below the clamp tolerance", module=module
        )
    clamped = eigenvalues < 0
    if clamped.any():
        logger.debug(f"Clamped {int(clamped.sum())} round-off negative eigenvalues to zero")
    return np.where(clamped, 0.0, eigenvalues)


def _solve_all(
    eta: FourierDielectric, basis: ReciprocalBasis, q: np.ndarray, pol: Polarization
) -> Tuple[np.ndarray, np.ndarray]:
    matrix = assemble_operator(eta, basis, q, pol)
    eigenvalues, vectors = hermitian_eigh(matrix, module="bulk_solver")
    eigenvalues = clamp_eigenvalues(eigenvalues, module="bulk_solver")
    return eigenvalues, canonicalize_degenerate(eigenvalues, vectors)


def solve_bands(
    eta: FourierDielectric,
    basis: ReciprocalBasis,
    q: np.ndarray,
    pol: Polarization,
    n_bands: int,
) -> List[BulkMode]:
    if not 1 <= n_bands <= basis.size:
        raise ConfigError(
            [f"n_bands must lie in [1, {basis.size}], got {n_bands}"], module="bulk_solver"
        )
    q = np.asarray(q, dtype=float)
    eigenvalues, vectors = _solve_all(eta, basis, q, pol)
    return [
        BulkMode(
            band_index=n,
            q=q,
            omega=float(omega_from_eigenvalue(eigenvalues[n])),
            h_coeffs=vectors[:, n],
            g_vectors=basis.vectors,
            polarization=pol,
        )
        for n in range(n_bands)
    ]


def band_path(eta: FourierDielectric, path_resolution: int) -> Tuple[np.ndarray, np.ndarray, tuple]:
    points = high_symmetry_points(eta.spec)
    corners = [points[label] for label in PATH_LABELS]
    path, ticks = [], []
    coordinate, position = [], 0.0
    for label, start, stop in zip(PATH_LABELS, corners[:-1], corners[1:]):
        ticks.append((label, position))
        length = float(np.linalg.norm(stop - start))
        for t in np.linspace(0.0, 1.0, path_resolution, endpoint=False):
            path.append(start + t * (stop - start))
            coordinate.append(position + t * length)
        position += length
    path.append(corners[-1])
    coordinate.append(position)
    ticks.append((PATH_LABELS[-1], position))
    return np.array(path), np.array(coordinate), tuple(ticks)


def find_gaps(bands: np.ndarray) -> Tuple[BandGap, ...]:
    gaps = []
    for n in range(bands.shape[1] - 1):
        low = float(bands[:, n].max())
        high = float(bands[:, n + 1].min())
        if high > low:
            gaps.append(BandGap(lower_band=n, low=low, high=high))
    return tuple(gaps)


def band_structure(
    eta: FourierDielectric,
    basis: ReciprocalBasis,
    path_resolution: int,
    pol: Polarization,
    n_bands: int,
    workers: int = 1,
) -> BandStructure:
    if path_resolution < 1:
        raise ConfigError(
            [f"path_resolution must be >= 1, got {path_resolution}"], module="bulk_solver"
        )
    path, coordinate, ticks = band_path(eta, path_resolution)

    def frequencies(q):
        return [mode.omega for mode in solve_bands(eta, basis, q, pol, n_bands)]

    bands = np.array(thread_map(frequencies, list(path), workers))
    gaps = find_gaps(bands)
    if gaps:
        first = gaps[0]
        logger.info(
            f"{pol.value} gap between bands {first.lower_band} and {first.lower_band + 1}: "
            f"[{first.low:.6f}, {first.high:.6f}] a/λ"
        )
    else:
        logger.info(f"No complete {pol.value} gap among the lowest {n_bands} bands")

    return BandStructure(
        path=path,
        path_coordinate=coordinate,
        ticks=ticks,
        bands=bands,
        gaps=gaps,
        polarization=pol,
    )


def solve_mode_set(
    eta: FourierDielectric,
    basis: ReciprocalBasis,
    sampling: BzSampling,
    pol: Polarization,
    workers: int = 1,
) -> BulkModeSet:
    """All N_G bands at every sampled q."""
    if not np.allclose(sampling.b, basis.b):
        raise ConfigError(["sampling and basis use different lattices"], module="bulk_solver")

    solutions = thread_map(
        lambda q: _solve_all(eta, basis, q, pol), list(sampling.q_points), workers
    )
    omegas = np.array([omega_from_eigenvalue(values) for values, _ in solutions])
    coefficients = np.array([vectors for _, vectors in solutions])
    logger.debug(
        f"Solved {sampling.size} q points x {basis.size} bands ({pol.value}) for the mode set"
    )
    return BulkModeSet(
        sampling=sampling,
        basis=basis,
        polarization=pol,
        omegas=omegas,
        coefficients=coefficients,
    )


def gap_from_modes(mode_set: BulkModeSet, lower_band: int) -> Optional[BandGap]:
    low = float(mode_set.omegas[:, lower_band].max())
    high = float(mode_set.omegas[:, lower_band + 1].min())
    if high <= low:
        return None
    return BandGap(lower_band=lower_band, low=low, high=high)


def in_plane_polarization(k: np.ndarray) -> np.ndarray:
    """ẑ × k̂ for every row of k, x̂ where k vanishes."""
    k = np.atleast_2d(k)
    norms = np.linalg.norm(k, axis=1)
    out = np.zeros((len(k), 3))
    nonzero = norms > 0
    out[nonzero, 0] = -k[nonzero, 1] / norms[nonzero]
    out[nonzero, 1] = k[nonzero, 0] / norms[nonzero]
    out[~nonzero, 0] = 1.0
    return out


def mode_amplitude(mode: BulkMode, r: np.ndarray) -> np.ndarray:
    """Scalar Bloch sum Σ_G h e^{i(q+G)·r}; the out-of-plane H for TE."""
    r = np.asarray(r, dtype=float)
    phase = np.exp(1j * (r.reshape(-1, 2) @ mode.wavevectors.T))
    return (phase @ mode.h_coeffs).reshape(r.shape[:-1])


def mode_field(mode: BulkMode, r: np.ndarray) -> np.ndarray:
    """Vector H(r) of a Bloch mode, shape (..., 3)."""
    r = np.asarray(r, dtype=float)
    phase = np.exp(1j * (r.reshape(-1, 2) @ mode.wavevectors.T))
    if mode.polarization is Polarization.TE:
        field = np.zeros((phase.shape[0], 3), dtype=complex)
        field[:, 2] = phase @ mode.h_coeffs
    else:
        directions = in_plane_polarization(mode.wavevectors)
        field = phase @ (mode.h_coeffs[:, None] * directions)
    return field.reshape(r.shape[:-1] + (3,))
