"""Real and reciprocal lattice geometry for the two-dimensional crystal.

Lengths are in units of the lattice constant a and wavevectors are Cartesian in rad/a,
so the shortest hexagonal reciprocal vectors have length 4π/√3.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Optional, Tuple

import numpy as np
from loguru import logger
from scipy.special import j1

from pbgcavity.errors import ConfigError, MissingCoefficientError

SHELL_TOLERANCE = 1e-9
SQRT3 = math.sqrt(3.0)


class LatticeType(Enum):
    hexagonal = "hexagonal"


@dataclass(frozen=True)
class LatticeSpec:
    """Bulk crystal of circular holes (index `hole_index`) in a background of `bulk_index`."""

    hole_radius: float = 0.3
    bulk_index: float = 3.4
    hole_index: float = 1.0
    lattice_type: LatticeType = LatticeType.hexagonal
    lattice_constant: float = 1.0

    def __post_init__(self):
        errors = []
        if not 0.0 < self.hole_radius < 0.5:
            errors.append(f"hole_radius must lie in (0, 0.5), got {self.hole_radius}")
        if self.bulk_index < 1.0:
            errors.append(f"bulk_index must be >= 1, got {self.bulk_index}")
        if self.hole_index < 1.0:
            errors.append(f"hole_index must be >= 1, got {self.hole_index}")
        if self.lattice_constant <= 0.0:
            errors.append(f"lattice_constant must be positive, got {self.lattice_constant}")
        if errors:
            raise ConfigError(errors, module="lattice")

    @property
    def eta_bulk(self) -> float:
        return 1.0 / self.bulk_index**2

    @property
    def eta_hole(self) -> float:
        return 1.0 / self.hole_index**2

    @property
    def cell_area(self) -> float:
        return SQRT3 / 2.0

    @property
    def fill_fraction(self) -> float:
        return math.pi * self.hole_radius**2 / self.cell_area

    @property
    def primitive_vectors(self) -> np.ndarray:
        """Rows a1, a2."""
        return np.array([[1.0, 0.0], [0.5, SQRT3 / 2.0]])

    @property
    def reciprocal_vectors(self) -> np.ndarray:
        """Rows b1, b2 with a_i · b_j = 2π δ_ij."""
        return 2.0 * math.pi * np.linalg.inv(self.primitive_vectors).T

    def site_position(self, m: int, n: int) -> np.ndarray:
        return m * self.primitive_vectors[0] + n * self.primitive_vectors[1]

    def with_hole_index(self, hole_index: float) -> "LatticeSpec":
        return LatticeSpec(
            hole_radius=self.hole_radius,
            bulk_index=self.bulk_index,
            hole_index=hole_index,
            lattice_type=self.lattice_type,
            lattice_constant=self.lattice_constant,
        )


class IndexTable:
    """Dense lookup from integer lattice coordinates to row positions (-1 when absent)."""

    def __init__(self, indices: np.ndarray):
        indices = np.asarray(indices, dtype=np.int64).reshape(-1, 2)
        self.size = len(indices)
        self.offset = int(np.abs(indices).max()) if self.size else 0
        self.width = 2 * self.offset + 1
        self.table = np.full((self.width, self.width), -1, dtype=np.int64)
        self.table[indices[:, 0] + self.offset, indices[:, 1] + self.offset] = np.arange(
            self.size
        )
        if int((self.table >= 0).sum()) != self.size:
            raise ValueError("duplicate lattice coordinates in index table")

    def positions(self, query: np.ndarray) -> np.ndarray:
        query = np.asarray(query, dtype=np.int64)
        shifted = query + self.offset
        inside = np.all((shifted >= 0) & (shifted < self.width), axis=-1)
        out = np.full(query.shape[:-1], -1, dtype=np.int64)
        hits = shifted[inside]
        out[inside] = self.table[hits[..., 0], hits[..., 1]]
        return out


@dataclass(frozen=True, eq=False)
class ReciprocalBasis:
    """Truncated, negation-closed set of reciprocal lattice vectors G = m·b1 + n·b2."""

    b: np.ndarray
    indices: np.ndarray
    requested: int
    lattice_type: LatticeType = LatticeType.hexagonal

    @property
    def size(self) -> int:
        return len(self.indices)

    @property
    def vectors(self) -> np.ndarray:
        return self.indices @ self.b

    @property
    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.vectors, axis=1)

    @property
    def bz_area(self) -> float:
        return abs(float(np.linalg.det(self.b)))

    def table(self) -> IndexTable:
        return IndexTable(self.indices)


@dataclass(frozen=True, eq=False)
class FourierDielectric:
    """Fourier coefficients η_G of the bulk reciprocal dielectric η₀(r) = 1/ε(r).

    Coefficients are stored for every difference G - G' of the basis so that
    operator assembly never leaves the table.
    """

    spec: LatticeSpec
    b: np.ndarray
    indices: np.ndarray
    coefficients: np.ndarray
    basis_indices: np.ndarray
    _table: IndexTable = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_table", IndexTable(self.indices))

    @property
    def vectors(self) -> np.ndarray:
        return self.indices @ self.b

    def lookup(self, query: np.ndarray) -> np.ndarray:
        positions = self._table.positions(query)
        missing = positions < 0
        if missing.any():
            raise MissingCoefficientError(
                f"no η coefficient for {int(missing.sum())} of {missing.size} requested G differences",
                module="lattice",
            )
        return self.coefficients[positions]

    def coefficient(self, m: int, n: int) -> complex:
        return complex(self.lookup(np.array([m, n]))[()])

    def as_dict(self) -> Dict[Tuple[int, int], complex]:
        return {
            (int(m), int(n)): complex(value)
            for (m, n), value in zip(self.indices, self.coefficients)
        }

    def synthesize(self, points: np.ndarray, full: bool = False) -> np.ndarray:
        """η₀ at Cartesian points from the basis coefficients (or every stored one)."""
        indices = self.indices if full else self.basis_indices
        values = self.lookup(indices)
        phase = np.exp(1j * (np.asarray(points) @ (indices @ self.b).T))
        return np.real(phase @ values)


@dataclass(frozen=True, eq=False)
class BzSampling:
    """Brillouin-zone points q = (i·b1 + j·b2)/s on a fine lattice folded into the first zone."""

    b: np.ndarray
    divisions: int
    fine_indices: np.ndarray
    weights: np.ndarray

    @property
    def size(self) -> int:
        return len(self.fine_indices)

    @property
    def q_points(self) -> np.ndarray:
        return self.fine_indices @ self.b / self.divisions


def build_reciprocal_basis(spec: LatticeSpec, n_g: int) -> ReciprocalBasis:
    if n_g < 1:
        raise ConfigError([f"n_g must be >= 1, got {n_g}"], module="lattice")
    if spec.lattice_type is not LatticeType.hexagonal:
        raise ConfigError(
            [f"unsupported lattice_type {spec.lattice_type}"], module="lattice"
        )

    b = spec.reciprocal_vectors
    area = abs(float(np.linalg.det(b)))
    longest = float(np.linalg.norm(b, axis=1).max())
    span = int(math.ceil(math.sqrt(n_g))) + 1

    while True:
        steps = np.arange(-span, span + 1)
        mm, nn = np.meshgrid(steps, steps, indexing="ij")
        indices = np.stack([mm.ravel(), nn.ravel()], axis=-1)
        vectors = indices @ b
        norms = np.round(np.linalg.norm(vectors, axis=1), 9)
        order = np.lexsort((np.round(vectors[:, 1], 9), np.round(vectors[:, 0], 9), norms))
        indices, norms = indices[order], norms[order]

        cutoff = norms[n_g - 1]
        count = int(np.searchsorted(norms, cutoff + SHELL_TOLERANCE, side="right"))
        inscribed = span * area / longest
        if cutoff < inscribed - SHELL_TOLERANCE:
            break
        span *= 2

    indices = indices[:count].astype(np.int64)
    if count != n_g:
        logger.debug(f"Rounded n_g={n_g} up to the closed shell size {count}")

    table = IndexTable(indices)
    if (table.positions(-indices) < 0).any():
        raise ConfigError([f"basis of size {count} is not negation-closed"], module="lattice")

    return ReciprocalBasis(b=b, indices=indices, requested=n_g, lattice_type=spec.lattice_type)


def eta_fourier(spec: LatticeSpec, basis: ReciprocalBasis) -> FourierDielectric:
    """Closed-form η_G for one circular hole per cell, over all differences of the basis."""
    differences = (basis.indices[:, None, :] - basis.indices[None, :, :]).reshape(-1, 2)
    differences = np.unique(differences, axis=0)
    g = np.linalg.norm(differences @ basis.b, axis=1)

    fill = spec.fill_fraction
    contrast = spec.eta_hole - spec.eta_bulk
    x = g * spec.hole_radius
    shape = np.divide(2.0 * j1(x), x, out=np.ones_like(x), where=x > 0)
    values = contrast * fill * shape
    values[x == 0] = spec.eta_bulk + fill * contrast

    return FourierDielectric(
        spec=spec,
        b=basis.b,
        indices=differences,
        coefficients=values.astype(complex),
        basis_indices=basis.indices,
    )


def eta_real_space(spec: LatticeSpec, points: np.ndarray) -> np.ndarray:
    """Exact η₀(r) at Cartesian points."""
    points = np.asarray(points, dtype=float)
    flat = points.reshape(-1, 2)
    fractional = flat @ np.linalg.inv(spec.primitive_vectors)
    base = np.floor(fractional)

    nearest = np.full(len(flat), np.inf)
    for dm in (0, 1):
        for dn in (0, 1):
            corner = (base + np.array([dm, dn])) @ spec.primitive_vectors
            nearest = np.minimum(nearest, np.linalg.norm(flat - corner, axis=1))

    values = np.where(nearest <= spec.hole_radius, spec.eta_hole, spec.eta_bulk)
    return values.reshape(points.shape[:-1])


def rasterize_unit_cell(spec: LatticeSpec, samples: int) -> np.ndarray:
    """η₀ on the fractional grid r = (i·a1 + j·a2)/samples, shape (samples, samples)."""
    u = np.arange(samples) / samples
    uu, vv = np.meshgrid(u, u, indexing="ij")
    points = np.stack([uu, vv], axis=-1) @ spec.primitive_vectors
    return eta_real_space(spec, points)


def _fold_integer(index: np.ndarray, divisions: int, b: np.ndarray) -> Tuple[int, int]:
    """Wigner–Seitz representative of a fine-lattice point, ties broken by (|q|, x, y)."""
    best_key, best = None, None
    for m in range(-2, 3):
        for n in range(-2, 3):
            candidate = (int(index[0]) + divisions * m, int(index[1]) + divisions * n)
            q = np.array(candidate) @ b / divisions
            key = (round(float(np.hypot(*q)), 9), round(float(q[0]), 9), round(float(q[1]), 9))
            if best_key is None or key < best_key:
                best_key, best = key, candidate
    return best


def _ordering_key(q: np.ndarray) -> Tuple[float, float]:
    angle = math.atan2(q[1], q[0]) % (2.0 * math.pi)
    return round(float(np.hypot(*q)), 9), round(angle, 9)


def _grid_capacity(divisions: int, n_q: int) -> int:
    """Largest negation-closed subset of an s×s grid that can hold Γ with the parity of n_q.

    Points with 2c ≡ 0 (mod s) are their own partner: only Γ for odd s, four for even s.
    An even n_q needs Γ plus one more such point; every other point enters in a ± pair.
    """
    self_partners = 4 if divisions % 2 == 0 else 1
    pairs = (divisions * divisions - self_partners) // 2
    extra = 1 if n_q % 2 == 0 and self_partners > 1 else 0
    return 1 + extra + 2 * pairs


def sample_brillouin_zone(basis: ReciprocalBasis, n_q: int) -> BzSampling:
    """Exactly `n_q` distinct, negation-closed points of a uniform grid folded into the first zone.

    The grid has s divisions per reciprocal vector, s of the same parity as n_q and
    large enough that Γ, the self-partner points and the {q, -q} pairs reach n_q.
    """
    if n_q < 1:
        raise ConfigError([f"n_q must be >= 1, got {n_q}"], module="lattice")

    divisions = 1
    while divisions % 2 != n_q % 2 or _grid_capacity(divisions, n_q) < n_q:
        divisions += 1

    b = basis.b
    folded = [
        _fold_integer(np.array([i, j]), divisions, b)
        for i in range(divisions)
        for j in range(divisions)
    ]
    folded.sort(key=lambda c: _ordering_key(np.array(c) @ b / divisions))

    def partner(c):
        return _fold_integer(-np.array(c), divisions, b)

    gamma = (0, 0)
    selected = [gamma]
    used = {gamma}
    if n_q % 2 == 0:
        for candidate in folded:
            if candidate != gamma and partner(candidate) == candidate:
                selected.append(candidate)
                used.add(candidate)
                break

    for candidate in folded:
        if len(selected) >= n_q:
            break
        if candidate in used:
            continue
        mate = partner(candidate)
        if mate == candidate or len(selected) + 2 > n_q:
            continue
        selected.extend([candidate, mate])
        used.update([candidate, mate])

    selected.sort(key=lambda c: (c != gamma, _ordering_key(np.array(c) @ b / divisions)))
    fine = np.array(selected, dtype=np.int64)
    if len(fine) != n_q:
        raise ConfigError(
            [f"could not place {n_q} negation-closed points on a {divisions}x{divisions} grid"],
            module="lattice",
        )
    weights = np.full(len(fine), basis.bz_area / n_q)

    logger.debug(f"Sampled {len(fine)} Brillouin-zone points on a {divisions}x{divisions} grid")
    return BzSampling(b=b, divisions=divisions, fine_indices=fine, weights=weights)


def fold_to_bz(q: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Map q to its Wigner–Seitz representative q - G, ties broken by (|q|, x, y)."""
    q = np.asarray(q, dtype=float)
    shift = np.round(q @ np.linalg.inv(b))
    base = q - shift @ b

    best_key, best = None, base
    for m in (-1, 0, 1):
        for n in (-1, 0, 1):
            candidate = base - (m * b[0] + n * b[1])
            key = (
                round(float(np.hypot(*candidate)), 9),
                round(float(candidate[0]), 9),
                round(float(candidate[1]), 9),
            )
            if best_key is None or key < best_key:
                best_key, best = key, candidate
    return best


def in_first_bz(q: np.ndarray, b: np.ndarray, tolerance: float = 1e-9) -> bool:
    q = np.asarray(q, dtype=float)
    norm = float(np.hypot(*q))
    for m in (-1, 0, 1):
        for n in (-1, 0, 1):
            if m == 0 and n == 0:
                continue
            g = m * b[0] + n * b[1]
            if norm > float(np.hypot(*(q - g))) + tolerance:
                return False
    return True


def is_below_light_line(q: np.ndarray, omega: float, b: Optional[np.ndarray] = None) -> bool:
    """True when ω (in a/λ) lies below the free-space light line at the folded |q|.

    q is always folded into the first zone of `b`, the hexagonal zone of a = 1 when omitted.
    """
    if b is None:
        b = LatticeSpec().reciprocal_vectors
    q = fold_to_bz(np.asarray(q, dtype=float), b)
    return 2.0 * math.pi * omega < float(np.hypot(*q))


def high_symmetry_points(spec: LatticeSpec) -> Dict[str, np.ndarray]:
    """Γ, X (≡ M) and J (≡ K) of the hexagonal zone."""
    b = spec.reciprocal_vectors
    return {
        "Γ": np.zeros(2),
        "X": b[1] / 2.0,
        "J": (b[0] + 2.0 * b[1]) / 3.0,
    }


def nearest_site(spec: LatticeSpec, point: np.ndarray) -> Tuple[int, int]:
    """Integer coordinates (m, n) of the lattice site closest to a Cartesian point."""
    point = np.asarray(point, dtype=float)
    base = np.floor(point @ np.linalg.inv(spec.primitive_vectors))
    best, best_distance = None, np.inf
    for dm in (0, 1):
        for dn in (0, 1):
            site = base + np.array([dm, dn])
            distance = float(np.linalg.norm(point - site @ spec.primitive_vectors))
            if distance < best_distance:
                best, best_distance = site, distance
    return int(best[0]), int(best[1])
