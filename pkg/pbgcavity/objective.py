"""Quadratic forms of the inversion cost in the bulk-mode coefficient basis.

For a normalized coefficient vector a:

    L = a†Wa   (Q proxy)
    I = a†Pa   (intensity at the origin)
    V = a†Sa   (field energy over the evaluation domain)
    J = L + β_I·I - β_V·V
"""

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from loguru import logger

from pbgcavity.bulk_solver import BulkModeSet
from pbgcavity.config import DefaultObjectiveConfig
from pbgcavity.defect_model import CavityExpansion, FieldGrid2D
from pbgcavity.errors import ConfigError, SolverError

DEFAULTS = DefaultObjectiveConfig()


@dataclass(frozen=True)
class CostWeights:
    beta_I: float = DEFAULTS.beta_I
    beta_V: float = DEFAULTS.beta_V

    def __post_init__(self):
        errors = []
        for name in ("beta_I", "beta_V"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                errors.append(f"{name} must be finite and >= 0, got {value}")
        if errors:
            raise ConfigError(errors, module="objective")


@dataclass(frozen=True, eq=False)
class ObjectiveGrams:
    overlap: np.ndarray
    origin_outer: np.ndarray
    qproxy: np.ndarray
    origin_values: np.ndarray
    domain: float
    band_indices: np.ndarray
    q_indices: np.ndarray

    @property
    def size(self) -> int:
        return self.overlap.shape[0]


@dataclass(frozen=True)
class ModeFigures:
    q_proxy: float
    intensity: float
    volume: float
    cost: float


def _vector(a: Union[CavityExpansion, np.ndarray]) -> np.ndarray:
    if isinstance(a, CavityExpansion):
        return a.coefficients
    return np.asarray(a, dtype=complex)


def _quadratic(a: np.ndarray, matrix: np.ndarray, name: str) -> float:
    value = np.vdot(a, matrix @ a)
    scale = max(1.0, abs(value.real))
    if abs(value.imag) > 1e-12 * scale:
        logger.warning(f"{name} has imaginary part {value.imag:.3e}")
    return float(value.real)


def build_grams(
    mode_set: BulkModeSet,
    domain: float = DEFAULTS.domain,
    q_min: float = DEFAULTS.q_min,
    penalty: float = DEFAULTS.gamma_penalty,
    workers: int = 1,
) -> ObjectiveGrams:
    """Overlap, origin and Q-proxy Gram matrices over a square domain of side `domain`.

    Overlaps use the closed form ∫ e^{i(k'-k)·r} dA = L² sinc(Δk_x L/2) sinc(Δk_y L/2).
    Modes with |q| below q_min·2π get a penalty diagonal in W instead of ω/|q|.
    """
    if domain <= 0:
        raise ConfigError([f"domain must be positive, got {domain}"], module="objective")

    k_vectors = mode_set.wavevectors
    flat_vectors = k_vectors.reshape(-1, 2)
    half = 0.5 * domain

    def row_block(iq: int) -> np.ndarray:
        dk = flat_vectors[None, :, :] - k_vectors[iq][:, None, :]
        return domain**2 * np.sinc(dk[..., 0] * half / math.pi) * np.sinc(dk[..., 1] * half / math.pi)

    overlap = mode_set.to_mode_basis(row_block, workers)
    overlap = 0.5 * (overlap + overlap.conj().T)

    origin = mode_set.origin_values()
    origin_outer = np.outer(np.conj(origin), origin)

    q_norms = np.linalg.norm(mode_set.sampling.q_points, axis=1)[mode_set.q_labels]
    omegas = mode_set.omegas.ravel()
    regular = q_norms >= q_min * 2.0 * math.pi
    ratio = np.zeros_like(omegas)
    ratio[regular] = 2.0 * math.pi * omegas[regular] / q_norms[regular]
    qproxy = np.outer(ratio, ratio).astype(complex)
    singular = np.flatnonzero(~regular)
    qproxy[singular, singular] = penalty
    if singular.size:
        logger.debug(f"Penalized {singular.size} Γ-point modes in the Q proxy with {penalty:g}")

    return ObjectiveGrams(
        overlap=overlap,
        origin_outer=origin_outer,
        qproxy=qproxy,
        origin_values=origin,
        domain=domain,
        band_indices=mode_set.band_labels,
        q_indices=mode_set.q_labels,
    )


def system_matrix(grams: ObjectiveGrams, weights: CostWeights) -> np.ndarray:
    """W + β_I P - β_V S, rescaled per trial without rebuilding the Grams."""
    return grams.qproxy + weights.beta_I * grams.origin_outer - weights.beta_V * grams.overlap


def mode_volume(a, overlap: np.ndarray, field: Union[FieldGrid2D, float]) -> float:
    """a†Sa divided by the peak intensity of the synthesized field."""
    peak = field.peak_intensity if isinstance(field, FieldGrid2D) else float(field)
    if peak <= 0.0:
        raise SolverError("mode volume of a zero field", module="objective")
    return _quadratic(_vector(a), overlap, "V") / peak


def intensity_at_origin(a, origin_outer: np.ndarray) -> float:
    return _quadratic(_vector(a), origin_outer, "I")


def q_proxy(a, qproxy: np.ndarray) -> float:
    return _quadratic(_vector(a), qproxy, "L")


def cost(a, grams: ObjectiveGrams, weights: CostWeights) -> float:
    return _quadratic(_vector(a), system_matrix(grams, weights), "J")


def cost_gradient(a, grams: ObjectiveGrams, weights: CostWeights) -> np.ndarray:
    """2Ma, the gradient with respect to (Re a, Im a) packed as a complex vector."""
    return 2.0 * (system_matrix(grams, weights) @ _vector(a))


def evaluate_merit(
    a, grams: ObjectiveGrams, weights: CostWeights, field: Union[FieldGrid2D, float]
) -> ModeFigures:
    """Figures of merit with V taken from the max-one normalized field."""
    vector = _vector(a)
    level = q_proxy(vector, grams.qproxy)
    intensity = intensity_at_origin(vector, grams.origin_outer)
    volume = mode_volume(vector, grams.overlap, field)
    return ModeFigures(
        q_proxy=level,
        intensity=intensity,
        volume=volume,
        cost=level + weights.beta_I * intensity - weights.beta_V * volume,
    )
