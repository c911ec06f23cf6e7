"""Scattering-matrix engine for z-invariant slices of a finite-difference cross-section.

Each slice is solved exactly in the stacking direction from the eigenmodes of its
transverse finite-difference operator, and slices are combined with the Redheffer
star product so evanescent orders never overflow.
"""

from dataclasses import dataclass
from functools import cached_property
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from loguru import logger

from pbgcavity.bulk_solver import Polarization
from pbgcavity.errors import EigensolverError, InstabilityError

BETA_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class SMatrix:
    S11: np.ndarray
    S12: np.ndarray
    S21: np.ndarray
    S22: np.ndarray

    @classmethod
    def identity(cls, size: int) -> "SMatrix":
        zero = np.zeros((size, size), dtype=complex)
        eye = np.eye(size, dtype=complex)
        return cls(zero, eye, eye, zero.copy())

    def is_finite(self) -> bool:
        return all(np.isfinite(block).all() for block in (self.S11, self.S12, self.S21, self.S22))


def star(a: SMatrix, b: SMatrix) -> SMatrix:
    """Redheffer star product a ⋆ b (a on the incidence side)."""
    eye = np.eye(a.S11.shape[0], dtype=complex)
    left = np.linalg.solve(eye - b.S11 @ a.S22, np.hstack([b.S11 @ a.S21, b.S12]))
    right = np.linalg.solve(eye - a.S22 @ b.S11, np.hstack([a.S21, a.S22 @ b.S12]))
    n = eye.shape[0]
    return SMatrix(
        S11=a.S11 + a.S12 @ left[:, :n],
        S12=a.S12 @ left[:, n:],
        S21=b.S21 @ right[:, :n],
        S22=b.S22 + b.S21 @ right[:, n:],
    )


@dataclass(frozen=True, eq=False)
class SliceModes:
    """Transverse eigenmodes of one slice: u = W c, with η∂u or ∂u given by V c.

    A truncated set keeps fewer columns than grid points; fields are then
    projected onto span(W) with the weight of the eigenproblem.
    """

    W: np.ndarray
    V: np.ndarray
    beta: np.ndarray
    weight: Optional[np.ndarray] = None

    @property
    def size(self) -> int:
        return len(self.beta)

    @property
    def truncated(self) -> bool:
        return self.W.shape[1] < self.W.shape[0]

    @cached_property
    def _gram(self) -> np.ndarray:
        return self.W.T @ (self.weight[:, None] * self.W)

    def coefficients(self, field: np.ndarray) -> np.ndarray:
        """Mode amplitudes c with W c closest to `field` (columns are fields)."""
        if not self.truncated:
            return np.linalg.solve(self.W, field)
        return np.linalg.solve(self._gram, self.W.T @ _scale_rows(self.weight, field))

    def derivative_coefficients(self, derivative: np.ndarray) -> np.ndarray:
        """Mode amplitudes c with V c closest to `derivative`."""
        if not self.truncated:
            return np.linalg.solve(self.V, derivative)
        projected = np.linalg.solve(self._gram, self.W.T @ derivative)
        return _scale_rows(1.0 / (1j * self.beta), projected)


@dataclass(frozen=True, eq=False)
class Slice:
    modes: SliceModes
    thickness: float
    smatrix: SMatrix
    to_slice: np.ndarray
    to_slice_derivative: np.ndarray


def difference_operator(count: int, step: float, periodic: bool) -> sp.csr_matrix:
    """Forward differences from cell centres to faces; Dirichlet walls add ghost faces."""
    if periodic:
        rows = np.arange(count)
        data = np.concatenate([-np.ones(count), np.ones(count)])
        cols = np.concatenate([rows, (rows + 1) % count])
        return sp.csr_matrix((data / step, (np.concatenate([rows, rows]), cols)), shape=(count, count))

    faces = count + 1
    upper = sp.eye(faces, count, k=0)
    lower = sp.eye(faces, count, k=-1)
    return ((upper - lower) / step).tocsr()


def _face_average(values: np.ndarray, axis: int, periodic: bool) -> np.ndarray:
    if periodic:
        return 0.5 * (values + np.roll(values, -1, axis=axis))
    first = np.take(values, [0], axis=axis)
    last = np.take(values, [-1], axis=axis)
    inner = 0.5 * (np.take(values, range(values.shape[axis] - 1), axis=axis)
                   + np.take(values, range(1, values.shape[axis]), axis=axis))
    return np.concatenate([first, inner, last], axis=axis)


def _propagation_constants(beta_squared: np.ndarray) -> np.ndarray:
    beta = np.sqrt(beta_squared.astype(complex))
    flip = (beta.imag < 0) | ((beta.imag == 0) & (beta.real < 0))
    beta = np.where(flip, -beta, beta)
    small = np.abs(beta) < BETA_FLOOR
    if small.any():
        logger.debug(f"{int(small.sum())} transverse modes sit at cutoff; flooring β")
        beta = np.where(small, BETA_FLOOR, beta)
    return beta


def _scale_rows(scale: np.ndarray, values: np.ndarray) -> np.ndarray:
    return scale[:, None] * values if values.ndim == 2 else scale * values


def _truncated_eigenpairs(operator, weight: np.ndarray, count: int, shift: float, lossy: bool):
    """The `count` eigenpairs of operator·u = β²·weight·u closest below `shift`."""
    if lossy:
        return spla.eigs((sp.diags(1.0 / weight) @ operator).tocsc(), k=count, sigma=shift, which="LM")
    beta_squared, W = spla.eigsh(
        operator.real.tocsc(), k=count, M=sp.diags(weight.real).tocsc(), sigma=shift, which="LM"
    )
    return beta_squared, W


def transverse_modes(
    eps: np.ndarray,
    steps: Tuple[float, float],
    k0: float,
    pol: Polarization,
    periodic: Tuple[bool, bool] = (True, True),
    count: Optional[int] = None,
) -> SliceModes:
    """Eigenmodes of the transverse operator of a slice with permittivity `eps` (n1, n2).

    TE-like: (∇⊥² + k0²ε) u = β² u, V = W·iβ.
    TM-like: (∇⊥·η∇⊥ + k0²) u = β² η u with η = 1/ε, V = ηW·iβ.

    With `count` below the grid size only the `count` modes of largest β² are
    solved for, by shift-invert on the sparse operator.
    """
    n1, n2 = eps.shape
    size = n1 * n2
    d1 = sp.kron(difference_operator(n1, steps[0], periodic[0]), sp.eye(n2))
    d2 = sp.kron(sp.eye(n1), difference_operator(n2, steps[1], periodic[1]))
    lossy = np.iscomplexobj(eps) and bool(np.abs(np.imag(eps)).max() > 0)

    if pol is Polarization.TE:
        operator = -(d1.T @ d1 + d2.T @ d2) + k0**2 * sp.diags(eps.ravel())
        weight = np.ones(size)
    else:
        eta = 1.0 / eps
        eta1 = _face_average(eta, 0, periodic[0]).ravel()
        eta2 = _face_average(eta, 1, periodic[1]).ravel()
        operator = -(d1.T @ sp.diags(eta1) @ d1 + d2.T @ sp.diags(eta2) @ d2) + k0**2 * sp.eye(size)
        weight = eta.ravel()
    operator = sp.csr_matrix(operator)

    try:
        if count is not None and count < size - 1:
            shift = 1.05 * k0**2 * float(np.real(eps).max()) + 1.0
            beta_squared, W = _truncated_eigenpairs(operator, weight, count, shift, lossy)
            logger.debug(f"Truncated transverse solve: {count} of {size} modes")
        elif lossy:
            beta_squared, W = scipy.linalg.eig(operator.toarray(), np.diag(weight))
        else:
            beta_squared, W = scipy.linalg.eigh(operator.toarray().real, np.diag(weight.real))
    except (np.linalg.LinAlgError, ValueError, RuntimeError, spla.ArpackError) as e:
        raise EigensolverError(f"transverse eigensolve of size {size} failed: {e}", module="planar_solver")

    if not lossy:
        beta_squared = np.real(beta_squared)
    beta = _propagation_constants(beta_squared)
    V = _scale_rows(weight, W) if pol is Polarization.TM else W
    V = V * (1j * beta)[None, :]
    return SliceModes(W=W.astype(complex), V=V.astype(complex), beta=beta, weight=weight)


def make_slice(modes: SliceModes, gap: SliceModes, thickness: float) -> Slice:
    """Slice S-matrix referenced to the gap medium on both sides."""
    Q = modes.coefficients(gap.W)
    R = modes.derivative_coefficients(gap.V)
    A = Q + R
    B = Q - R
    x = np.exp(1j * modes.beta * thickness)

    XB = x[:, None] * B
    A_inv_X = np.linalg.solve(A, np.diag(x))
    D = A - XB @ A_inv_X @ B
    S11 = np.linalg.solve(D, XB @ A_inv_X @ A - B)
    S12 = np.linalg.solve(D, x[:, None] * (A - B @ np.linalg.solve(A, B)))
    smatrix = SMatrix(S11=S11, S12=S12, S21=S12, S22=S11)
    if not smatrix.is_finite():
        raise InstabilityError(
            f"non-finite slice S-matrix (thickness {thickness:g})", module="planar_solver"
        )
    return Slice(modes=modes, thickness=thickness, smatrix=smatrix, to_slice=Q, to_slice_derivative=R)


def cascade(slices: Sequence[Slice]) -> SMatrix:
    total = SMatrix.identity(slices[0].modes.size)
    for layer in slices:
        total = star(total, layer.smatrix)
    if not total.is_finite():
        raise InstabilityError("non-finite global S-matrix", module="planar_solver")
    return total


def interface_amplitudes(
    slices: Sequence[Slice], incident: np.ndarray, from_far_side: bool = False
) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Forward and backward gap amplitudes at every interface 0..len(slices)."""
    size = slices[0].modes.size
    eye = np.eye(size, dtype=complex)
    prefix = [SMatrix.identity(size)]
    for layer in slices:
        prefix.append(star(prefix[-1], layer.smatrix))
    suffix = [SMatrix.identity(size)]
    for layer in reversed(slices):
        suffix.append(star(layer.smatrix, suffix[-1]))
    suffix.reverse()

    amplitudes = []
    for left, right in zip(prefix, suffix):
        if from_far_side:
            backward = np.linalg.solve(eye - right.S11 @ left.S22, right.S12 @ incident)
            forward = left.S22 @ backward
        else:
            forward = np.linalg.solve(eye - left.S22 @ right.S11, left.S21 @ incident)
            backward = right.S11 @ forward
        amplitudes.append((forward, backward))
    return amplitudes


def slice_field(
    layer: Slice,
    left: Tuple[np.ndarray, np.ndarray],
    right: Tuple[np.ndarray, np.ndarray],
    positions: np.ndarray,
) -> np.ndarray:
    """Transverse field at depths `positions` inside the slice, shape (N, len(positions))."""
    forward_left = layer.to_slice @ (left[0] + left[1])
    derivative_left = layer.to_slice_derivative @ (left[0] - left[1])
    forward_right = layer.to_slice @ (right[0] + right[1])
    derivative_right = layer.to_slice_derivative @ (right[0] - right[1])
    c_plus = 0.5 * (forward_left + derivative_left)
    c_minus = 0.5 * (forward_right - derivative_right)

    beta = layer.modes.beta
    z = np.asarray(positions, dtype=float)
    up = np.exp(1j * beta[:, None] * z[None, :])
    down = np.exp(1j * beta[:, None] * (layer.thickness - z)[None, :])
    return layer.modes.W @ (up * c_plus[:, None] + down * c_minus[:, None])
