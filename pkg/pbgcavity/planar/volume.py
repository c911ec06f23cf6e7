from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import simpson

from pbgcavity.errors import SolverError
from pbgcavity.planar.solver import FieldGrid3D


def mode_volume_3d(
    field: FieldGrid3D, interior: Optional[Sequence[Tuple[float, float]]] = None
) -> float:
    """∫|u|² dV / max|u|² by Simpson's rule along each axis.

    `interior` is an optional ((x0, x1), (y0, y1), (z0, z1)) box; the integral spans
    the sample nodes inside it.
    """
    if interior is not None:
        field = field.crop(interior)
    if min(field.shape) < 2:
        raise SolverError(f"too few samples for quadrature: {field.shape}", module="planar_solver")

    intensity = np.abs(field.values) ** 2
    peak = float(intensity.max())
    if peak <= 0.0:
        raise SolverError("mode volume of a zero field", module="planar_solver")

    integral = simpson(intensity, x=field.z, axis=2)
    integral = simpson(integral, x=field.y, axis=1)
    integral = simpson(integral, x=field.x, axis=0)
    return float(integral) / peak
