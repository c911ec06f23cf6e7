from loguru import logger

from pbgcavity.analytic_inverter import TruncatedSVD, build_inversion_system, solve_defect
from pbgcavity.bulk_solver import Polarization, gap_from_modes, solve_mode_set
from pbgcavity.defect_model import (
    DefectFourier,
    GridSpec,
    PlantedHole,
    assemble_defect_operator,
    solve_cavity_modes,
    synthesize_field,
)
from pbgcavity.lattice import LatticeSpec, build_reciprocal_basis, eta_fourier, sample_brillouin_zone


def main():
    spec = LatticeSpec(hole_radius=0.3, bulk_index=3.4, hole_index=1.0)
    basis = build_reciprocal_basis(spec, 37)
    eta = eta_fourier(spec, basis)
    modes = solve_mode_set(eta, basis, sample_brillouin_zone(basis, 37), Polarization.TE, workers=4)

    gap = gap_from_modes(modes, 0)
    logger.info(f"TE gap: {gap.low:.4f} - {gap.high:.4f} (a/λ)")

    # Fill the central hole and look for states pulled into the gap
    defect = DefectFourier.from_holes(modes, [PlantedHole.filled(spec)])
    cavities = solve_cavity_modes(assemble_defect_operator(modes, defect, workers=4), modes, gap, require=True)
    cavity = cavities[0]
    logger.info(f"Cavity mode at ω = {cavity.omega_m:.4f}, light-cone fraction {cavity.light_cone_fraction(modes):.3f}")

    field = synthesize_field(cavity, modes, GridSpec.centered(2.5, 16)).normalized()
    logger.info(f"Field grid {field.values.shape}, peak {field.max_abs:.3f}")

    system = build_inversion_system(cavity, modes, gap=gap)
    svd = TruncatedSVD(system.matrix)
    recovered = solve_defect(system, svd=svd)
    logger.info(f"Recovered δη: rank {svd.rank}, residual {system.residual(recovered):.3e}")


if __name__ == "__main__":
    main()
