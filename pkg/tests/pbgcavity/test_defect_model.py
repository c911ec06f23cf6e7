import unittest

import numpy as np
import numpy.testing as npt

from pbgcavity.bulk_solver import (
    Polarization,
    assemble_operator,
    gap_from_modes,
    mode_amplitude,
    solve_mode_set,
    wavevector_kernel,
)
from pbgcavity.defect_model import (
    CavityExpansion,
    DefectFourier,
    GridSpec,
    PlantedHole,
    assemble_defect_operator,
    defect_real_space,
    electric_field,
    solve_cavity_modes,
    synthesize_field,
)
from pbgcavity.errors import MissingCoefficientError, NoInGapModeError, SolverError
from pbgcavity.lattice import LatticeSpec, build_reciprocal_basis, eta_fourier, sample_brillouin_zone


def mode_set_for(n_g, n_q, pol=Polarization.TE, spec=None):
    spec = spec or LatticeSpec()
    basis = build_reciprocal_basis(spec, n_g)
    eta = eta_fourier(spec, basis)
    return spec, eta, solve_mode_set(eta, basis, sample_brillouin_zone(basis, n_q), pol)


class TestDefectFourier(unittest.TestCase):
    def setUp(self):
        self.spec, _, self.modes = mode_set_for(7, 7)

    def test_zero_defect_grid(self):
        defect = DefectFourier.zeros(self.modes)
        self.assertEqual(defect.size, self.modes.size)
        self.assertEqual(defect.divisions, self.modes.sampling.divisions)

    def test_planted_hole_is_real_in_space(self):
        hole = PlantedHole(center=(0.2, -0.1), semi_x=0.25, semi_y=0.15, delta_eta=0.3, angle=0.4)
        defect = DefectFourier.from_holes(self.modes, [hole])
        self.assertLess(defect.reality_error(), 1e-12)

    def test_filled_hole_sign(self):
        """Filling a hole lowers η at the centre."""
        defect = DefectFourier.from_holes(self.modes, [PlantedHole.filled(self.spec)])
        self.assertLess(defect_real_space(defect, np.zeros((1, 2)))[0], 0.0)

    def test_symmetrized_restores_reality(self):
        defect = DefectFourier.from_holes(self.modes, [PlantedHole.filled(self.spec)])
        noisy = DefectFourier(
            b=defect.b,
            divisions=defect.divisions,
            indices=defect.indices,
            coefficients=defect.coefficients + 1e-3j,
        )
        self.assertGreater(noisy.reality_error(), 1e-4)
        self.assertLess(noisy.symmetrized().reality_error(), 1e-15)

    def test_incompatible_grid(self):
        _, _, other = mode_set_for(7, 19)
        with self.assertRaises(MissingCoefficientError):
            assemble_defect_operator(other, DefectFourier.zeros(self.modes))


class TestDefectOperator(unittest.TestCase):
    def setUp(self):
        self.spec, self.eta, self.modes = mode_set_for(37, 37)
        self.gap = gap_from_modes(self.modes, 0)

    def test_zero_defect_reproduces_bulk(self):
        operator = assemble_defect_operator(self.modes, DefectFourier.zeros(self.modes))
        npt.assert_allclose(np.diag(operator).real, self.modes.eigenvalues, rtol=1e-12, atol=1e-12)
        npt.assert_allclose(operator - np.diag(np.diag(operator)), 0.0, atol=1e-12)

    def test_zero_defect_has_no_in_gap_mode(self):
        operator = assemble_defect_operator(self.modes, DefectFourier.zeros(self.modes))
        self.assertEqual(solve_cavity_modes(operator, self.modes, self.gap), [])
        with self.assertRaises(NoInGapModeError):
            solve_cavity_modes(operator, self.modes, self.gap, require=True)

    def test_filled_hole_binds_a_mode(self):
        """Filling the central hole pulls at least one state into the gap."""
        defect = DefectFourier.from_holes(self.modes, [PlantedHole.filled(self.spec)])
        operator = assemble_defect_operator(self.modes, defect, workers=2)
        npt.assert_allclose(operator, operator.conj().T, atol=1e-10)
        cavity = solve_cavity_modes(operator, self.modes, self.gap, require=True)
        self.assertGreaterEqual(len(cavity), 1)
        for mode in cavity:
            self.assertTrue(self.gap.contains(mode.omega_m))
            self.assertAlmostEqual(mode.norm, 1.0, delta=1e-10)


class TestSupercellOracle(unittest.TestCase):
    def supercell_operator(self, eta, modes, defect):
        """Plane-wave operator on every q + G of the supercell, assembled without Bloch modes."""
        k = modes.wavevectors.reshape(-1, 2)
        k_indices = modes.k_indices.reshape(-1, 2)
        size = modes.basis.size
        matrix = defect.lookup(k_indices[:, None, :] - k_indices[None, :, :]) * wavevector_kernel(
            k, k, modes.polarization
        )
        for iq, q in enumerate(modes.sampling.q_points):
            block = slice(iq * size, (iq + 1) * size)
            matrix[block, block] += assemble_operator(eta, modes.basis, q, modes.polarization)
        return 0.5 * (matrix + matrix.conj().T)

    def test_eigenvalues_match_supercell(self):
        """N_G = N_q = 7: the Bloch-mode operator has the supercell spectrum."""
        hole = PlantedHole(center=(1.0, 0.0), semi_x=0.3, semi_y=0.2, delta_eta=-0.5, angle=0.3)
        for pol in (Polarization.TE, Polarization.TM):
            spec, eta, modes = mode_set_for(7, 7, pol)
            defect = DefectFourier.from_holes(modes, [PlantedHole.filled(spec), hole])
            expected = np.linalg.eigvalsh(self.supercell_operator(eta, modes, defect))
            actual = np.linalg.eigvalsh(assemble_defect_operator(modes, defect))
            npt.assert_allclose(actual, expected, rtol=1e-8, atol=1e-8 * float(np.abs(expected).max()))


class TestFieldSynthesis(unittest.TestCase):
    def setUp(self):
        self.spec, self.eta, self.modes = mode_set_for(7, 7)
        rng = np.random.default_rng(11)
        vector = np.zeros(self.modes.size, dtype=complex)
        chosen = rng.choice(self.modes.size, 3, replace=False)
        vector[chosen] = rng.normal(size=3) + 1j * rng.normal(size=3)
        self.expansion = CavityExpansion.from_vector(self.modes, vector, omega_m=0.3)
        self.chosen = chosen

    def test_matches_mode_sum(self):
        grid = GridSpec.centered(1.0, 4)
        field = synthesize_field(self.expansion, self.modes, grid)
        direct = np.zeros(grid.shape, dtype=complex)
        for index in self.chosen:
            iq, band = divmod(int(index), self.modes.n_bands)
            direct += self.expansion.coefficients[index] * mode_amplitude(self.modes.mode(iq, band), grid.points())
        npt.assert_allclose(field.values, direct, atol=1e-10)

    def test_normalized_peak(self):
        field = synthesize_field(self.expansion, self.modes, GridSpec.centered(1.0, 8)).normalized()
        self.assertAlmostEqual(field.max_abs, 1.0, delta=1e-12)

    def test_grid_layout(self):
        grid = GridSpec.centered(1.0, 4)
        self.assertEqual(grid.shape, (8, 8))
        self.assertAlmostEqual(grid.x[0], -0.875)
        self.assertEqual(grid.points().shape, (8, 8, 2))

    def test_light_cone_fraction_bounds(self):
        fraction = self.expansion.light_cone_fraction(self.modes)
        self.assertGreaterEqual(fraction, 0.0)
        self.assertLessEqual(fraction, 1.0)

    def test_electric_field_needs_te(self):
        _, _, tm_modes = mode_set_for(7, 7, Polarization.TM)
        expansion = CavityExpansion.from_vector(tm_modes, self.expansion.coefficients, omega_m=0.3)
        grid = GridSpec.centered(0.5, 4)
        with self.assertRaises(SolverError):
            electric_field(expansion, tm_modes, np.ones(grid.shape), grid)

    def test_electric_field_shapes(self):
        grid = GridSpec.centered(0.5, 4)
        ex, ey = electric_field(self.expansion, self.modes, np.ones(grid.shape), grid)
        self.assertEqual(ex.values.shape, grid.shape)
        self.assertTrue(np.isfinite(ey.values).all())


if __name__ == "__main__":
    unittest.main()
