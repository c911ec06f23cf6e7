import math
import unittest
from unittest.mock import patch

import numpy as np
import numpy.testing as npt

from pbgcavity.analytic_inverter import (
    Selector,
    TruncatedSVD,
    assemble_inversion_matrix_multizone,
    build_inversion_system,
    optimize_weights,
    reconstruct_and_contour,
    solve_defect,
    solve_variational,
)
from pbgcavity.bulk_solver import BandGap, Polarization, gap_from_modes, solve_mode_set
from pbgcavity.defect_model import (
    CavityExpansion,
    DefectFourier,
    GridSpec,
    PlantedHole,
    assemble_defect_operator,
    solve_cavity_modes,
)
from pbgcavity.errors import GapError, RankError, SolverError
from pbgcavity.lattice import LatticeSpec, build_reciprocal_basis, eta_fourier, sample_brillouin_zone
from pbgcavity.objective import CostWeights, ObjectiveGrams


def random_hermitian(size, seed):
    rng = np.random.default_rng(seed)
    matrix = rng.normal(size=(size, size)) + 1j * rng.normal(size=(size, size))
    return 0.5 * (matrix + matrix.conj().T)


def grams_for(matrix):
    """Grams whose system matrix is `matrix` for β_I = β_V = 0."""
    size = matrix.shape[0]
    zero = np.zeros_like(matrix)
    return ObjectiveGrams(
        overlap=zero,
        origin_outer=zero,
        qproxy=matrix,
        origin_values=np.zeros(size, dtype=complex),
        domain=1.0,
        band_indices=np.arange(size),
        q_indices=np.zeros(size, dtype=int),
    )


def planted_round_trip(n_g, n_q):
    """In-gap mode of a filled central hole, and the δη recovered from it."""
    spec = LatticeSpec()
    basis = build_reciprocal_basis(spec, n_g)
    eta = eta_fourier(spec, basis)
    modes = solve_mode_set(eta, basis, sample_brillouin_zone(basis, n_q), Polarization.TE)
    gap = gap_from_modes(modes, 0)
    planted = DefectFourier.from_holes(modes, [PlantedHole.filled(spec)])
    cavity = solve_cavity_modes(assemble_defect_operator(modes, planted), modes, gap, require=True)[0]
    system = build_inversion_system(cavity, modes, gap=gap)
    svd = TruncatedSVD(system.matrix)
    recovered = solve_defect(system, svd=svd)
    return planted, recovered, system, svd


def relative_error(planted, recovered) -> float:
    """‖recovered - planted‖ / ‖planted‖ over the shared wavevector grid."""
    npt.assert_array_equal(recovered.indices, planted.indices)
    return float(
        np.linalg.norm(recovered.coefficients - planted.coefficients) / np.linalg.norm(planted.coefficients)
    )


class TestVariational(unittest.TestCase):
    def test_smallest_eigenvalue_matches_dense_solve(self):
        """6×6 instances agree with a full diagonalization."""
        for seed in range(5):
            matrix = random_hermitian(6, seed)
            result = solve_variational(grams_for(matrix), CostWeights(0.0, 0.0))
            values, vectors = np.linalg.eigh(matrix)
            self.assertAlmostEqual(result.lagrange_eigenvalue, values[0], delta=1e-12)
            overlap = abs(np.vdot(vectors[:, 0], result.coefficients.coefficients))
            self.assertAlmostEqual(overlap, 1.0, delta=1e-10)
            self.assertLess(result.residual, 1e-8)
            self.assertAlmostEqual(result.cost_value, values[0], delta=1e-10)

    def test_max_cost_selector(self):
        matrix = random_hermitian(6, 9)
        result = solve_variational(grams_for(matrix), CostWeights(0.0, 0.0), Selector.max_cost)
        self.assertAlmostEqual(result.lagrange_eigenvalue, np.linalg.eigvalsh(matrix)[-1], delta=1e-12)

    def test_max_cost_selector_with_merit(self):
        matrix = np.diag([1.0, 2.0, 3.0]).astype(complex)
        result = solve_variational(
            grams_for(matrix), CostWeights(0.0, 0.0), Selector.max_cost, merit=lambda v: -abs(v[1])
        )
        self.assertNotEqual(result.coefficients.mode_index, 1)


class TestWeightSearch(unittest.TestCase):
    def test_converges_on_unimodal_merit(self):
        """Optimum within 5% of β* in at most 50 evaluations."""
        target = (3.0, 0.5)

        def merit(weights, _):
            return -(math.log(weights.beta_I / target[0]) ** 2 + math.log(weights.beta_V / target[1]) ** 2)

        history = []
        best, _ = optimize_weights(
            grams_for(random_hermitian(4, 1)), CostWeights(1.0, 1.0), budget=50, merit=merit, history=history
        )
        self.assertLessEqual(len(history), 50)
        self.assertAlmostEqual(best.beta_I / target[0], 1.0, delta=0.05)
        self.assertAlmostEqual(best.beta_V / target[1], 1.0, delta=0.05)

    def test_budget_of_one(self):
        history = []
        best, _ = optimize_weights(grams_for(random_hermitian(4, 2)), CostWeights(2.0, 3.0), budget=1, history=history)
        self.assertEqual(len(history), 1)
        self.assertEqual(best, CostWeights(2.0, 3.0))


class TestTruncatedSVD(unittest.TestCase):
    def test_rank_deficient_minimum_norm(self):
        matrix = np.array([[1.0, 1.0], [1.0, 1.0]], dtype=complex)
        svd = TruncatedSVD(matrix)
        self.assertEqual(svd.rank, 1)
        npt.assert_allclose(svd.lstsq(np.array([2.0, 2.0])), [1.0, 1.0], atol=1e-12)

    def test_zero_matrix(self):
        svd = TruncatedSVD(np.zeros((2, 2), dtype=complex))
        self.assertEqual(svd.rank, 0)
        with self.assertRaises(RankError):
            svd.lstsq(np.ones(2))


class TestInversion(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.planted, cls.recovered, cls.system, cls.svd = planted_round_trip(37, 37)

    def test_planted_defect_solves_the_system(self):
        scale = np.linalg.norm(self.system.rhs)
        self.assertLess(self.system.residual(self.planted) / scale, 1e-8)
        self.assertLess(self.system.residual(self.recovered) / scale, 1e-6)

    def test_round_trip_recovers_planted_defect(self):
        """The filled central hole comes back within 5% in L2."""
        self.assertLess(relative_error(self.planted, self.recovered), 0.05)

    def test_recovered_defect_is_real(self):
        self.assertLess(self.recovered.reality_error(), 1e-12)


class TestFrequencyChecks(unittest.TestCase):
    def setUp(self):
        spec = LatticeSpec()
        basis = build_reciprocal_basis(spec, 1)
        self.modes = solve_mode_set(eta_fourier(spec, basis), basis, sample_brillouin_zone(basis, 1), Polarization.TE)

    def test_frequency_outside_gap(self):
        expansion = CavityExpansion.from_vector(self.modes, np.ones(1), omega_m=0.9)
        with self.assertRaises(GapError):
            build_inversion_system(expansion, self.modes, gap=BandGap(0, 0.2, 0.3))

    def test_missing_frequency(self):
        expansion = CavityExpansion.from_vector(self.modes, np.ones(1))
        with self.assertRaises(SolverError):
            build_inversion_system(expansion, self.modes)

    def test_unchecked_frequency_is_logged(self):
        expansion = CavityExpansion.from_vector(self.modes, np.ones(1), omega_m=0.9)
        with patch("pbgcavity.analytic_inverter.logger") as log:
            build_inversion_system(expansion, self.modes)
        log.warning.assert_called_once()
        self.assertIn("not checked", log.warning.call_args[0][0])


class TestMultizone(unittest.TestCase):
    def test_single_zone_matches_first_zone_matrix(self):
        spec = LatticeSpec()
        basis = build_reciprocal_basis(spec, 7)
        modes = solve_mode_set(eta_fourier(spec, basis), basis, sample_brillouin_zone(basis, 7), Polarization.TE)
        rng = np.random.default_rng(4)
        expansion = CavityExpansion.from_vector(
            modes, rng.normal(size=modes.size) + 1j * rng.normal(size=modes.size), omega_m=0.25
        )
        system = build_inversion_system(expansion, modes)
        folded = assemble_inversion_matrix_multizone(expansion, modes, zones=1)
        npt.assert_allclose(folded, system.matrix, atol=1e-12)
        for zones in (2, 3):
            folded = assemble_inversion_matrix_multizone(expansion, modes, zones=zones)
            npt.assert_allclose(folded, system.matrix, atol=1e-10 * np.abs(system.matrix).max())

    def test_second_zone_folds_onto_first(self):
        """Relabelling every mode into the next zone leaves the folded rows unchanged."""
        spec = LatticeSpec()
        basis = build_reciprocal_basis(spec, 7)
        modes = solve_mode_set(eta_fourier(spec, basis), basis, sample_brillouin_zone(basis, 7), Polarization.TM)
        rng = np.random.default_rng(8)
        expansion = CavityExpansion.from_vector(
            modes, rng.normal(size=modes.size) + 1j * rng.normal(size=modes.size), omega_m=0.3
        )
        one = assemble_inversion_matrix_multizone(expansion, modes, zones=1)
        two = assemble_inversion_matrix_multizone(expansion, modes, zones=2)
        second_zone = 2.0 * two - one
        npt.assert_allclose(second_zone, one, atol=1e-10 * np.abs(one).max())
        with self.assertRaises(SolverError):
            assemble_inversion_matrix_multizone(expansion, modes, zones=basis.size + 1)


class TestContours(unittest.TestCase):
    def setUp(self):
        self.spec = LatticeSpec()
        basis = build_reciprocal_basis(self.spec, 7)
        self.eta = eta_fourier(self.spec, basis)
        self.modes = solve_mode_set(self.eta, basis, sample_brillouin_zone(basis, 7), Polarization.TE)

    def test_bulk_holes_without_defect(self):
        """δη = 0 recovers the circular bulk holes to within one grid cell."""
        resolution = 32
        contour = reconstruct_and_contour(
            DefectFourier.zeros(self.modes), self.eta, GridSpec.centered(1.6, resolution), bulk="geometry"
        )
        center = contour.hole_at((0, 0))
        self.assertIsNotNone(center)
        self.assertAlmostEqual(center.major, self.spec.hole_radius, delta=1.0 / resolution)
        self.assertAlmostEqual(center.minor, self.spec.hole_radius, delta=1.0 / resolution)
        self.assertAlmostEqual(center.mean_index, 1.0, delta=1e-9)
        self.assertIsNotNone(contour.hole_at((1, 0)))
        self.assertEqual(contour.holes[0].site, (0, 0))
        self.assertAlmostEqual(contour.center_radius(), self.spec.hole_radius, delta=1.0 / resolution)
        self.assertAlmostEqual(contour.disk_index(0.8 * self.spec.hole_radius), 1.0, delta=1e-9)
        self.assertAlmostEqual(contour.disk_index(0.1, center=(0.5, 0.0)), self.spec.bulk_index, delta=1e-9)

    def test_fourier_bulk(self):
        contour = reconstruct_and_contour(DefectFourier.zeros(self.modes), self.eta, GridSpec.centered(1.6, 16))
        self.assertIsNotNone(contour.hole_at((0, 0)))
        self.assertEqual(contour.dielectric.values.shape, (51, 51))


if __name__ == "__main__":
    unittest.main()
