import math
import unittest

import numpy as np
import numpy.testing as npt

from pbgcavity.errors import ConfigError, MissingCoefficientError
from pbgcavity.lattice import (
    LatticeSpec,
    build_reciprocal_basis,
    eta_fourier,
    fold_to_bz,
    high_symmetry_points,
    in_first_bz,
    is_below_light_line,
    nearest_site,
    rasterize_unit_cell,
    sample_brillouin_zone,
)

SHORTEST_G = 4.0 * math.pi / math.sqrt(3.0)


class TestLatticeSpec(unittest.TestCase):
    def test_reciprocal_duality(self):
        spec = LatticeSpec()
        npt.assert_allclose(
            spec.primitive_vectors @ spec.reciprocal_vectors.T, 2.0 * math.pi * np.eye(2), atol=1e-12
        )

    def test_rejects_invalid_geometry(self):
        with self.assertRaises(ConfigError) as ctx:
            LatticeSpec(hole_radius=0.6, bulk_index=0.5)
        self.assertEqual(len(ctx.exception.errors), 2)
        self.assertEqual(ctx.exception.module, "lattice")

    def test_nearest_site(self):
        spec = LatticeSpec()
        self.assertEqual(nearest_site(spec, spec.site_position(2, -1) + 0.1), (2, -1))


class TestReciprocalBasis(unittest.TestCase):
    def setUp(self):
        self.spec = LatticeSpec()

    def test_single_vector(self):
        basis = build_reciprocal_basis(self.spec, 1)
        self.assertEqual(basis.size, 1)
        npt.assert_array_equal(basis.indices, [[0, 0]])

    def test_first_shell(self):
        """Seven vectors: Γ plus the six shortest, all of length 4π/√3."""
        basis = build_reciprocal_basis(self.spec, 7)
        self.assertEqual(basis.size, 7)
        npt.assert_allclose(basis.norms[0], 0.0)
        npt.assert_allclose(basis.norms[1:], SHORTEST_G, rtol=1e-12)

    def test_rounds_up_to_closed_shell(self):
        basis = build_reciprocal_basis(self.spec, 8)
        self.assertEqual(basis.size, 13)
        self.assertEqual(basis.requested, 8)

    def test_negation_closed_and_sorted(self):
        for n_g in (7, 19, 61, 127):
            basis = build_reciprocal_basis(self.spec, n_g)
            self.assertTrue((basis.table().positions(-basis.indices) >= 0).all())
            self.assertTrue(np.all(np.diff(basis.norms) >= -1e-9))

    def test_rejects_empty_basis(self):
        with self.assertRaises(ConfigError):
            build_reciprocal_basis(self.spec, 0)


class TestEtaFourier(unittest.TestCase):
    def setUp(self):
        self.spec = LatticeSpec(hole_radius=0.3, bulk_index=3.4, hole_index=1.0)
        self.basis = build_reciprocal_basis(self.spec, 19)
        self.eta = eta_fourier(self.spec, self.basis)

    def test_uniform_medium(self):
        spec = LatticeSpec(bulk_index=2.0, hole_index=2.0)
        eta = eta_fourier(spec, self.basis)
        for (m, n), value in eta.as_dict().items():
            expected = 0.25 if (m, n) == (0, 0) else 0.0
            self.assertAlmostEqual(abs(value - expected), 0.0, delta=1e-15)

    def test_average_coefficient(self):
        fill = 2.0 * math.pi * 0.3**2 / math.sqrt(3.0)
        expected = fill + (1.0 - fill) / 3.4**2
        self.assertAlmostEqual(self.eta.coefficient(0, 0).real, expected, delta=1e-12)

    def test_reality(self):
        for (m, n), value in self.eta.as_dict().items():
            self.assertAlmostEqual(abs(self.eta.coefficient(-m, -n) - np.conj(value)), 0.0, delta=1e-15)

    def test_matches_fft_of_rasterized_cell(self):
        """Analytic coefficients agree with a brute-force FFT of the sampled unit cell."""
        samples = 512
        spectrum = np.fft.fft2(rasterize_unit_cell(self.spec, samples)) / samples**2
        for m, n in self.basis.indices:
            oracle = spectrum[m % samples, n % samples]
            self.assertAlmostEqual(abs(self.eta.coefficient(m, n) - oracle), 0.0, delta=1e-3)

    def test_lookup_outside_table(self):
        with self.assertRaises(MissingCoefficientError):
            self.eta.coefficient(40, 40)


class TestBrillouinZone(unittest.TestCase):
    def setUp(self):
        self.spec = LatticeSpec()
        self.basis = build_reciprocal_basis(self.spec, 61)
        self.b = self.basis.b

    def test_gamma_only(self):
        sampling = sample_brillouin_zone(self.basis, 1)
        npt.assert_allclose(sampling.q_points, [[0.0, 0.0]])
        self.assertAlmostEqual(sampling.weights.sum(), self.basis.bz_area, delta=1e-9)

    def test_exact_count_inside_zone(self):
        """n_q = N_G gives exactly N_G distinct points, negation closed, all in the first zone."""
        for n_q in (7, 19, 61):
            sampling = sample_brillouin_zone(self.basis, n_q)
            self.assertEqual(sampling.size, n_q)
            keys = {tuple(row) for row in sampling.fine_indices}
            self.assertEqual(len(keys), n_q)
            q_points = sampling.q_points
            for q in q_points:
                self.assertTrue(in_first_bz(q, self.b))
                partner = fold_to_bz(-q, self.b)
                self.assertTrue(np.any(np.all(np.isclose(q_points, partner, atol=1e-9), axis=1)))
            self.assertAlmostEqual(sampling.weights.sum(), self.basis.bz_area, delta=1e-9)

    def test_every_small_count(self):
        """Even squares like 4, 16 and 36 need a grid with enough ± pairs."""
        for n_q in range(1, 41):
            sampling = sample_brillouin_zone(self.basis, n_q)
            self.assertEqual(sampling.size, n_q, f"n_q={n_q}")
            self.assertEqual(len({tuple(row) for row in sampling.fine_indices}), n_q)
            self.assertAlmostEqual(sampling.weights.sum(), self.basis.bz_area, delta=1e-9)
            q_points = sampling.q_points
            for q in q_points:
                partner = fold_to_bz(-q, self.b)
                self.assertTrue(np.any(np.all(np.isclose(q_points, partner, atol=1e-9), axis=1)))

    def test_deterministic(self):
        first = sample_brillouin_zone(self.basis, 19)
        second = sample_brillouin_zone(self.basis, 19)
        npt.assert_array_equal(first.fine_indices, second.fine_indices)

    def test_folding_is_idempotent(self):
        rng = np.random.default_rng(3)
        for q in rng.uniform(-20.0, 20.0, size=(50, 2)):
            folded = fold_to_bz(q, self.b)
            self.assertTrue(in_first_bz(folded, self.b))
            npt.assert_allclose(fold_to_bz(folded, self.b), folded, atol=1e-12)

    def test_high_symmetry_points_on_zone_boundary(self):
        points = high_symmetry_points(self.spec)
        self.assertAlmostEqual(np.linalg.norm(points["X"]), SHORTEST_G / 2.0, delta=1e-12)
        self.assertAlmostEqual(np.linalg.norm(points["J"]), SHORTEST_G / math.sqrt(3.0), delta=1e-12)
        for label in ("X", "J"):
            self.assertTrue(in_first_bz(points[label], self.b))


class TestLightLine(unittest.TestCase):
    def test_gamma_is_inside_the_cone(self):
        self.assertFalse(is_below_light_line(np.zeros(2), 0.3))

    def test_zero_frequency(self):
        self.assertTrue(is_below_light_line(np.array([0.1, 0.0]), 0.0))

    def test_direct_inequality(self):
        q = np.array([0.5 * 2.0 * math.pi, 0.0])
        self.assertTrue(is_below_light_line(q, 0.4))
        self.assertFalse(is_below_light_line(q, 0.6))

    def test_unfolded_wavevector_is_folded(self):
        """q = b1 is Γ after folding, so it sits inside the cone even without `b`."""
        b = LatticeSpec().reciprocal_vectors
        self.assertFalse(is_below_light_line(b[0], 0.3))
        self.assertFalse(is_below_light_line(b[0] + np.array([0.1, 0.0]), 0.3, b))


if __name__ == "__main__":
    unittest.main()
