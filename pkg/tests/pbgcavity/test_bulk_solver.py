import math
import unittest

import numpy as np
import numpy.testing as npt

from pbgcavity.bulk_solver import (
    Polarization,
    assemble_operator,
    band_structure,
    canonicalize_degenerate,
    clamp_eigenvalues,
    gap_from_modes,
    mode_amplitude,
    solve_bands,
    solve_mode_set,
)
from pbgcavity.errors import ConfigError, EigensolverError
from pbgcavity.lattice import LatticeSpec, build_reciprocal_basis, eta_fourier, sample_brillouin_zone


def _setup(n_g=61, **spec_kwargs):
    spec = LatticeSpec(**spec_kwargs)
    basis = build_reciprocal_basis(spec, n_g)
    return spec, basis, eta_fourier(spec, basis)


class TestOperator(unittest.TestCase):
    def setUp(self):
        self.spec, self.basis, self.eta = _setup(19)

    def test_hermitian(self):
        q = np.array([0.7, -0.2])
        for pol in Polarization:
            matrix = assemble_operator(self.eta, self.basis, q, pol)
            npt.assert_allclose(matrix, matrix.conj().T, atol=1e-14)

    def test_modes_are_unit_normalized(self):
        modes = solve_bands(self.eta, self.basis, np.array([0.3, 0.4]), Polarization.TE, 5)
        for mode in modes:
            self.assertAlmostEqual(np.linalg.norm(mode.h_coeffs), 1.0, delta=1e-12)
        omegas = [mode.omega for mode in modes]
        self.assertEqual(omegas, sorted(omegas))

    def test_band_count_is_bounded(self):
        with self.assertRaises(ConfigError):
            solve_bands(self.eta, self.basis, np.zeros(2), Polarization.TE, self.basis.size + 1)


class TestEmptyLattice(unittest.TestCase):
    def test_free_photon_dispersion(self):
        """Uniform medium: ω = |q + G| / (2π n) to relative error < 1e-10."""
        n = 1.5
        spec, basis, eta = _setup(61, bulk_index=n, hole_index=n)
        rng = np.random.default_rng(0)
        for q in rng.uniform(-3.0, 3.0, size=(20, 2)):
            expected = np.sort(np.linalg.norm(q + basis.vectors, axis=1)) / (2.0 * math.pi * n)
            for pol in Polarization:
                modes = solve_bands(eta, basis, q, pol, basis.size)
                omegas = np.array([mode.omega for mode in modes])
                npt.assert_allclose(omegas, expected, rtol=1e-10)


class TestBandStructure(unittest.TestCase):
    def test_te_gap_of_air_holes(self):
        """r = 0.3a air holes in n = 3.4 have a TE gap between the first two bands."""
        _, basis, eta = _setup(61)
        bands = band_structure(eta, basis, 6, Polarization.TE, 4)
        self.assertIsNotNone(bands.gap)
        self.assertEqual(bands.gap.lower_band, 0)
        self.assertGreater(bands.gap.width, 0.0)
        self.assertTrue(bands.gap.contains(bands.midgap(0)))
        self.assertTrue(np.all(np.diff(bands.bands, axis=1) >= 0))

    def test_gap_shrinks_with_hole_index(self):
        _, basis, eta_air = _setup(61, hole_index=1.0)
        _, _, eta_filled = _setup(61, hole_index=1.9)
        air = band_structure(eta_air, basis, 6, Polarization.TE, 3)
        filled = band_structure(eta_filled, basis, 6, Polarization.TE, 3)
        self.assertLess(filled.gap_width(0), air.gap_width(0))

    def test_path_and_csv(self):
        _, basis, eta = _setup(7)
        bands = band_structure(eta, basis, 4, Polarization.TM, 3)
        self.assertEqual(bands.bands.shape, (13, 3))
        self.assertEqual([label for label, _ in bands.ticks], ["Γ", "X", "J", "Γ"])
        header, rows = bands.csv_rows()
        self.assertEqual(header[:3], ["path_coordinate", "q_x", "q_y"])
        self.assertEqual(len(rows), 13)

    def test_parallel_matches_serial(self):
        _, basis, eta = _setup(19)
        serial = band_structure(eta, basis, 3, Polarization.TE, 3, workers=1)
        threaded = band_structure(eta, basis, 3, Polarization.TE, 3, workers=4)
        npt.assert_array_equal(serial.bands, threaded.bands)


class TestModeSet(unittest.TestCase):
    def setUp(self):
        _, self.basis, self.eta = _setup(37)
        self.sampling = sample_brillouin_zone(self.basis, 19)
        self.modes = solve_mode_set(self.eta, self.basis, self.sampling, Polarization.TE)

    def test_shapes_and_labels(self):
        self.assertEqual(self.modes.omegas.shape, (19, self.basis.size))
        self.assertEqual(self.modes.coefficients.shape, (19, self.basis.size, self.basis.size))
        self.assertEqual(self.modes.size, 19 * self.basis.size)
        self.assertEqual(int(self.modes.q_labels[self.basis.size]), 1)
        self.assertEqual(int(self.modes.band_labels[self.basis.size + 2]), 2)

    def test_sampled_gap_exists(self):
        gap = gap_from_modes(self.modes, 0)
        self.assertIsNotNone(gap)
        self.assertLess(gap.low, gap.high)

    def test_mode_amplitude_matches_direct_sum(self):
        mode = self.modes.mode(3, 1)
        rng = np.random.default_rng(7)
        r = rng.uniform(-2.0, 2.0, size=(5, 2))
        direct = [
            sum(h * np.exp(1j * np.dot(k, point)) for h, k in zip(mode.h_coeffs, mode.wavevectors))
            for point in r
        ]
        npt.assert_allclose(mode_amplitude(mode, r), direct, atol=1e-12)


class TestEigenHelpers(unittest.TestCase):
    def test_clamps_round_off(self):
        npt.assert_array_equal(clamp_eigenvalues(np.array([-1e-14, 1.0]), "test"), [0.0, 1.0])

    def test_rejects_negative_eigenvalue(self):
        with self.assertRaises(EigensolverError):
            clamp_eigenvalues(np.array([-0.5, 1.0]), "test")

    def test_degenerate_basis_is_deterministic(self):
        """A rotated basis of a degenerate pair canonicalizes to the same vectors."""
        eigenvalues = np.array([1.0, 1.0, 2.0])
        basis = np.eye(3, dtype=complex)
        angle = 0.4
        rotated = basis.copy()
        rotated[:, 0] = math.cos(angle) * basis[:, 0] + 1j * math.sin(angle) * basis[:, 1]
        rotated[:, 1] = 1j * math.sin(angle) * basis[:, 0] + math.cos(angle) * basis[:, 1]
        npt.assert_allclose(
            canonicalize_degenerate(eigenvalues, rotated), canonicalize_degenerate(eigenvalues, basis), atol=1e-12
        )


if __name__ == "__main__":
    unittest.main()
