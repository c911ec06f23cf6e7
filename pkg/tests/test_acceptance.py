"""End-to-end checks at production sizes. Set PBG_SLOW_TESTS=1 to run them."""

import json
import os
import tempfile
import unittest
from pathlib import Path

import numpy as np

from pbgcavity.bulk_solver import Polarization, band_structure
from pbgcavity.lattice import LatticeSpec, build_reciprocal_basis, eta_fourier
from pbgcavity.planar.slab import Incidence, SlabSpec
from pbgcavity.planar.solver import simulate, thin_film_reflectance
from pipelines.commands import slab_spec
from pipelines.config import load_config, parse_config
from pipelines.run import EXIT_OK, run
from tests.pbgcavity.test_analytic_inverter import planted_round_trip, relative_error

SLOW = unittest.skipUnless(os.environ.get("PBG_SLOW_TESTS"), "set PBG_SLOW_TESTS=1")


@SLOW
class TestConvergence(unittest.TestCase):
    def test_te_gap_converges_in_n_g(self):
        spec = LatticeSpec()
        gaps = []
        for n_g in (127, 169):
            basis = build_reciprocal_basis(spec, n_g)
            bands = band_structure(eta_fourier(spec, basis), basis, 8, Polarization.TE, 3)
            gaps.append(bands.gap_width(0))
        self.assertGreater(gaps[1], 0.0)
        self.assertLess(abs(gaps[0] - gaps[1]) / gaps[1], 0.01)

    def test_round_trip_at_full_size(self):
        planted, recovered, _, _ = planted_round_trip(61, 61)
        self.assertLess(relative_error(planted, recovered), 0.05)


@SLOW
class TestUniformSlab(unittest.TestCase):
    def test_airy_at_default_mesh(self):
        spec = SlabSpec(
            lattice=LatticeSpec(bulk_index=3.4, hole_index=3.4), layers=1, padding=1.0, incidence=Incidence.vertical
        )
        for omega in np.linspace(0.25, 0.35, 21):
            result = simulate(spec, omega, fields=False)
            self.assertAlmostEqual(result.reflectance, float(thin_film_reflectance(3.4, 0.75, omega)), delta=1e-3)


@SLOW
class TestShippedSlab(unittest.TestCase):
    def test_edge_simulation_at_shipped_size(self):
        spec = slab_spec(load_config(Path(__file__).resolve().parents[1] / "configs" / "planar_scan.ini"))
        result = simulate(spec, 0.3, fields=False)
        for value in (result.reflectance, result.transmittance):
            self.assertTrue(np.isfinite(value))
            self.assertGreaterEqual(value, 0.0)
            self.assertLessEqual(value, 1.0)


@SLOW
class TestPipelines(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.out = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_invert2d(self):
        """r = 0.3a holes in n = 3.4: the centre hole shrinks or fills, its index rises, V < λ²/2."""
        config = parse_config(f"""
[run]
command = invert2d
output_dir = {self.out}

[lattice]
hole_radius = 0.3
bulk_index = 3.4
hole_index = 1.0

[solver]
n_g = 61
n_q = 61

[objective]
domain = 10
layers = 5
""")
        self.assertEqual(run(config), EXIT_OK)
        for name in ("cavity_field.txt", "cavity_field.csv", "dielectric.txt", "contours.json", "efield_x.csv"):
            self.assertTrue((self.out / name).exists(), name)
        results = json.loads((self.out / "manifest.json").read_text())["results"]
        self.assertGreater(results["svd_rank"], 0)
        self.assertTrue(results["gap"]["low"] < results["omega_m"] < results["gap"]["high"])
        self.assertGreater(len(results["holes"]), 0)
        self.assertLess(results["center_radius"], 0.3)
        self.assertGreater(results["center_index"], 1.5)
        self.assertLess(results["V_lambda2"], 0.5)
        self.assertTrue(results["gap"]["low"] < results["recovered_omega"] < results["gap"]["high"])

    def test_ga_planar_smoke(self):
        config = parse_config(f"""
[run]
command = ga-opt
output_dir = {self.out}

[lattice]

[slab]
layers = 1
mesh = 8
padding = 1
n_points = 5
refinement_levels = 0

[ga]
population = 2
budget = 1
sites = 0:0
""")
        self.assertEqual(run(config), EXIT_OK)
        results = json.loads((self.out / "manifest.json").read_text())["results"]
        self.assertEqual(results["evaluations"], 4)
        self.assertTrue(results["monotone"])


if __name__ == "__main__":
    unittest.main()
