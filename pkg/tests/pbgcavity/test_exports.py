import tempfile
import unittest
from pathlib import Path

import numpy as np
import numpy.testing as npt

from pbgcavity import exports
from pbgcavity.defect_model import FieldGrid2D
from pbgcavity.ga.evolve import GenerationLog, GenerationRecord
from pbgcavity.planar.solver import FieldGrid3D, ReflectionSpectrum
from pbgcavity.utils import format_float


class TestExports(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.out = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_format_float_round_trips(self):
        for value in (0.1, 1.0 / 3.0, -2.5e-17, 1e300):
            self.assertEqual(float(format_float(value)), value)
        self.assertEqual(format_float(float("nan")), "nan")
        self.assertEqual(format_float(None), "")

    def test_field_binary_layout(self):
        rng = np.random.default_rng(2)
        values = rng.normal(size=(3, 4, 5)) + 1j * rng.normal(size=(3, 4, 5))
        field = FieldGrid3D(
            x=np.linspace(-1.0, 1.0, 3), y=np.linspace(0.0, 3.0, 4), z=np.linspace(-2.0, 2.0, 5), values=values
        )
        path = exports.write_field_binary(self.out / "field.bin", field)
        self.assertEqual(path.stat().st_size, 8 * (9 + 2 * values.size))
        raw = np.fromfile(path, dtype="<f8")
        npt.assert_array_equal(raw[:3], [3, 4, 5])
        npt.assert_array_equal(raw[3:9], [-1.0, 1.0, 0.0, 3.0, -2.0, 2.0])

        restored = exports.read_field_binary(path)
        npt.assert_array_equal(restored.values, values)
        npt.assert_allclose(restored.y, field.y)

    def test_field_ascii_header(self):
        values = np.array([[1.0, -2.0j], [0.5, 0.0]])
        field = FieldGrid2D(extent=(-1.0, 1.0, -1.0, 1.0), resolution=1, values=values)
        path = exports.write_field_ascii(self.out / "field.txt", field)
        lines = path.read_text().splitlines()
        self.assertTrue(lines[0].startswith("# extent"))
        self.assertEqual(lines[1], "# resolution 1")
        self.assertTrue(lines[2].startswith("# max_abs 2"))
        self.assertTrue(lines[2].endswith("part abs"))
        self.assertEqual(lines[3].split(), ["1", "2"])
        self.assertEqual(len(lines), 5)

    def test_field_csv_columns(self):
        field = FieldGrid2D(extent=(0.0, 2.0, 0.0, 1.0), resolution=1, values=np.array([[1j, 3.0 + 4.0j]]))
        rows = exports.read_csv(exports.write_field_csv(self.out / "field.csv", field))
        self.assertEqual(rows[0], ["x", "y", "re", "im", "abs"])
        self.assertEqual(rows[2], ["1.5", "0.5", "3", "4", "5"])

    def test_spectrum_csv_is_deterministic(self):
        spectrum = ReflectionSpectrum(
            frequencies=np.array([0.25, 0.3, 0.35]),
            reflectance=np.array([0.1, 0.7, 0.2]),
            transmittance=np.array([0.9, 0.3, 0.8]),
        )
        first = exports.write_spectrum_csv(self.out / "a.csv", spectrum).read_bytes()
        second = exports.write_spectrum_csv(self.out / "b.csv", spectrum).read_bytes()
        self.assertEqual(first, second)
        self.assertTrue(first.startswith(b"omega,R,T\n"))

    def test_generation_log_omits_wall_clock(self):
        log = GenerationLog()
        log.append(GenerationRecord(0, 10, -1.5, -3.0, (0.1, 0.2), wall_clock=1.0))
        log.append(GenerationRecord(1, 20, -0.5, -2.0, (0.1, 0.3), wall_clock=2.5))
        rows = exports.read_csv(exports.write_generation_log(self.out / "ga_log.csv", log))
        self.assertEqual(rows[0], ["generation", "evaluations", "best_fitness", "mean_fitness", "g0", "g1"])
        self.assertEqual(rows[2][:3], ["1", "20", "-0.5"])
        self.assertNotIn("wall_clock", rows[0])

    def test_json_is_sorted(self):
        path = exports.write_json(self.out / "nested" / "out.json", {"b": 1, "a": [1.5]})
        self.assertLess(path.read_text().index('"a"'), path.read_text().index('"b"'))


if __name__ == "__main__":
    unittest.main()
