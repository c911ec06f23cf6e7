"""Artifact writers. Every float goes through `format_float`, so equal runs give equal bytes."""

import csv
import json
from pathlib import Path
from typing import Iterable, List, Sequence

import numpy as np

from pbgcavity.defect_model import FieldGrid2D
from pbgcavity.planar.solver import FieldGrid3D
from pbgcavity.utils import format_float


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([value if isinstance(value, str) else format_float(value) for value in row])
    return path


def write_band_csv(path: Path, band_structure) -> Path:
    header, rows = band_structure.csv_rows()
    return write_csv(path, header, rows)


def write_spectrum_csv(path: Path, spectrum) -> Path:
    header, rows = spectrum.csv_rows()
    return write_csv(path, header, rows)


def write_generation_log(path: Path, log) -> Path:
    header, rows = log.csv_rows()
    return write_csv(path, header, rows)


def write_field_ascii(path: Path, field: FieldGrid2D, part: str = "abs") -> Path:
    """Whitespace matrix, one grid row (fixed y) per line, under a three-line header."""
    values = {"abs": np.abs, "real": np.real, "imag": np.imag}[part](field.values)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("# extent " + " ".join(format_float(v) for v in field.extent) + "\n")
        handle.write(f"# resolution {field.resolution}\n")
        handle.write(f"# max_abs {format_float(field.max_abs)} part {part}\n")
        for row in values:
            handle.write(" ".join(format_float(v) for v in row) + "\n")
    return path


def write_field_csv(path: Path, field: FieldGrid2D) -> Path:
    grid = field.grid()
    points = grid.points().reshape(-1, 2)
    values = field.values.ravel()
    rows = (
        [point[0], point[1], value.real, value.imag, abs(value)]
        for point, value in zip(points, values)
    )
    return write_csv(path, ["x", "y", "re", "im", "abs"], rows)


def write_field_binary(path: Path, field: FieldGrid3D) -> Path:
    """Little-endian float64: [nx, ny, nz, x0, x1, y0, y1, z0, z1], then Re, then Im (C order)."""
    nx, ny, nz = field.shape
    header = np.array(
        [nx, ny, nz, field.x[0], field.x[-1], field.y[0], field.y[-1], field.z[0], field.z[-1]],
        dtype="<f8",
    )
    values = np.asarray(field.values, dtype=complex)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as handle:
        handle.write(header.tobytes())
        handle.write(np.ascontiguousarray(values.real, dtype="<f8").tobytes())
        handle.write(np.ascontiguousarray(values.imag, dtype="<f8").tobytes())
    return path


def read_field_binary(path: Path, component: str = "E") -> FieldGrid3D:
    """Inverse of `write_field_binary`; axes come back as uniform spacings of the stored extents."""
    data = np.fromfile(path, dtype="<f8")
    nx, ny, nz = (int(v) for v in data[:3])
    x0, x1, y0, y1, z0, z1 = data[3:9]
    count = nx * ny * nz
    real = data[9:9 + count].reshape(nx, ny, nz)
    imag = data[9 + count:9 + 2 * count].reshape(nx, ny, nz)
    return FieldGrid3D(
        x=np.linspace(x0, x1, nx),
        y=np.linspace(y0, y1, ny),
        z=np.linspace(z0, z1, nz),
        values=real + 1j * imag,
        component=component,
    )


def write_field3d_ascii(path: Path, field: FieldGrid3D) -> Path:
    rows = (
        [x, y, z, field.values[i, j, k].real, field.values[i, j, k].imag]
        for i, x in enumerate(field.x)
        for j, y in enumerate(field.y)
        for k, z in enumerate(field.z)
    )
    return write_csv(path, ["x", "y", "z", "re", "im"], rows)


def write_json(path: Path, payload) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")
    return path


def write_contours(path: Path, contour) -> Path:
    payload = {
        "level": contour.level,
        "holes": [hole.as_dict() for hole in contour.holes],
    }
    return write_json(path, payload)


def read_csv(path: Path) -> List[List[str]]:
    with open(path, newline="", encoding="utf-8") as handle:
        return list(csv.reader(handle))
