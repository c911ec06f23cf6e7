# The MIT License (MIT)
# Copyright © 2024 pbgcavity developers
# Copyright © 2025 pbgcavity contributors

# Permission is hereby granted, free of charge, to any person obtaining a copy of this software and associated
# documentation files (the “Software”), to deal in the Software without restriction, including without limitation
# the rights to use, copy, modify, merge, publish, distribute, sublicense, and/or sell copies of the Software,
# and to permit persons to whom the Software is furnished to do so, subject to the following conditions:

# The above copyright notice and this permission notice shall be included in all copies or substantial portions of
# the Software.

# THE SOFTWARE IS PROVIDED “AS IS”, WITHOUT WARRANTY OF ANY KIND, EXPRESS OR IMPLIED, INCLUDING BUT NOT LIMITED TO
# THE WARRANTIES OF MERCHANTABILITY, FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL
# THE AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER LIABILITY, WHETHER IN AN ACTION
# OF CONTRACT, TORT OR OTHERWISE, ARISING FROM, OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER
# DEALINGS IN THE SOFTWARE.

import argparse
import configparser
import difflib
import os
import sys
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple, Type, Union

from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from pbgcavity.analytic_inverter import Selector
from pbgcavity.bulk_solver import Polarization
from pbgcavity.config import (
    Command,
    DefaultGaConfig,
    DefaultObjectiveConfig,
    DefaultSlabConfig,
    DefaultSolverConfig,
)
from pbgcavity.errors import ConfigError
from pbgcavity.ga.fitness import FitnessModelType
from pbgcavity.lattice import LatticeType
from pbgcavity.planar.slab import Incidence
from pbgcavity.utils import EVENTS_LEVEL
from pipelines import env

SOLVER = DefaultSolverConfig()
OBJECTIVE = DefaultObjectiveConfig()
SLAB = DefaultSlabConfig()
GA = DefaultGaConfig()


class Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class RunSection(Section):
    command: Command = Field(title="Command", description="Pipeline to execute.")
    seed: int = Field(0, ge=0, title="Seed", description="Seed for every random stream.")
    output_dir: str = Field(
        default_factory=lambda: str(Path(env.PBG_OUTPUT_ROOT) / "run"),
        title="Output directory",
        description="Directory receiving artifacts and the manifest.",
    )
    resume: bool = Field(False, description="Continue a GA run from its checkpoint.")
    fitness: FitnessModelType = Field(
        FitnessModelType.planar, description="GA fitness: the planar solver or the quadratic surrogate."
    )


class LatticeSection(Section):
    lattice_type: LatticeType = LatticeType.hexagonal
    hole_radius: float = Field(0.3, gt=0.0, lt=0.5, description="Hole radius in units of a.")
    bulk_index: float = Field(3.4, ge=1.0, description="Background refractive index.")
    hole_index: float = Field(1.0, ge=1.0, description="Refractive index inside the holes.")


class SolverSection(Section):
    n_g: int = Field(SOLVER.n_g, ge=1, title="N_G", description="Requested plane waves per q.")
    n_q: int = Field(SOLVER.n_q, ge=1, title="N_q", description="Brillouin-zone samples.")
    n_bands: int = Field(SOLVER.n_bands, ge=2, description="Bands on the band-structure path.")
    path_resolution: int = Field(SOLVER.path_resolution, ge=1, description="Points per path segment.")
    polarization: Polarization = Polarization(SOLVER.polarization)
    gap_band: int = Field(0, ge=0, description="Lower band index of the gap hosting the cavity.")


class ObjectiveSection(Section):
    beta_I: float = Field(OBJECTIVE.beta_I, ge=0.0, description="Weight of the centre intensity.")
    beta_V: float = Field(OBJECTIVE.beta_V, ge=0.0, description="Weight of the mode volume.")
    omega_m: Union[Literal["midgap"], float] = Field(
        "midgap", description="Cavity frequency in a/λ, or 'midgap'."
    )
    q_min: float = Field(OBJECTIVE.q_min, gt=0.0, description="Γ threshold in units of 2π/a.")
    gamma_penalty: float = Field(OBJECTIVE.gamma_penalty, gt=0.0)
    domain: float = Field(OBJECTIVE.domain, gt=0.0, description="Side of the evaluation square in a.")
    layers: int = Field(OBJECTIVE.layers, ge=1, description="Lattice rings covered by the exported grids.")
    resolution: int = Field(OBJECTIVE.resolution, ge=4, description="Field grid points per a.")
    contour_resolution: int = Field(OBJECTIVE.contour_resolution, ge=8)
    weight_budget: int = Field(OBJECTIVE.weight_budget, ge=1, description="Eigenproblems in the β search.")
    optimize_weights: bool = True
    svd_tolerance: float = Field(OBJECTIVE.svd_tolerance, gt=0.0, lt=1.0)
    selector: Selector = Selector(OBJECTIVE.selector)
    zones: int = Field(1, ge=1, description="Brillouin zones summed in the inversion matrix.")


class SlabSection(Section):
    thickness: float = Field(SLAB.thickness, gt=0.0, description="Slab thickness d/a.")
    layers: int = Field(SLAB.layers, ge=1)
    mesh: int = Field(SLAB.mesh, ge=2, description="Cells per a.")
    padding: float = Field(SLAB.padding, ge=1.0, description="Air above and below the slab, in a.")
    modes: int = Field(SLAB.modes, ge=1, description="Transverse modes kept per slice.")
    incidence: Incidence = Incidence(SLAB.incidence)
    polarization: Polarization = Polarization(SLAB.polarization)
    omega_min: float = Field(0.25, gt=0.0)
    omega_max: float = Field(0.35, gt=0.0)
    n_points: int = Field(SLAB.n_points, ge=3)
    refinement_levels: int = Field(SLAB.refinement_levels, ge=0)
    min_depth: float = Field(SLAB.min_depth, gt=0.0, lt=1.0)
    center_radius: Optional[float] = Field(
        None, ge=0.0, lt=0.5, description="Radius of the central hole; 0 fills it, empty keeps the bulk hole."
    )
    export_field: bool = True

    @model_validator(mode="after")
    def check_range(self):
        if self.omega_max <= self.omega_min:
            raise ValueError("omega_max must exceed omega_min")
        return self


class GaSection(Section):
    population: int = Field(GA.population, ge=2)
    mutation_rate: float = Field(GA.mutation_rate, ge=0.0, le=1.0)
    crossover_rate: float = Field(GA.crossover_rate, ge=0.0, le=1.0)
    sigma: float = Field(GA.sigma, ge=0.0, description="Mutation standard deviation in a.")
    budget: int = Field(GA.budget, ge=0, description="Generations.")
    checkpoint_every: int = Field(GA.checkpoint_every, ge=1)
    clearance: float = Field(GA.clearance, ge=0.0)
    sites: Optional[str] = Field(
        None, description="Comma-separated m:n site list; the 13 default sites when empty."
    )

    @field_validator("sites")
    @classmethod
    def check_sites(cls, value: Optional[str]) -> Optional[str]:
        if value is None or not value.strip():
            return None
        pairs = _parse_sites(value)
        if len(set(pairs)) != len(pairs):
            raise ValueError("sites must not repeat")
        return ", ".join(f"{m}:{n}" for m, n in pairs)

    def site_list(self) -> Optional[List[Tuple[int, int]]]:
        return _parse_sites(self.sites) if self.sites else None


def _parse_sites(text: str) -> List[Tuple[int, int]]:
    pairs = []
    for item in text.split(","):
        parts = item.strip().split(":")
        if len(parts) != 2:
            raise ValueError(f"site '{item.strip()}' is not of the form m:n")
        try:
            pairs.append((int(parts[0]), int(parts[1])))
        except ValueError:
            raise ValueError(f"site '{item.strip()}' has non-integer coordinates") from None
    return pairs


SECTIONS: Dict[str, Type[Section]] = {
    "run": RunSection,
    "lattice": LatticeSection,
    "solver": SolverSection,
    "objective": ObjectiveSection,
    "slab": SlabSection,
    "ga": GaSection,
}

REQUIRED_SECTIONS = {
    Command.bands: ("run", "lattice", "solver"),
    Command.invert2d: ("run", "lattice", "solver", "objective"),
    Command.planar_scan: ("run", "lattice", "slab"),
    Command.ga_opt: ("run", "lattice", "slab", "ga"),
}


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    run: RunSection
    lattice: LatticeSection = LatticeSection()
    solver: Optional[SolverSection] = None
    objective: Optional[ObjectiveSection] = None
    slab: Optional[SlabSection] = None
    ga: Optional[GaSection] = None

    @model_validator(mode="after")
    def check_sections(self):
        missing = [name for name in REQUIRED_SECTIONS[self.run.command] if getattr(self, name) is None]
        if missing:
            raise ValueError(f"{self.run.command.value} needs sections {missing}")
        return self

    @property
    def command(self) -> Command:
        return self.run.command

    @property
    def output_dir(self) -> Path:
        return Path(self.run.output_dir)

    def echo(self) -> dict:
        return self.model_dump(mode="json", exclude_none=True)


def _suggest(key: str, candidates) -> str:
    match = difflib.get_close_matches(key, list(candidates), n=1, cutoff=0.6)
    return f"; did you mean '{match[0]}'?" if match else ""


def _format_error(section: str, error: dict, fields) -> str:
    key = ".".join(str(part) for part in error.get("loc", ())) or "<section>"
    if error.get("type") == "extra_forbidden":
        return f"unknown key '{key}' in [{section}]{_suggest(key, fields)}"
    if error.get("type") == "missing":
        return f"missing key {section}.{key}"
    return f"{section}.{key}: {error.get('msg')} (got {error.get('input')!r})"


def parse_config(text: str) -> RunConfig:
    """Sectioned `key = value` text into a validated RunConfig, reporting every problem at once."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigError([f"unreadable config: {e}"])

    errors: List[str] = []
    sections: Dict[str, Section] = {}
    for name in parser.sections():
        model = SECTIONS.get(name)
        if model is None:
            errors.append(f"unknown section [{name}]{_suggest(name, SECTIONS)}")
            continue
        values = dict(parser.items(name))
        try:
            sections[name] = model(**values)
        except ValidationError as e:
            errors.extend(_format_error(name, error, model.model_fields) for error in e.errors())

    if "run" not in parser.sections():
        errors.append("missing section [run]")
    elif "run" in sections:
        for name in REQUIRED_SECTIONS[sections["run"].command]:
            if name not in parser.sections():
                errors.append(f"missing section [{name}] required by {sections['run'].command.value}")

    if errors:
        raise ConfigError(errors)
    try:
        return RunConfig(**sections)
    except ValidationError as e:
        raise ConfigError([_format_error("config", error, SECTIONS) for error in e.errors()])


def load_config(path: Path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise ConfigError([f"cannot read {path}: {e}"])
    return parse_config(text)


def with_overrides(config: RunConfig, output_dir: Optional[str] = None, seed: Optional[int] = None) -> RunConfig:
    updates = {}
    if output_dir is not None:
        updates["output_dir"] = output_dir
    if seed is not None:
        if seed < 0:
            raise ConfigError([f"run.seed must be >= 0, got {seed}"])
        updates["seed"] = seed
    if not updates:
        return config
    return config.model_copy(update={"run": config.run.model_copy(update=updates)})


def add_args(parser: argparse.ArgumentParser):
    parser.add_argument("--config", type=str, required=True, help="Path to the run configuration file.")

    parser.add_argument(
        "--output.dir",
        type=str,
        dest="output_dir",
        help="Overrides run.output_dir.",
        default=None,
    )

    parser.add_argument(
        "--run.seed",
        type=int,
        dest="seed",
        help="Overrides run.seed.",
        default=None,
    )

    parser.add_argument(
        "--logging.debug",
        action="store_true",
        dest="debug",
        help="Log per-step detail to stdout.",
        default=False,
    )

    parser.add_argument(
        "--logging.trace",
        action="store_true",
        dest="trace",
        help="Log everything to stdout.",
        default=False,
    )

    parser.add_argument("--wandb.on", action="store_true", dest="wandb_on")
    parser.set_defaults(wandb_on=False)


def check_config(args: argparse.Namespace, config: RunConfig) -> int:
    """Creates the output directory and configures the log sinks; returns the events sink id."""
    os.makedirs(config.output_dir, exist_ok=True)

    level = "TRACE" if args.trace else "DEBUG" if args.debug else "INFO"
    logger.remove()
    logger.add(sys.stdout, level=level, format="{time:YYYY-MM-DD at HH:mm:ss} | {level} | {message}")

    # Check if "EVENTS" level already exists before adding it
    if EVENTS_LEVEL not in [level.name for level in logger._core.levels.values()]:
        logger.level(EVENTS_LEVEL, no=38, icon="📝")

    return logger.add(
        str(config.output_dir / "events.log"),
        rotation="100 MB",
        serialize=True,
        enqueue=True,
        backtrace=False,
        diagnose=False,
        level=EVENTS_LEVEL,
        format="{time:YYYY-MM-DD at HH:mm:ss} | {level} | {message}",
    )


def get_config(argv=None) -> Tuple[argparse.Namespace, RunConfig]:
    parser = argparse.ArgumentParser(prog="pbgcavity", description="Photonic band-gap cavity design runs.")
    add_args(parser)
    args = parser.parse_args(argv)
    config = with_overrides(load_config(args.config), args.output_dir, args.seed)
    return args, config
