"""One function per command; each fills the manifest with its artifacts and key results."""

from dataclasses import replace

from loguru import logger

from pbgcavity import exports
from pbgcavity.analytic_inverter import (
    TruncatedSVD,
    assemble_inversion_matrix_multizone,
    build_inversion_system,
    optimize_weights,
    reconstruct_and_contour,
    solve_defect,
    solve_variational,
)
from pbgcavity.bulk_solver import BandGap, BandStructure, Polarization, band_structure, solve_mode_set
from pbgcavity.defect_model import (
    GridSpec,
    assemble_defect_operator,
    defect_real_space,
    electric_field,
    solve_cavity_modes,
    synthesize_field,
)
from pbgcavity.errors import GapError, NoResonanceError
from pbgcavity.ga.evolve import GaConfig, evolve
from pbgcavity.ga.fitness import FitnessModelType, PlanarFitnessModel, SurrogateFitnessModel
from pbgcavity.ga.genome import SlabGenome, decode_genome, default_sites, genome_bounds, repair_genome
from pbgcavity.lattice import LatticeSpec, build_reciprocal_basis, eta_fourier, sample_brillouin_zone
from pbgcavity.objective import CostWeights, build_grams, evaluate_merit
from pbgcavity.planar.resonance import extract_q
from pbgcavity.planar.slab import HoleOverride, SlabSpec
from pbgcavity.planar.solver import scan_reflection, simulate
from pbgcavity.planar.volume import mode_volume_3d
from pbgcavity.utils import log_event
from pipelines import env, tracking
from pipelines.config import RunConfig
from pipelines.manifest import RunManifest


def lattice_spec(config: RunConfig) -> LatticeSpec:
    section = config.lattice
    return LatticeSpec(
        hole_radius=section.hole_radius,
        bulk_index=section.bulk_index,
        hole_index=section.hole_index,
        lattice_type=section.lattice_type,
    )


def slab_spec(config: RunConfig) -> SlabSpec:
    section = config.slab
    overrides = ()
    if section.center_radius is not None:
        overrides = (HoleOverride(site=(0, 0), major=section.center_radius, minor=section.center_radius),)
    return SlabSpec(
        lattice=lattice_spec(config),
        thickness=section.thickness,
        layers=section.layers,
        hole_geometry=overrides,
        mesh=section.mesh,
        padding=section.padding,
        modes=section.modes,
        incidence=section.incidence,
        polarization=section.polarization,
    )


def _gap_results(gap: BandGap) -> dict:
    return {
        "lower_band": gap.lower_band,
        "low": gap.low,
        "high": gap.high,
        "midgap": gap.midgap,
        "relative_width": gap.relative_width,
    }


def _bands(config: RunConfig, manifest: RunManifest) -> tuple:
    spec = lattice_spec(config)
    solver = config.solver
    with manifest.time_stage("bands"):
        basis = build_reciprocal_basis(spec, solver.n_g)
        eta = eta_fourier(spec, basis)
        bands = band_structure(
            eta, basis, solver.path_resolution, solver.polarization, solver.n_bands, env.PBG_NUM_THREADS
        )
    manifest.add_file(exports.write_band_csv(config.output_dir / "bands.csv", bands))
    manifest.results["n_g"] = basis.size
    manifest.results["gaps"] = [_gap_results(gap) for gap in bands.gaps]
    return spec, basis, eta, bands


def _select_gap(bands: BandStructure, lower_band: int) -> BandGap:
    for gap in bands.gaps:
        if gap.lower_band == lower_band:
            return gap
    raise GapError(
        f"no complete {bands.polarization.value} gap above band {lower_band}",
        module="bulk_solver",
    )


def run_bands(config: RunConfig, manifest: RunManifest, run=None):
    _, _, _, bands = _bands(config, manifest)
    if bands.gap is not None:
        tracking.log_metrics(run, {"gap_low": bands.gap.low, "gap_high": bands.gap.high})


def run_invert2d(config: RunConfig, manifest: RunManifest, run=None):
    objective = config.objective
    workers = env.PBG_NUM_THREADS
    _, basis, eta, bands = _bands(config, manifest)
    gap = _select_gap(bands, config.solver.gap_band)
    omega_m = gap.midgap if objective.omega_m == "midgap" else float(objective.omega_m)
    if not gap.contains(omega_m):
        raise GapError(
            f"ω_m={omega_m:.6f} lies outside the gap [{gap.low:.6f}, {gap.high:.6f}]",
            module="analytic_inverter",
        )
    tracking.log_metrics(run, {"gap_low": gap.low, "gap_high": gap.high, "omega_m": omega_m})

    with manifest.time_stage("mode_set"):
        sampling = sample_brillouin_zone(basis, config.solver.n_q)
        mode_set = solve_mode_set(eta, basis, sampling, config.solver.polarization, workers)

    with manifest.time_stage("grams"):
        grams = build_grams(mode_set, objective.domain, objective.q_min, objective.gamma_penalty, workers)

    merit_grid = GridSpec.centered(0.5 * objective.domain, objective.resolution)

    def merit(weights: CostWeights, result) -> float:
        field = synthesize_field(result.coefficients, mode_set, merit_grid)
        value = evaluate_merit(result.coefficients, grams, weights, field).cost
        tracking.log_metrics(run, {"beta_I": weights.beta_I, "beta_V": weights.beta_V, "merit": value})
        return value

    initial = CostWeights(beta_I=objective.beta_I, beta_V=objective.beta_V)
    with manifest.time_stage("variational"):
        if objective.optimize_weights:
            weights, result = optimize_weights(
                grams, initial, objective.weight_budget, merit, objective.selector
            )
        else:
            weights, result = initial, solve_variational(grams, initial, objective.selector)

    expansion = result.coefficients.normalized().with_frequency(omega_m)
    with manifest.time_stage("inversion"):
        system = build_inversion_system(expansion, mode_set, gap=gap, workers=workers)
        if objective.zones > 1:
            system = replace(
                system, matrix=assemble_inversion_matrix_multizone(expansion, mode_set, objective.zones)
            )
        svd = TruncatedSVD(system.matrix, objective.svd_tolerance)
        defect = solve_defect(system, objective.svd_tolerance, svd)

    with manifest.time_stage("verification"):
        operator = assemble_defect_operator(mode_set, defect.symmetrized(), workers)
        supported = solve_cavity_modes(operator, mode_set, gap, require=True)
    recovered_omega = min((mode.omega_m for mode in supported), key=lambda omega: abs(omega - omega_m))

    half_width = objective.layers + 0.5
    with manifest.time_stage("fields"):
        grid = GridSpec.centered(half_width, objective.resolution)
        field = synthesize_field(expansion, mode_set, grid).normalized()
        figures = evaluate_merit(expansion, grams, weights, synthesize_field(expansion, mode_set, merit_grid))
        volume = figures.volume
        contour = reconstruct_and_contour(
            defect, eta, GridSpec.centered(half_width, objective.contour_resolution)
        )

    out = config.output_dir
    manifest.add_file(exports.write_field_ascii(out / "cavity_field.txt", field))
    manifest.add_file(exports.write_field_csv(out / "cavity_field.csv", field))
    manifest.add_file(exports.write_field_ascii(out / "dielectric.txt", contour.dielectric, part="real"))
    manifest.add_file(exports.write_contours(out / "contours.json", contour))
    if mode_set.polarization is Polarization.TE:
        points = grid.points()
        eta_values = eta.synthesize(points) + defect_real_space(defect, points)
        ex, ey = electric_field(expansion, mode_set, eta_values, grid)
        manifest.add_file(exports.write_field_csv(out / "efield_x.csv", ex))
        manifest.add_file(exports.write_field_csv(out / "efield_y.csv", ey))

    center = contour.hole_at((0, 0))
    manifest.results.update({
        "gap": _gap_results(gap),
        "omega_m": omega_m,
        "beta_I": weights.beta_I,
        "beta_V": weights.beta_V,
        "lagrange_eigenvalue": result.lagrange_eigenvalue,
        "J": figures.cost,
        "q_proxy": figures.q_proxy,
        "intensity": figures.intensity,
        "V_a2": volume,
        "V_lambda2": volume * omega_m**2,
        "light_cone_fraction": expansion.light_cone_fraction(mode_set),
        "svd_rank": svd.rank,
        "svd_condition": svd.cond,
        "inversion_residual": system.residual(defect),
        "recovered_omega": recovered_omega,
        "contour_level": contour.level,
        "holes": [hole.as_dict() for hole in contour.holes],
        "center_hole": center.as_dict() if center else None,
        "center_radius": contour.center_radius(),
        "center_index": contour.disk_index(eta.spec.hole_radius),
    })
    log_event("invert2d", omega_m=omega_m, J=figures.cost, V_lambda2=volume * omega_m**2)
    logger.success(
        f"invert2d: ω_m={omega_m:.6f}, J={figures.cost:.6g}, V={volume * omega_m**2:.4f} λ², "
        f"{len(contour.holes)} holes"
    )


def _resonance_results(spec: SlabSpec, spectrum, min_depth: float, manifest: RunManifest, export: bool):
    try:
        resonance = extract_q(spectrum, min_depth)
    except NoResonanceError as e:
        logger.warning(f"No resonance in the scanned band: {e}")
        manifest.results["resonance"] = None
        return None

    manifest.results["resonance"] = {
        "omega0": resonance.omega0,
        "fwhm": resonance.fwhm,
        "q": resonance.q,
        "amplitude": resonance.amplitude,
    }
    if export:
        field = simulate(spec, resonance.omega0).field
        manifest.add_file(exports.write_field_binary(manifest.output_dir / "field.bin", field))
        manifest.results["resonance"]["V_lambda3"] = mode_volume_3d(field) * resonance.omega0**3
    return resonance


def run_planar_scan(config: RunConfig, manifest: RunManifest, run=None):
    section = config.slab
    spec = slab_spec(config)
    with manifest.time_stage("scan"):
        spectrum = scan_reflection(
            spec,
            (section.omega_min, section.omega_max),
            section.n_points,
            refinement_levels=section.refinement_levels,
            min_depth=section.min_depth,
            workers=env.PBG_NUM_THREADS,
        )
    manifest.add_file(exports.write_spectrum_csv(config.output_dir / "spectrum.csv", spectrum))
    manifest.results["n_frequencies"] = spectrum.size
    resonance = _resonance_results(spec, spectrum, section.min_depth, manifest, section.export_field)
    if resonance is not None:
        tracking.log_metrics(run, {"omega0": resonance.omega0, "Q": resonance.q})


def run_ga_opt(config: RunConfig, manifest: RunManifest, run=None):
    section = config.ga
    spec = slab_spec(config)
    sites = section.site_list() or default_sites()
    bounds = genome_bounds(sites)
    objective = config.objective
    weights = CostWeights(objective.beta_I, objective.beta_V) if objective else CostWeights()

    if config.run.fitness is FitnessModelType.surrogate:
        model = SurrogateFitnessModel(SlabGenome.nominal(spec.lattice, sites))
        workers = env.PBG_NUM_THREADS
    else:
        model = PlanarFitnessModel(
            slab=spec,
            weights=weights,
            omega_range=(config.slab.omega_min, config.slab.omega_max),
            sites=sites,
            n_points=config.slab.n_points,
            refinement_levels=config.slab.refinement_levels,
            min_depth=config.slab.min_depth,
            clearance=section.clearance,
            workers=env.PBG_NUM_THREADS,
        )
        workers = 1

    ga_config = GaConfig(
        population=section.population,
        mutation_rate=section.mutation_rate,
        crossover_rate=section.crossover_rate,
        sigma=section.sigma,
        budget=section.budget,
        seed=config.run.seed,
        checkpoint_every=section.checkpoint_every,
    )
    checkpoint = config.output_dir / "ga.ckpt"

    def on_generation(record):
        tracking.log_metrics(
            run,
            {"best_fitness": record.best_fitness, "mean_fitness": record.mean_fitness},
            step=record.generation,
        )

    with manifest.time_stage("ga"):
        best, log = evolve(
            ga_config,
            model,
            bounds,
            workers=workers,
            checkpoint_path=checkpoint,
            resume=config.run.resume,
            on_generation=on_generation,
        )

    genome = repair_genome(SlabGenome.from_flat(best, sites), spec.lattice, section.clearance)
    holes = [
        {"site": list(o.site), "dx": o.dx, "dy": o.dy, "major": o.major, "minor": o.minor}
        for o in decode_genome(genome)
    ]
    manifest.add_file(exports.write_generation_log(config.output_dir / "ga_log.csv", log))
    manifest.add_file(exports.write_json(config.output_dir / "best_genome.json", {"holes": holes}))
    manifest.add_file(checkpoint)
    manifest.results.update({
        "fitness_model": model.name,
        "generations": log[-1].generation,
        "evaluations": log[-1].evaluations,
        "best_fitness": log[-1].best_fitness,
        "monotone": log.is_monotone(),
        "wall_clock": [record.wall_clock for record in log.records],
    })


COMMANDS = {
    "bands": run_bands,
    "invert2d": run_invert2d,
    "planar-scan": run_planar_scan,
    "ga-opt": run_ga_opt,
}
