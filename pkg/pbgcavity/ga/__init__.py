from pbgcavity.ga.checkpoint import load_checkpoint, save_checkpoint
from pbgcavity.ga.evolve import GaConfig, GenerationLog, GenerationRecord, Propagation, SteadyStateGA, evolve
from pbgcavity.ga.fitness import (
    SENTINEL,
    BaseFitnessModel,
    FitnessModelType,
    PlanarFitnessModel,
    SurrogateFitnessModel,
    get_fitness_model,
)
from pbgcavity.ga.genome import SlabGenome, decode_genome, default_sites, genome_bounds, repair_genome
