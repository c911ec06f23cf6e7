from pbgcavity.planar.resonance import ResonanceFit, extract_q, find_resonances
from pbgcavity.planar.slab import HoleOverride, IlluminationSide, Incidence, SlabSpec
from pbgcavity.planar.solver import (
    FieldGrid3D,
    ReflectionSpectrum,
    Simulation,
    scan_reflection,
    simulate,
    thin_film_reflectance,
)
from pbgcavity.planar.volume import mode_volume_3d
