from typing import List, Optional, Sequence


class PbgCavityError(Exception):
    """Base error for every failure the library reports to the batch entry point.

    Each error knows the module it came from, a remediation hint for the operator
    and the process exit code the pipeline maps it to.
    """

    exit_code: int = 3
    default_hint: str = ""

    def __init__(
        self,
        message: str,
        module: Optional[str] = None,
        hint: Optional[str] = None,
    ):
        super().__init__(message)
        self.message = message
        self.module = module or "pbgcavity"
        self.hint = hint if hint is not None else self.default_hint

    def __str__(self):
        return self.message

    def describe(self) -> str:
        text = f"{self.module}: {self.message}"
        if self.hint:
            text += f" (hint: {self.hint})"
        return text


class ConfigError(PbgCavityError):
    exit_code = 2
    default_hint = "fix the listed entries in the config file"

    def __init__(
        self,
        errors: Sequence[str],
        module: Optional[str] = None,
        hint: Optional[str] = None,
    ):
        self.errors: List[str] = list(errors)
        message = "; ".join(self.errors) if self.errors else "invalid configuration"
        super().__init__(message, module=module or "config", hint=hint)


class SolverError(PbgCavityError):
    exit_code = 3


class EigensolverError(SolverError):
    default_hint = "reduce n_g or check the dielectric contrast"


class MissingCoefficientError(SolverError):
    default_hint = "rebuild the Fourier data from the same basis and sampling"


class MeshError(SolverError):
    default_hint = "increase slab.mesh or lower the scanned frequencies"


class InstabilityError(SolverError):
    default_hint = "reduce slab.padding or slab.thickness per slice"


class NoResonanceError(SolverError):
    default_hint = "widen the scan range or strengthen the defect"


class AmbiguousResonanceError(SolverError):
    default_hint = "narrow the scan range around a single feature"

    def __init__(self, message: str, candidates=(), module=None, hint=None):
        super().__init__(message, module=module, hint=hint)
        self.candidates = list(candidates)


class RankError(SolverError):
    default_hint = "lower objective.svd_tolerance or use a cavity mode with more bulk content"


class GapError(SolverError):
    default_hint = "choose objective.omega_m inside the reported band gap"


class NoInGapModeError(PbgCavityError):
    exit_code = 4
    default_hint = "strengthen the defect or increase n_q"


class CheckpointError(PbgCavityError):
    exit_code = 5
    default_hint = "delete the checkpoint or rerun without resume"
