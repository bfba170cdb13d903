"""Exception hierarchy shared by all modules."""


class SpectralPerturbError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(SpectralPerturbError):
    """Invalid user-supplied configuration (CLI exit code 1)."""


# geometry
class GridMisaligned(ConfigError):
    pass


class TubeTooWide(ConfigError):
    pass


class NoBoundaryBallFound(SpectralPerturbError):
    pass


class MeshMismatch(SpectralPerturbError):
    pass


# coefficients
class NonPositiveMu(ConfigError):
    pass


class ComponentMismatch(SpectralPerturbError):
    pass


class UnknownPreset(ConfigError):
    pass


# fem
class EmptyInterior(ConfigError):
    pass


class ZeroVector(SpectralPerturbError):
    pass


# eigensolve
class SolverError(SpectralPerturbError):
    """Solver failure (CLI exit code 2)."""


class FactorizationFailed(SolverError):
    pass


class NoConvergence(SolverError):
    pass


class TooLarge(SpectralPerturbError):
    pass


# inequalities
class NotNested(SpectralPerturbError):
    pass


class EmptyBall(SpectralPerturbError):
    pass


class BadSubset(SpectralPerturbError):
    pass


class DegenerateBasis(SpectralPerturbError):
    pass


# study
class InsufficientPoints(SpectralPerturbError):
    pass
