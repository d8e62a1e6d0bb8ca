"""Exception types shared across the package."""


class SpikeOverlapError(Exception):
    """Base class for all package-specific failures."""


class ConfigurationError(SpikeOverlapError):
    """Invalid or inconsistent user-supplied parameters."""


class ResolventSingularError(SpikeOverlapError):
    """The shifted matrix could not be factorized, or is singular to tolerance."""


class ReconstructionError(SpikeOverlapError):
    """Eigenvector reconstruction collapsed to a numerically zero vector."""


class ConvergenceError(SpikeOverlapError):
    """An iterative search failed to reach its target tolerance."""


class OracleError(SpikeOverlapError):
    """The dense reference eigensolver failed."""
