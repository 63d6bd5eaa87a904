"""Exception types shared across the package."""


class TgflowError(Exception):
    """Base class for all package errors."""


class NegativeModulus(TgflowError):
    """A material modulus that must be nonnegative is negative."""


class NonAdmissible(TgflowError):
    """Material moduli violate the thermodynamic admissibility inequality."""


class ShapeMismatch(TgflowError):
    """Grid array shape does not match the basis collocation resolution."""


class UnknownKind(TgflowError):
    """Unrecognized norm or trajectory kind tag."""


class GridMismatch(TgflowError):
    """Two objects live on incompatible bases or time grids."""


class FixedPointDiverged(TgflowError):
    """Midpoint fixed-point iteration failed to converge; dt is too large."""

    def __init__(self, message, step=None, residuals=None):
        super().__init__(message)
        self.step = step
        self.residuals = residuals


class LineSearchFailed(TgflowError):
    """Armijo backtracking found no acceptable step above the minimum."""


class ConfigInvalid(TgflowError):
    """Run configuration is missing keys or contains contradictory values."""


class MagicMismatch(TgflowError):
    """Trajectory file does not start with the expected magic bytes."""


class VersionUnsupported(TgflowError):
    """Trajectory file version is not supported by this code."""


class ChecksumFailed(TgflowError):
    """Trajectory file payload fails its CRC32 check."""
