"""Exception hierarchy.

Every error raised on purpose by the package derives from
:class:`CavcoolError`; the CLI maps the families onto exit codes.
"""


class CavcoolError(Exception):
    """Base class."""


class ConfigError(CavcoolError, ValueError):
    """Invalid physical or numerical configuration."""


class GeometryError(ConfigError):
    """Requested waist cannot be produced by the resonator geometry."""


class InstabilityError(ConfigError):
    """Resonator outside the stability range (L >= R2)."""


class ResourceError(CavcoolError):
    """A series truncation or work limit exceeds its configured cap."""


class NumericError(CavcoolError):
    """Base for failures of a numerical procedure."""


class IntegrationError(NumericError):
    """Adaptive step size underflow."""


class DivergenceError(NumericError):
    """Non-finite state encountered during integration."""


class DetectionError(NumericError):
    """No particle transit found in a trace."""


class FitError(NumericError):
    """Least-squares fit did not converge."""


class AmbiguityError(NumericError):
    """Extrema cannot be classified reliably at the given noise level."""

    def __init__(self, message, ambiguous=()):
        super().__init__(message)
        self.ambiguous = list(ambiguous)


class ReconstructionError(NumericError):
    """Inconsistent branch sequence while inverting the scattering signal."""


class InsufficientDataError(NumericError):
    """Not enough fringes to measure a velocity."""


class WindowingError(NumericError):
    """Integration window for the area ratio is not well defined."""


class UnboundError(NumericError):
    """Energy at or above the barrier; no closed orbit."""


class InconsistencyError(NumericError):
    """Measured quantities admit no physical solution."""
