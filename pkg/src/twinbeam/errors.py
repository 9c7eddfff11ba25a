"""Exception hierarchy shared by all twinbeam modules."""


class TwinBeamError(Exception):
    """Base class for every error raised by this package."""


class DomainError(TwinBeamError, ValueError):
    """An input lies outside the domain where the operation is defined."""


class ResolutionError(DomainError):
    """A feature is too narrow to be represented on the frequency grid."""


class CoverageError(TwinBeamError, ValueError):
    """Tabulated or lattice data do not cover the required frequency range."""


class SingularityError(DomainError):
    """A closed-form expression is singular for the given parameters."""


class ConfigError(TwinBeamError, ValueError):
    """A run configuration failed validation."""


class NumericError(TwinBeamError, ArithmeticError):
    """A numerical kernel produced non-finite output.

    Args:
        message: human readable description
        section: index of the crystal section that failed, if known
    """

    def __init__(self, message, section=None):
        super().__init__(message)
        self.section = section


class IntegrityError(TwinBeamError):
    """Transfer matrices violate the Bogoliubov identities."""


class PostProcessingError(TwinBeamError):
    """Seed-line removal could not recover the broadband pedestal."""


class NoGainError(TwinBeamError, ZeroDivisionError):
    """A ratio of transfer-function maxima is undefined because there is no gain."""


class NormalizationError(TwinBeamError, ZeroDivisionError):
    """A map with zero norm cannot be normalized."""


class FitError(TwinBeamError):
    """Base class for parameter extraction failures."""


class InsufficientDataError(FitError):
    """The data do not constrain the requested parameter."""


class NoFringeError(FitError):
    """No significant spectral fringe was found."""


class BracketError(FitError):
    """The search interval does not bracket a solution."""


class SeparationError(FitError):
    """Interference side band overlaps the base band."""
