"""
Exception hierarchy shared by the simulation and oracle apps.

Management commands translate these into ``CommandError`` exit codes:
configuration problems exit with 2, runtime failures with 3 and failed
acceptance gates with 4.
"""


class PhaseSpaceError(Exception):
    """Base class for every error raised by this project."""


class ConfigurationError(PhaseSpaceError, ValueError):
    """A configuration value is missing, malformed or out of range."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class StateValidationError(ConfigurationError):
    """A state preparation violates one of its physical invariants."""


class TruncationError(PhaseSpaceError):
    """A Fock cutoff or series truncation leaves too much probability behind."""


class GridCoverageError(PhaseSpaceError):
    """A quadrature grid does not capture enough of the probability mass."""


class RejectionSamplingError(PhaseSpaceError):
    """A rejection loop exceeded its try budget (the envelope is wrong)."""


class InsufficientSamplesError(PhaseSpaceError, ValueError):
    """An estimator received fewer samples than it needs."""


class DegenerateBinningError(PhaseSpaceError, ValueError):
    """A binned goodness-of-fit test has no degrees of freedom left."""


class FringeFitError(PhaseSpaceError):
    """The fringe least-squares fit did not converge."""


class ReferenceTableError(PhaseSpaceError):
    """The oracle reference table is missing or from another table version."""


class AcceptanceGateError(PhaseSpaceError):
    """One or more acceptance gates failed."""

    def __init__(self, failed: list[str]):
        self.failed = failed
        super().__init__("failed gates: " + ", ".join(failed))
