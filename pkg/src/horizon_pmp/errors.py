"""Exception and warning types raised by the verifier."""


class HorizonPMPError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(HorizonPMPError, ValueError):
    pass


class UnsupportedInputError(HorizonPMPError, ValueError):
    pass


class NonSummableSystemError(HorizonPMPError):
    """A coefficient that must be integrable on [0, inf) failed the tail test."""


class NoConvergenceError(HorizonPMPError):
    pass


class StiffnessError(HorizonPMPError):
    """Step size underflow in the adaptive integrator."""


class GridMismatchError(HorizonPMPError):
    pass


class RadiusExceededError(HorizonPMPError):
    """A comparison trajectory left the tube of radius gamma around x*."""


class IncompleteVerificationError(HorizonPMPError):
    pass


class ResourceTooLargeError(HorizonPMPError):
    pass


class HorizonTooShortError(HorizonPMPError, ValueError):
    pass


class ScenarioNotFoundError(HorizonPMPError, KeyError):
    pass


class SchemaError(HorizonPMPError, ValueError):
    """CSV input does not match the expected column layout."""

    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class UnboundedHamiltonianWarning(UserWarning):
    """The sup over the control set kept growing when the box was enlarged."""
