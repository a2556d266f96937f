"""Exception types shared across the package."""


class NswError(Exception):
    """Base class for package errors."""


class InfeasibleInstance(NswError):
    """No allocation with positive Nash welfare exists (some agent cannot
    receive any positively valued item)."""


class NotConverged(NswError):
    """Iterative solver hit its oracle-call budget before reaching the
    requested duality gap.  Carries the best iterate found."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class TooLarge(NswError):
    """Brute-force enumeration would exceed the configured cap."""


class GroundSetTooLarge(NswError):
    """Matroid operation requires exhaustive enumeration over a ground set
    beyond the supported size."""


class OutOfRangeElement(NswError):
    """Matroid queried with an element outside its ground set."""


class TooManyItems(NswError):
    """Explicit tabulation requested for a valuation over too many items."""


class LPInfeasible(NswError):
    """A linear program that is feasible by construction reported
    infeasibility -- an internal bug, never expected on valid inputs."""


class SeparatorInconsistent(NswError):
    """Row-generation separator returned a cut that the current point does
    not violate, or re-issued an existing row."""


class NotMBBCycle(NswError):
    """Spending-graph cycle admits no utility-preserving cancel direction;
    the allocation was not an exact market equilibrium."""


class NonPartition(NswError):
    """Finalization produced an item assigned twice -- an internal bug."""


class DomainError(NswError, ValueError):
    """Argument outside the mathematical domain of the function."""


class NumericalInconsistency(NswError):
    """Debug cross-check between two exact computations disagreed."""


class SchemaError(NswError):
    """Instance or report file does not match the documented JSON layout."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")
