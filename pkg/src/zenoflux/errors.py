"""Exception types raised across the package."""


class ZenofluxError(Exception):
    """Base class for every package-specific error."""


class InvalidGrid(ZenofluxError):
    """Grid construction parameters are unusable."""


class PacketTruncated(ZenofluxError):
    """A wave packet has non-negligible amplitude at the grid edges."""


class EmptyOverlap(ZenofluxError):
    """A state restricted to a region has (numerically) zero norm."""


class GridMismatch(ZenofluxError):
    """Two objects defined on different grids were combined."""


class NonFinitePotential(ZenofluxError):
    """Sampled potential contains NaN or infinity."""


class BoundaryLeak(ZenofluxError):
    """Too much probability reached a guarded edge band of the grid."""


class ExtrapolationDiverged(ZenofluxError):
    """Successive boundary-limit extrapolants failed to settle."""


class SurvivalUnderflow(ZenofluxError):
    """Survival probability fell below the representable floor."""


class StateNotStored(ZenofluxError):
    """Conditional states were requested from a run that did not keep them."""


class NoPlateau(ZenofluxError):
    """A measurement-interval scan found no agreeing window."""


class NotHermitian(ZenofluxError):
    """A matrix expected to be hermitian is not."""


class NonMonotoneWindow(ZenofluxError):
    """Arrival probabilities were integrated across a negative-flux window."""


class ParseError(ZenofluxError):
    """Malformed experiment-config text."""

    def __init__(self, line: int, message: str):
        self.line = line
        self.message = message
        super().__init__(f"line {line}: {message}")


class ValidationError(ZenofluxError):
    """A parsed config value violates a constraint."""

    def __init__(self, field: str, constraint: str):
        self.field = field
        self.constraint = constraint
        super().__init__(f"{field}: {constraint}")
