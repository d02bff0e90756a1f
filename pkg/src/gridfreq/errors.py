"""Exception types shared across the package."""


class GridFreqError(Exception):
    """Base class for all package errors."""


class ModelFormatError(GridFreqError):
    """Model/scenario/distribution file is malformed or inconsistent."""


class NonConvergence(GridFreqError):
    """Iterative network solution failed to converge."""

    def __init__(self, message, time=None, mismatch=None):
        super().__init__(message)
        self.time = time
        self.mismatch = mismatch


class SingularJacobian(GridFreqError):
    """Network Jacobian became singular during a Newton solve."""


class InfeasibleOperatingPoint(GridFreqError):
    """LCC converter cannot realize the requested power at this voltage."""


class UnstableClosedLoop(GridFreqError):
    """Assembled linear closed loop has a right-half-plane pole."""


class UnstableSimulation(GridFreqError):
    """Simulated frequency left the plausible band (diverging run)."""


class GridMismatch(GridFreqError):
    """Two traces do not share the same time grid."""


class EmptyWindow(GridFreqError):
    """No samples with active supplementary control before the nadir."""


class TargetUnreachable(GridFreqError):
    """Gain budget search exhausted available headroom."""


class DomainError(GridFreqError):
    """Arguments outside the mathematical domain of an operation."""
