from __future__ import annotations


class WorkbenchError(Exception):
    """Base class for numerical and modelling errors raised by the workbench."""


class ChartError(WorkbenchError):
    """Point outside chart bounds, non-SPD metric or unknown chart family."""


class JetOrderError(WorkbenchError):
    pass


class SolitonGateError(WorkbenchError):
    """A soliton-only quantity was requested where |phi| exceeds the gate."""


class UnknownIdentityError(WorkbenchError, KeyError):
    pass


class RankMismatchError(WorkbenchError):
    pass


class RepresentationError(WorkbenchError):
    """Mixed representations, missing basis, or malformed field file."""


class QuadratureError(WorkbenchError):
    pass


class SolvabilityError(WorkbenchError):
    """Right-hand side pairs with the kernel above tolerance."""


class NotAnEigenfieldError(WorkbenchError):
    pass


class ModelError(WorkbenchError):
    pass


class FlowError(WorkbenchError):
    """Trajectory left the grid or the flow Jacobian degenerated."""


class SmallnessError(WorkbenchError):
    pass


class GaugeDivergenceError(WorkbenchError):
    pass


class CommutationError(WorkbenchError):
    """Assembled drift-Laplacian and P blocks fail to commute."""


class FitError(WorkbenchError):
    """Too few or non-positive samples for a power-law fit."""
