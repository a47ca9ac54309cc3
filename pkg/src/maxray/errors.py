"""Exception hierarchy.

Every error derives from the builtin a plain numerical routine would raise, so
callers that only know about ``ValueError`` or ``RuntimeError`` keep working.
"""

from __future__ import annotations


class MaxrayError(Exception):
    """Base class for all library errors."""


class DegenerateLatticeError(MaxrayError, ValueError):
    pass


class LatticeMismatchError(MaxrayError, ValueError):
    pass


class WeightError(MaxrayError, ValueError):
    """Material weights or modulation parameters out of their admissible range."""


class SolverError(MaxrayError, RuntimeError):
    def __init__(self, message: str, k=None):
        super().__init__(message)
        self.k = k


class GapError(MaxrayError, RuntimeError):
    def __init__(self, message: str, index=None):
        super().__init__(message)
        self.index = index


class DegeneracyError(GapError):
    pass


class SymmetryNotApplicable(MaxrayError, ValueError):
    pass


class IntegrationError(MaxrayError, RuntimeError):
    def __init__(self, message: str, state=None, index: int | None = None):
        super().__init__(message)
        self.state = state
        self.index = index


class PropagationError(MaxrayError, RuntimeError):
    pass


class BoundaryMassError(MaxrayError, ValueError):
    def __init__(self, message: str, mass: float):
        super().__init__(message)
        self.mass = mass


class PeriodizationError(MaxrayError, ValueError):
    def __init__(self, message: str, variation: dict[str, float]):
        super().__init__(message)
        self.variation = variation


class ScaleSeparationError(MaxrayError, ValueError):
    pass


class NoiseFloorError(MaxrayError, ValueError):
    pass


class GateFailure(MaxrayError, RuntimeError):
    def __init__(self, gate: str, report=None):
        super().__init__(f"gate '{gate}' failed")
        self.gate = gate
        self.report = report


class ConfigError(MaxrayError, ValueError):
    pass
