"""
Exception hierarchy shared by every relmon module.

Two families matter to callers: ConfigInvalid (the user asked for something
ill-formed, exit code 1) and NumericalFailure (a computation could not meet
its tolerances, exit code 2).
"""

from typing import Any, Dict, Optional


class RelmonError(Exception):
    """Base exception for relmon errors."""

    def __init__(self, message: str = "", context: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.context: Dict[str, Any] = dict(context or {})

    def with_context(self, **context: Any) -> "RelmonError":
        """Add context entries (module, operation, word, ...) and return self."""
        for key, value in context.items():
            self.context.setdefault(key, value)
        return self

    def __str__(self) -> str:
        base = super().__str__()
        if not self.context:
            return base
        details = ", ".join(f"{k}={v}" for k, v in self.context.items())
        return f"{base} [{details}]"


class ConfigInvalid(RelmonError):
    """Raised when an experiment or settings document is ill-formed."""
    exit_code = 1


class ToleranceError(ConfigInvalid):
    """Raised when a tolerance triple violates its ordering constraints."""
    pass


class CrowdedPunctures(ConfigInvalid):
    """Raised when two punctures are closer than twice the clearance."""
    pass


class DisconnectedCover(ConfigInvalid):
    """Raised when the sheet permutations do not act transitively."""
    pass


class RegionTouchesPuncture(ConfigInvalid):
    """Raised when a Betti grid region cannot be sampled at all."""
    pass


class NotKernelWord(ConfigInvalid):
    """Raised when a word offered as kernel word has nontrivial monodromy."""
    pass


class NumericalFailure(RelmonError):
    """Base class for numerical faults."""
    exit_code = 2


class StepUnderflow(NumericalFailure):
    """Raised when the ODE step size collapses near a singularity."""
    pass


class NonFinite(NumericalFailure):
    """Raised when NaN or Inf appears in a result."""
    pass


class NoConvergence(NumericalFailure):
    """Raised when quadrature or an iteration misses its tolerance."""
    pass


class BranchCut(NumericalFailure):
    """Raised when a function is evaluated on its branch cut."""
    pass


class DegenerateArguments(NumericalFailure):
    """Raised when Carlson integrals receive unsupported arguments."""
    pass


class OracleMismatch(NumericalFailure):
    """Raised when two independent numerical methods disagree."""
    pass


class BranchUndefined(NumericalFailure):
    """Raised when a section expression is singular at a point."""
    pass


class RamifiedFiber(NumericalFailure):
    """Raised when a trace is requested over a branch value."""
    pass


class SheetAmbiguity(NumericalFailure):
    """Raised when fibre points collide during path lifting."""
    pass


class BranchMatchAmbiguity(NumericalFailure):
    """Raised when logarithm matching hits the step refinement floor."""
    pass


class RoundingFailure(NumericalFailure):
    """Raised when a quantity expected to be integral is not."""
    pass


class DegenerateFrame(NumericalFailure):
    """Raised when period vectors are not linearly independent over R."""
    pass
