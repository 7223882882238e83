"""Exception types shared across the simulation library.

Every raisable condition gets its own class so callers can catch precisely;
all of them derive from :class:`SimulationError`.
"""


class SimulationError(Exception):
    """Base class for all library errors."""


class InvalidInput(SimulationError, ValueError):
    """An input violates a declared precondition or invariant."""


class TrappedTrajectory(SimulationError):
    """A trajectory-based computation was asked to use a trapped event."""


class ZeroVelocity(SimulationError):
    """An operation that needs a direction received a zero velocity."""


class TrappedEvent(SimulationError):
    """A chain step ended in trapping; carries the step index."""

    def __init__(self, index: int, message: str = ""):
        self.index = index
        super().__init__(message or f"particle trapped at collision index {index}")


class NonPositive(SimulationError):
    """A strictly positive quantity (speed, scale factor) was not."""


class BelowDomain(SimulationError):
    """The scalar chain fell at or below its lower threshold under Forbid."""

    def __init__(self, index: int, value: float, message: str = ""):
        self.index = index
        self.value = value
        super().__init__(message or f"chain value {value!r} at or below threshold at step {index}")


class OutOfRange(SimulationError):
    """A query time lies outside the recorded horizon."""


class DegeneratePath(SimulationError):
    """Diffusion path hit the degeneracy guard despite step subdivision."""


class InvalidInterval(SimulationError):
    """Exit-probability barriers do not bracket the starting point."""


class SubcriticalGamma(SimulationError):
    """Drift coefficient is at or below the transience threshold 1/2."""


class MissingBound(SimulationError):
    """A perturbation callback did not declare the sup-bound we need."""


class InfeasibleL(SimulationError):
    """No admissible interval half-width exists for these parameters."""


class OffGridStart(SimulationError):
    """The path does not start inside any admissible dyadic interval."""


class EmptyPath(SimulationError):
    """A path with no values was supplied."""


class NoTransitions(SimulationError):
    """No level transitions matched the pooling filter."""


class TrappedSamples(SimulationError):
    """Too many trapped collisions for a meaningful moment estimate."""


class WindowTooNarrow(SimulationError):
    """The requested fit window contains too few grid points."""


class HypothesisRegionViolated(SimulationError):
    """Exit barriers would let the chain leave its hypothesis regime."""


class ParseError(SimulationError):
    """Config text is not well-formed; carries location detail when known."""


class ValidationError(SimulationError):
    """Config parsed but violates invariants; lists every violation."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
