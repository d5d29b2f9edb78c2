"""Typed error hierarchy for the engine.

Degenerate-hypothesis conditions (empty/full ROI and friends) share a base
class so drivers can distinguish statistical degeneracy (exit code 2 in the
CLI) from genuine failures (exit code 1).
"""


class SiglassError(Exception):
    """Base class for every error raised by this package."""


class MalformedDocument(SiglassError):
    """Model document violates the IR schema."""


class UnsupportedOperator(SiglassError):
    """Graph contains operators outside the supported registry."""

    def __init__(self, offenders):
        # offenders: list of (node_name, op_type)
        self.offenders = list(offenders)
        names = ", ".join(f"{n} ({t})" for n, t in self.offenders)
        super().__init__(f"unsupported operator(s): {names}")


class CyclicGraph(SiglassError):
    """Node dependencies contain a cycle."""


class ShapeMismatch(SiglassError):
    """Tensor shapes are inconsistent along a graph edge."""

    def __init__(self, edge, message):
        self.edge = edge
        super().__init__(f"shape mismatch at '{edge}': {message}")


class NonFiniteActivation(SiglassError):
    """An activation overflowed to inf or NaN during propagation."""


class InternalInconsistency(SiglassError):
    """Numerical state violates an internal invariant; indicates a bug
    or pathological floating-point behaviour, never a user error."""


class DegenerateHypothesis(SiglassError):
    """The selection produced a hypothesis with no defined test direction."""


class EmptyRoi(DegenerateHypothesis):
    """No pixel exceeded the threshold."""


class FullRoi(DegenerateHypothesis):
    """Every unmasked pixel exceeded the threshold; complement is empty."""


class EmptyNeighborhood(DegenerateHypothesis):
    """The ROI neighborhood contains no unmasked pixels."""


class DegenerateNormalization(DegenerateHypothesis):
    """Score map is constant; min-max normalization undefined."""


class ObservationOutsideRegion(SiglassError):
    """Observed statistic does not lie in the truncation region."""


class ZeroDenominator(SiglassError):
    """Truncation region carries no probability mass."""


class SingularCovariance(SiglassError):
    """Covariance is not positive definite."""


class StalledSearch(SiglassError):
    """Line search kept producing degenerate slivers; numerics are suspect."""


class InvalidSpec(SiglassError):
    """Synthetic-data specification out of range."""
