"""Exception types shared across the package.

Errors are split between hard construction errors (bad inputs, unusable
geometry) and verification-loop outcomes (a shrink loop that ran out of
room).  Report-style failures are not exceptions: verification routines
return reports with measured margins and let the caller decide.
"""


class NevlabError(Exception):
    """Base class for all package errors."""


class PoleProximity(NevlabError):
    """Evaluation point inside the guard radius of a pole."""


class InvalidPole(NevlabError):
    """A pole violates the placement contract of the operation."""


class ParseError(NevlabError):
    """Malformed serialized input; carries line/column when known."""

    def __init__(self, msg, line=None, column=None):
        super().__init__(msg)
        self.line = line
        self.column = column


class BranchCut(NevlabError):
    """Point on (or too close to) the logarithm branch segment."""


class GridTooCoarse(NevlabError):
    """Fewer grid points than the verification contract requires."""


class DepthTooLarge(NevlabError):
    """Tree depth beyond the configured memory budget."""


class MeasureExhausted(NevlabError):
    """Cantor arc widths would exceed the circle's measure."""


class PropertyFail(NevlabError):
    """A needle block property exceeded its budget."""

    def __init__(self, prop, measured, budget):
        super().__init__(f"property {prop!r}: measured {measured:.6g} exceeds budget {budget:.6g}")
        self.prop = prop
        self.measured = measured
        self.budget = budget


class WindingFailure(NevlabError):
    """Lifted boundary argument does not wind once around the target."""


class ShrinkExhausted(NevlabError):
    """Shrink loop ran out of halvings; carries the last failing check."""

    def __init__(self, label, failing, diagnosis=""):
        msg = f"{label}: shrink loop exhausted; last failing check: {failing}"
        if diagnosis:
            msg += f" ({diagnosis})"
        super().__init__(msg)
        self.label = label
        self.failing = failing
        self.diagnosis = diagnosis


class ProjectionNotBracketed(NevlabError):
    """Projection target never crossed on the searched boundary window."""


class ConditionViolated(NevlabError):
    """A waypoint condition (a)-(d) failed; names condition and index."""

    def __init__(self, condition, index, detail=""):
        super().__init__(f"waypoint condition ({condition}) failed at n={index} {detail}")
        self.condition = condition
        self.index = index


class CalibrationFailed(NevlabError):
    """No sign convention achieved the interpolation targets."""


class CancellationFailed(NevlabError):
    """1 - F0 does not vanish at a pole of f to the required accuracy."""


class BetaExhausted(NevlabError):
    """Spiral calibration failed after the allowed halvings."""


class PoleOnContour(NevlabError):
    """Quadrature contour passes through a pole guard disc."""


class ToleranceNotReached(NevlabError):
    """Adaptive quadrature hit max depth before the tolerance."""


class AmbiguousWinding(NevlabError):
    """Winding residual too large; sampling must be refined."""


class DegenerateRange(NevlabError):
    """Box-count scale range has fewer than three usable scales."""


class NotConvex(NevlabError):
    """Polygon vertices are not in convex position."""


class IoError(NevlabError):
    """Emitter refused to write (empty geometry, bad path)."""
