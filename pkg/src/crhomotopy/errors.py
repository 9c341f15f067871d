"""Exception types shared across the package."""


class CRHomotopyError(Exception):
    """Base class for all package errors."""


class ModelValidationError(CRHomotopyError):
    """Model data violates a structural requirement (dimensions, Hermitian-ness)."""


class ModelParseError(CRHomotopyError):
    """Model file could not be parsed; message names the offending line."""


class InvalidDirectionError(CRHomotopyError):
    """Normal direction vector is not unit length."""


class ThetaUndefinedError(CRHomotopyError):
    """Normal direction field requested at a point on the manifold itself."""


class DegeneratePointError(CRHomotopyError):
    """Tangential frame is rank deficient at the requested point."""


class SingularityError(CRHomotopyError):
    """Section evaluated at its singular point (coincident arguments)."""


class NearSingularPhaseError(CRHomotopyError):
    """Barrier phase too close to zero for a stable kernel evaluation."""


class StencilError(CRHomotopyError):
    """Finite-difference stencil leaves the admissible domain."""


class OutsideTubeError(CRHomotopyError):
    """Requested level-set radius exceeds the chart tube."""


class GridTooCoarseError(CRHomotopyError):
    """Too many quadrature nodes rejected near the phase singularity."""


class CoverError(CRHomotopyError):
    """Cutoff family fails to form a partition of unity on the support."""


class ChartExitError(CRHomotopyError):
    """Flow path left the coordinate chart."""


class FlowInversionError(CRHomotopyError):
    """Newton inversion of the frame flow did not converge."""


class DerivativeOrderError(CRHomotopyError):
    """Field derivatives of the requested order are not available."""


class TableGapError(CRHomotopyError):
    """Integral classification parameters fall outside every table row."""


class RealizationInfeasibleError(CRHomotopyError):
    """Kernel term cannot be realized on the given model's dimensions."""
