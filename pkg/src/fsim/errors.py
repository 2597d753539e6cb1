"""Exception types shared across the package."""


class FsimError(Exception):
    """Base class for all package errors."""


class GridMismatchError(FsimError, ValueError):
    """Curves or directions defined on incompatible grids."""


class DomainError(FsimError, ValueError):
    """Evaluation point outside the basis domain."""


class BasisFitError(FsimError, RuntimeError):
    """Least-squares spline fit failed (rank-deficient design)."""


class DegenerateDirectionError(FsimError, ValueError):
    """All projected distances vanish for a direction."""


class EmptyDirectionSetError(FsimError, ValueError):
    """Every candidate direction was filtered out."""


class DegenerateModelError(FsimError, RuntimeError):
    """Cross-validation produced no usable (tuning, direction) pair."""


class IngestionError(FsimError, ValueError):
    """Input files missing, malformed, or misaligned."""
