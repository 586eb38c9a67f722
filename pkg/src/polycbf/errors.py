"""Exception types shared across the package."""


class DomainError(ValueError):
    """An input lies outside the mathematical domain (non-finite, etc.)."""


class ConfigurationError(ValueError):
    """A parameter violates its declared invariant (q < 1, negative radius, ...)."""


class DegenerateConstraintError(ValueError):
    """A pairwise constraint cannot be formed (coincident positions)."""


class InsufficientDataError(ValueError):
    """An estimator was asked to fit with no samples."""


class RankDeficiencyError(ValueError):
    """The unregularized normal equations are singular; a positive ridge is needed."""
