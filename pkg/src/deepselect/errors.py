"""Exception types shared across the package."""


class DeepSelectError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(DeepSelectError):
    """Matrix or sequence dimensions do not match what the operation needs."""


class StochasticityError(DeepSelectError):
    """A probability row does not sum to 1 within tolerance."""


class ManifestError(DeepSelectError):
    """Run manifest is missing fields or contradicts the files it names."""


class BudgetError(DeepSelectError):
    """Requested subset size is impossible for the dataset."""


class EmptySubsetError(DeepSelectError):
    """An operation that needs at least one input id received none."""


class MembershipError(DeepSelectError):
    """An id was expected to belong to a subset but does not."""


class EmptyFrontError(DeepSelectError):
    """Knee-point extraction was called on an empty front."""


class CoverageError(DeepSelectError):
    """A mispredicted input in the selection has no fault-cluster label."""


class ConfigError(DeepSelectError):
    """Evaluation configuration is unusable (e.g. zero total faults)."""


class SampleSizeError(DeepSelectError):
    """Too few usable observations for the requested statistical test."""
