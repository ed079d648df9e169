"""Exception types shared across the harness."""


class HarnessError(Exception):
    """Base class for all harness-specific errors."""


class InvalidInputError(HarnessError):
    """Malformed or non-finite input to an operation."""


class InvalidGeometryError(HarnessError):
    """Degenerate geometric input (zero-length polylines etc.)."""


class InvalidSpecError(HarnessError):
    """A scenario spec that cannot be realized on its route."""


class InvalidConfigError(HarnessError):
    """Malformed configuration file, key, or value."""


class UnplannableError(HarnessError):
    """No collision-free detour exists around an obstacle."""


class PathDegenerateError(HarnessError):
    """A predicted path carries no usable geometry."""


class InvalidAugmentationError(HarnessError):
    """Augmentation perturbation outside the configured bounds."""


class ParseError(HarnessError):
    """Malformed episode file; carries the offending 1-based line number."""

    def __init__(self, message, line_number=None):
        super().__init__(message)
        self.line_number = line_number


class MissingCoefficientError(HarnessError):
    """Penalty table lacks a coefficient for an observed event kind."""


class EmptyDatasetError(HarnessError):
    """Sampling requested from an index with no usable buckets."""
