"""Exception types shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 2,
DataError -> 3, NumericError -> 4.
"""


class ReplyRankError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(ReplyRankError, ValueError):
    """Tensor shapes are incompatible for the requested operation."""


class MaskError(ReplyRankError, ValueError):
    """A validity mask has no valid entries where at least one is required."""


class ConfigError(ReplyRankError, ValueError):
    """Run configuration is missing, malformed, or internally inconsistent."""


class DataError(ReplyRankError, ValueError):
    """A dataset file is missing or malformed."""


class NumericError(ReplyRankError, ArithmeticError):
    """A numeric invariant was violated (NaN/Inf gradient, failed check)."""
