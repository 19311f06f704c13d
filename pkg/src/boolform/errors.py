"""Exception types shared across the pipeline."""


class BoolformError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(BoolformError):
    """CSV header and declared schema disagree."""


class TargetError(BoolformError):
    """Target column is missing, non-boolean, or not binary."""


class EmptyDatasetError(BoolformError):
    """Cleaning removed every row."""


class ScalingError(BoolformError):
    """Integer scaling left the supported integer domain."""


class SplitError(BoolformError):
    """A train/validation part would be empty."""


class FoldError(BoolformError):
    """Fold count is incompatible with the number of points."""


class NoIncumbentError(BoolformError):
    """Search budget expired before a single candidate was evaluated."""


class FormulaFormatError(BoolformError):
    """A rendered or serialized formula could not be read back."""
