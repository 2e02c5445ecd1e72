"""Exception hierarchy shared by every stage of the pipeline."""


class BubblecastError(Exception):
    """Base class for all errors raised by this package."""


class ArgumentError(BubblecastError, ValueError):
    """An argument is outside its admissible range."""


class ValidationError(BubblecastError, ValueError):
    """A domain object violates one of its invariants."""


class IngestError(BubblecastError, ValueError):
    """An input file could not be parsed."""

    def __init__(self, message, row=None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


class ExtrapolationError(ArgumentError):
    """An evaluation point lies outside the span of the source knots."""


class DegenerateInputError(ArgumentError):
    """Too few points (or otherwise degenerate data) for the requested fit."""


class SingularDesignError(BubblecastError, ArithmeticError):
    """The regression design matrix is rank deficient or fits exactly."""


class LabelingError(BubblecastError, ValueError):
    """Labels cannot be derived from the given flags."""


class StratificationError(BubblecastError, RuntimeError):
    """No admissible stratified fold assignment was found."""


class UnsupportedOperationError(BubblecastError, TypeError):
    """The operation is not defined for this model kind."""


class PipelineError(BubblecastError, RuntimeError):
    """A pipeline stage failed on validated inputs."""
