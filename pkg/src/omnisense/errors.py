"""Exception hierarchy shared by all omnisense modules."""


class OmnisenseError(Exception):
    """Base class for every error raised by this package."""


class InputError(OmnisenseError, ValueError):
    """Bad user input (CLI exit code 2)."""


class NumericalError(OmnisenseError, ArithmeticError):
    """A numerical procedure failed (CLI exit code 3)."""


class DomainError(InputError):
    pass


class DegenerateInput(InputError):
    pass


class InvalidParams(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class EmptyGrid(InputError):
    pass


class MissingTruth(InputError):
    pass


class GridMismatch(InputError):
    pass


class InsufficientHits(NumericalError):
    pass


class SingularJacobian(NumericalError):
    pass


class FitFailed(NumericalError):
    """A fit diverged or could not start.

    ``stage`` names the pipeline step (or fitted curve) that failed, when known.
    """

    def __init__(self, message: str, stage: str | None = None):
        self.stage = stage
        if stage:
            message = f"[{stage}] {message}"
        super().__init__(message)


class ExtrapolationWarning(UserWarning):
    """A model was evaluated outside the distance domain it was fitted on."""
