"""Exception hierarchy shared across the package."""


class LaneoccError(Exception):
    """Base class for all package errors."""


class ValidationError(LaneoccError, ValueError):
    """Input data violates a documented invariant (bad map file, bad grid, ...).

    The CLI maps these to exit code 2.
    """


class GeometryError(ValidationError):
    """Degenerate or malformed geometric input."""


class MapError(ValidationError):
    """Lane graph or map file violates its invariants."""


class TrainingDiverged(LaneoccError):
    """Training loss became non-finite; carries the step it happened at."""

    def __init__(self, step: int, loss: float):
        self.step = step
        self.loss = loss
        super().__init__(f"training loss became non-finite at step {step} (loss={loss!r})")
