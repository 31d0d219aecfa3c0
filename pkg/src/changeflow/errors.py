"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Inputs have incompatible or invalid shapes."""


class InvalidArgumentError(ValueError):
    """A scalar argument or configuration value is out of range."""


class GenerationError(RuntimeError):
    """Synthetic data generation could not satisfy the configured constraints."""


class LoadError(ValueError):
    """A file on disk is missing or violates its documented format."""


class NumericsError(RuntimeError):
    """A numeric invariant broke (NaN/Inf) mid-computation.

    ``step`` carries the integration/optimizer step index when known;
    ``details`` holds extra diagnostics (sampled t values, batch ids, ...).
    """

    def __init__(self, message: str, *, step: int | None = None, details: dict | None = None):
        super().__init__(message)
        self.step = step
        self.details = details or {}
