"""Exception types shared across the package."""


class SplatReconError(Exception):
    """Base class for all package-specific errors."""


class MissingAsset(SplatReconError):
    """A required on-disk asset (file or directory) is absent."""


class ParseError(SplatReconError):
    """A file exists but its contents cannot be parsed."""


class ValidationError(SplatReconError):
    """An input violates a documented invariant."""


class ShapeError(SplatReconError):
    """Array arguments have inconsistent shapes or lengths."""


class EmptyInput(SplatReconError):
    """An operation received an empty collection it cannot handle."""


class IoError(SplatReconError):
    """Writing an output artifact failed."""


class StaleCache(SplatReconError):
    """A backward pass was invoked with outputs from different inputs."""


class UsedTape(SplatReconError):
    """backward() was called twice on the same tape."""


class BudgetExceeded(SplatReconError):
    """A dense-grid allocation exceeds the configured cell budget."""


class MissingGroundTruth(SplatReconError):
    """Evaluation requested but the scene has no ground truth."""
