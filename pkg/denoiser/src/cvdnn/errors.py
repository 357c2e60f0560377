"""Exception types for the denoiser package."""


class ConfigError(ValueError):
    """Invalid model or training configuration."""


class ContainerFormatError(ValueError):
    """Malformed complex tensor container or dataset directory."""


class WeightsFormatError(ValueError):
    """Weight file missing, malformed, or incompatible with this package."""


class TrainingDivergedError(RuntimeError):
    """Training produced a non-finite loss."""
