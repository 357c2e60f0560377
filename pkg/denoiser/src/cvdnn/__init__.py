"""cvdnn: complex-valued residual denoiser for angular-delay channel
estimates produced by the estimation workbench."""

__version__ = "0.1.0"

from .errors import (ConfigError, ContainerFormatError, TrainingDivergedError,
                     WeightsFormatError)
from .layers import ComplexBatchNorm2d, ComplexConv2d, complex_conv, crelu
from .model import (CVDnCNN, ModelSpec, denoise, denoise_array, load_weights,
                    residual, save_weights)
from .training import TrainConfig, TrainResult, lr_at_epoch, residual_loss, train

__all__ = [
    "ComplexBatchNorm2d", "ComplexConv2d", "CVDnCNN", "ConfigError",
    "ContainerFormatError", "ModelSpec", "TrainConfig", "TrainResult",
    "TrainingDivergedError", "WeightsFormatError", "complex_conv", "crelu",
    "denoise", "denoise_array", "load_weights", "lr_at_epoch", "residual",
    "residual_loss", "save_weights", "train",
]
