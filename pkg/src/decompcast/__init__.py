"""Decomposition-based multivariate forecasting with numpy.

A window is split into trend and seasonal parts; the trend goes through a
reversibly normalized MLP, the seasonal part through an unnormalized
backbone, and the two forecasts are added.
"""
__version__ = "0.1.0"

from .decomposition import (Decomposition, Frequency, MixtureOfExperts, MovingAverage,
                            frequency_decompose, moe_decompose, moving_average_decompose)
from .estimators import DecompositionForecaster, SeriesDecomposer
from .models import ForecastModel, ModelConfig, model_forward
from .revin import RevinAffine, RevinState, revin_denormalize, revin_normalize
from .training import TrainConfig, train

__all__ = [
    "Decomposition", "Frequency", "MixtureOfExperts", "MovingAverage", "frequency_decompose",
    "moe_decompose", "moving_average_decompose", "DecompositionForecaster", "SeriesDecomposer",
    "ForecastModel", "ModelConfig", "model_forward", "RevinAffine", "RevinState",
    "revin_denormalize", "revin_normalize", "TrainConfig", "train",
]
