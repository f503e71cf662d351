"""Reversible instance normalization for the trend path."""
from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateAffineError, ShapeError

DEFAULT_EPS = 1e-5


@dataclass(frozen=True)
class RevinState:
    """Statistics captured at normalization time, each of shape ``(B, C)``."""

    mean: np.ndarray
    std: np.ndarray
    epsilon: float = DEFAULT_EPS


@dataclass
class RevinAffine:
    gamma: np.ndarray
    beta: np.ndarray

    @classmethod
    def identity(cls, channels):
        return cls(np.ones(channels), np.zeros(channels))


def revin_normalize(x, affine, epsilon=DEFAULT_EPS):
    """Standardize each (instance, channel) series over time, then apply the affine.

    Returns the normalized tensor and the :class:`RevinState` needed to undo it.
    Variance is the population variance; ``epsilon`` is added under the root.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    gamma, beta = _check_affine(affine, x.shape[2])
    mean = x.mean(axis=1)
    var = ((x - mean[:, None, :]) ** 2).mean(axis=1)
    std = np.sqrt(var + epsilon)
    out = (x - mean[:, None, :]) / std[:, None, :] * gamma + beta
    return out, RevinState(mean, std, epsilon)


def revin_denormalize(y, state, affine):
    """Map a normalized-space tensor back with the stored statistics.

    ``y`` may be longer or shorter along time than the tensor that produced
    ``state``; the statistics apply unchanged.
    """
    gamma, beta = _check_affine(affine, y.shape[2])
    if state.mean.shape != (y.shape[0], y.shape[2]):
        raise ShapeError(
            f"state statistics {state.mean.shape} do not match (B, C) of {y.shape}"
        )
    if np.any(gamma == 0):
        raise DegenerateAffineError(
            f"gamma is zero for channel(s) {np.flatnonzero(gamma == 0).tolist()}"
        )
    return (y - beta) / gamma * state.std[:, None, :] + state.mean[:, None, :]


def _check_affine(affine, channels):
    gamma = np.asarray(affine.gamma, dtype=np.float64)
    beta = np.asarray(affine.beta, dtype=np.float64)
    if gamma.shape != (channels,) or beta.shape != (channels,):
        raise ShapeError(
            f"affine shapes {gamma.shape}/{beta.shape} do not match {channels} channels"
        )
    return gamma, beta
