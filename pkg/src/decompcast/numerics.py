"""Dense numeric kernel: affine maps, activations and the real FFT.

Series tensors are plain float64 ``numpy`` arrays of shape ``(B, T, C)``
stored C-contiguous, so element ``(b, t, c)`` sits at ``(b*T + t)*C + c``.
"""
from dataclasses import dataclass

import numpy as np

from .exceptions import InputTooShortError, ShapeError


@dataclass(frozen=True)
class ComplexSpectrum:
    """One-sided spectrum of a real signal along its last axis."""

    bins: np.ndarray
    original_length: int

    def __post_init__(self):
        expected = self.original_length // 2 + 1
        if self.bins.shape[-1] != expected:
            raise ShapeError(
                f"spectrum has {self.bins.shape[-1]} bins, length {self.original_length} "
                f"requires {expected}"
            )

    @property
    def amplitude(self):
        return np.abs(self.bins)


def matmul_bias(x, w, b=None):
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"cannot multiply {x.shape} by {w.shape}")
    out = x @ w
    if b is not None:
        b = np.asarray(b, dtype=np.float64)
        if b.shape != (w.shape[1],):
            raise ShapeError(f"bias shape {b.shape} does not match output width {w.shape[1]}")
        out += b
    return out


def relu(x):
    return np.maximum(x, 0.0)


def relu_grad(pre, upstream):
    # derivative at exactly 0 is taken as 0
    return upstream * (pre > 0)


def rfft(x):
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    if n < 2:
        raise InputTooShortError(f"rfft needs at least 2 samples, got {n}")
    return ComplexSpectrum(np.fft.rfft(x, axis=-1), n)


def irfft(z, n=None):
    if n is None:
        n = z.original_length
    if z.bins.shape[-1] != n // 2 + 1:
        raise ShapeError(f"{z.bins.shape[-1]} bins are inconsistent with length {n}")
    return np.fft.irfft(z.bins, n=n, axis=-1)
