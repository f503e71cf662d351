"""Trend/seasonal decomposition of ``(B, L, C)`` windows.

Three interchangeable methods are provided: a centred moving average with
replicated endpoints, a softmax-gated mixture of moving averages at several
scales, and a frequency split that keeps the strongest Fourier bins as the
seasonal part.
"""
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import ParameterError, ShapeError
from .numerics import ComplexSpectrum, irfft, rfft
from .validation import check_odd_kernel, check_series

DEFAULT_KERNEL = 25
DEFAULT_MOE_KERNELS = (5, 9, 13, 25, 49)
DEFAULT_TOP_K = 5


class Decomposition(NamedTuple):
    trend: np.ndarray
    seasonal: np.ndarray


def moving_average_trend(x, kernel):
    """Centred moving average along axis 1 of a ``(B, T, C)`` array."""
    kernel = check_odd_kernel(kernel, x.shape[1])
    if kernel == 1:
        return x.copy()
    pad = (kernel - 1) // 2
    padded = np.pad(x, ((0, 0), (pad, pad), (0, 0)), mode="edge")
    return sliding_window_view(padded, kernel, axis=1).mean(axis=-1)


def moving_average_decompose(x, kernel=DEFAULT_KERNEL):
    x = check_series(x)
    trend = moving_average_trend(x, kernel)
    return Decomposition(trend, x - trend)


def softmax(logits, axis=-1):
    shifted = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def _check_kernels(kernels, length):
    kernels = tuple(kernels)
    if not kernels:
        raise ParameterError("mixture of experts needs at least one kernel")
    return tuple(check_odd_kernel(k, length) for k in kernels)


def moe_gate_weights(x, gate_w, gate_b):
    """Per-(instance, channel) mixing weights, shape ``(B, C, n_experts)``.

    The gate sees each channel's raw length-L series.
    """
    _, length, _ = x.shape
    gate_w = np.asarray(gate_w, dtype=np.float64)
    gate_b = np.asarray(gate_b, dtype=np.float64)
    if gate_w.ndim != 2 or gate_w.shape[0] != length or gate_b.shape != (gate_w.shape[1],):
        raise ShapeError(
            f"gate weights {gate_w.shape} / bias {gate_b.shape} do not fit series length {length}"
        )
    logits = np.einsum("btc,te->bce", x, gate_w) + gate_b
    return softmax(logits, axis=-1)


def moe_components(x, kernels, gate_w, gate_b):
    """Expert trends ``(n_experts, B, L, C)`` and gate weights ``(B, C, n_experts)``."""
    kernels = _check_kernels(kernels, x.shape[1])
    if np.shape(gate_w)[1:] != (len(kernels),):
        raise ShapeError(
            f"gate has {np.shape(gate_w)[1:]} outputs for {len(kernels)} kernels"
        )
    experts = np.stack([moving_average_trend(x, k) for k in kernels])
    weights = moe_gate_weights(x, gate_w, gate_b)
    return experts, weights


def mix_experts(experts, weights):
    # trend[b, t, c] = sum_e weights[b, c, e] * experts[e, b, t, c]
    trend = weights[..., 0][:, None, :] * experts[0]
    for e in range(1, experts.shape[0]):
        trend = trend + weights[..., e][:, None, :] * experts[e]
    return trend


def moe_decompose(x, kernels=DEFAULT_MOE_KERNELS, gate_w=None, gate_b=None):
    """Mixture-of-experts decomposition; a missing gate means uniform mixing."""
    x = check_series(x)
    kernels = _check_kernels(kernels, x.shape[1])
    if gate_w is None:
        gate_w = np.zeros((x.shape[1], len(kernels)))
    if gate_b is None:
        gate_b = np.zeros(np.shape(gate_w)[1])
    experts, weights = moe_components(x, kernels, gate_w, gate_b)
    trend = mix_experts(experts, weights)
    return Decomposition(trend, x - trend)


def top_k_mask(spectrum: ComplexSpectrum, k):
    """Boolean mask over bins keeping the ``k`` largest non-DC amplitudes.

    Ties go to the lower frequency index.
    """
    amp = spectrum.amplitude[..., 1:]
    order = np.argsort(-amp, axis=-1, kind="stable")[..., :k]
    mask = np.zeros(spectrum.bins.shape, dtype=bool)
    np.put_along_axis(mask, order + 1, True, axis=-1)
    return mask


def frequency_decompose(x, k=DEFAULT_TOP_K):
    x = check_series(x)
    length = x.shape[1]
    if isinstance(k, bool) or int(k) != k or not 1 <= k <= length // 2:
        raise ParameterError(f"top-k must be an integer in [1, {length // 2}], got {k!r}")
    series = x.transpose(0, 2, 1)
    z = rfft(series)
    kept = ComplexSpectrum(np.where(top_k_mask(z, int(k)), z.bins, 0.0), length)
    seasonal = np.ascontiguousarray(irfft(kept, length).transpose(0, 2, 1))
    return Decomposition(x - seasonal, seasonal)


@dataclass(frozen=True)
class MovingAverage:
    kernel: int = DEFAULT_KERNEL

    def __post_init__(self):
        check_odd_kernel(self.kernel)

    name = "ma"

    def decompose(self, x, gate=None):
        return moving_average_decompose(x, self.kernel)


@dataclass(frozen=True)
class MixtureOfExperts:
    kernels: tuple = DEFAULT_MOE_KERNELS
    trainable_gate: bool = True

    def __post_init__(self):
        object.__setattr__(self, "kernels", _check_kernels(self.kernels, None))

    name = "moe"

    def decompose(self, x, gate=None):
        gate_w, gate_b = gate if gate is not None else (None, None)
        return moe_decompose(x, self.kernels, gate_w, gate_b)


@dataclass(frozen=True)
class Frequency:
    k: int = DEFAULT_TOP_K

    def __post_init__(self):
        if isinstance(self.k, bool) or int(self.k) != self.k or self.k < 1:
            raise ParameterError(f"top-k must be a positive integer, got {self.k!r}")

    name = "fd"

    def decompose(self, x, gate=None):
        return frequency_decompose(x, self.k)


def make_method(name, kernel=DEFAULT_KERNEL, kernels=DEFAULT_MOE_KERNELS, top_k=DEFAULT_TOP_K,
                trainable_gate=True):
    if name == "ma":
        return MovingAverage(kernel)
    if name == "moe":
        return MixtureOfExperts(tuple(kernels), trainable_gate)
    if name == "fd":
        return Frequency(top_k)
    raise ParameterError(f"unknown decomposition method {name!r} (expected ma, moe or fd)")


def method_to_dict(method):
    if isinstance(method, MovingAverage):
        return {"name": "ma", "kernel": method.kernel}
    if isinstance(method, MixtureOfExperts):
        return {"name": "moe", "kernels": list(method.kernels),
                "trainable_gate": method.trainable_gate}
    return {"name": "fd", "k": method.k}


def method_from_dict(d):
    d = dict(d)
    name = d.pop("name")
    if name == "ma":
        return MovingAverage(**d)
    if name == "moe":
        return MixtureOfExperts(tuple(d["kernels"]), d.get("trainable_gate", True))
    if name == "fd":
        return Frequency(**d)
    raise ParameterError(f"unknown decomposition method {name!r}")
