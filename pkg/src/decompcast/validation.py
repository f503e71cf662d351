"""Input validation helpers shared by the estimators and the functional API."""
import numpy as np

from .exceptions import ParameterError, ShapeError


def check_series(x, name="x", allow_2d=True):
    """Coerce ``x`` to a float64 ``(B, T, C)`` array.

    A 2-D ``(T, C)`` array is promoted to a batch of one when ``allow_2d``.
    Non-finite entries are rejected.
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 2 and allow_2d:
        arr = arr[None]
    if arr.ndim != 3:
        raise ShapeError(f"{name} must have shape (B, T, C); got {arr.shape}")
    if arr.size == 0:
        raise ShapeError(f"{name} is empty: shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return np.ascontiguousarray(arr)


def check_odd_kernel(kernel, length=None):
    if isinstance(kernel, bool) or int(kernel) != kernel:
        raise ParameterError(f"kernel must be an integer, got {kernel!r}")
    kernel = int(kernel)
    if kernel < 1 or kernel % 2 == 0:
        raise ParameterError(f"kernel must be an odd positive integer, got {kernel}")
    if length is not None and kernel > 2 * length - 1:
        raise ParameterError(
            f"kernel {kernel} too large for series length {length} (max {2 * length - 1})"
        )
    return kernel


def check_same_shape(a, b, what="arrays"):
    if np.shape(a) != np.shape(b):
        raise ShapeError(f"{what} differ in shape: {np.shape(a)} vs {np.shape(b)}")


def to_rows(x):
    """(B, T, C) -> (B*C, T); row ``b*C + c`` holds channel ``c`` of instance ``b``."""
    b, t, c = x.shape
    return np.ascontiguousarray(x.transpose(0, 2, 1).reshape(b * c, t))


def from_rows(rows, batch, channels):
    """Inverse of :func:`to_rows`."""
    t = rows.shape[1]
    return np.ascontiguousarray(rows.reshape(batch, channels, t).transpose(0, 2, 1))
