"""CSV ingestion, chronological splitting, windowing and synthetic signals."""
import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import ConfigurationError, DataFormatError

DEFAULT_RATIOS = (0.7, 0.2, 0.1)


@dataclass
class RawDataset:
    values: np.ndarray
    channel_names: list
    timestamps: Optional[list] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DataFormatError(f"values must be (N, C), got shape {self.values.shape}")
        if len(self.channel_names) != self.values.shape[1]:
            raise DataFormatError(
                f"{len(self.channel_names)} channel names for {self.values.shape[1]} columns"
            )
        if self.timestamps is not None and len(self.timestamps) != len(self.values):
            raise DataFormatError("timestamps and values differ in length")

    @property
    def n_rows(self):
        return self.values.shape[0]

    @property
    def n_channels(self):
        return self.values.shape[1]


@dataclass
class DatasetSplit:
    role: str
    inputs: np.ndarray
    targets: np.ndarray
    start_row: int = 0
    scaler: Optional[tuple] = field(default=None, repr=False)

    def __len__(self):
        return len(self.inputs)


def load_csv(path, has_date_column=True):
    """Read a header + (optional date column) + numeric columns file.

    Cells must parse as finite decimals; the first offending cell is reported
    with its 1-based file row and its column name.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file, expected a header row") from None
        names = header[1:] if has_date_column else header
        if not names:
            raise DataFormatError(f"{path}: no value columns in header")
        stamps = [] if has_date_column else None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataFormatError(
                    f"{path}: row {lineno} has {len(row)} fields, header has {len(header)}"
                )
            cells = row[1:] if has_date_column else row
            if has_date_column:
                stamps.append(row[0])
            parsed = []
            for name, cell in zip(names, cells):
                try:
                    v = float(cell)
                except ValueError:
                    v = math.nan
                if not math.isfinite(v):
                    raise DataFormatError(
                        f"{path}: row {lineno}, column {name!r}: cannot use value {cell!r}"
                    )
                parsed.append(v)
            rows.append(parsed)
    values = np.array(rows, dtype=np.float64).reshape(len(rows), len(names))
    return RawDataset(values, list(names), stamps)


def save_csv(raw, path, date_header="date"):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        header = list(raw.channel_names)
        if raw.timestamps is not None:
            header = [date_header] + header
        w.writerow(header)
        for i, row in enumerate(raw.values):
            cells = [repr(float(v)) for v in row]
            if raw.timestamps is not None:
                cells = [raw.timestamps[i]] + cells
            w.writerow(cells)


def segment_bounds(n_rows, ratios=DEFAULT_RATIOS):
    """Row boundaries ``(0, b1, b2, n_rows)`` of a chronological split."""
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ConfigurationError(f"ratios must be three positive numbers, got {ratios}")
    total = sum(ratios)
    # tolerance guards against 0.7 + 0.2 landing just below 0.9
    b1 = math.floor(ratios[0] / total * n_rows + 1e-9)
    b2 = math.floor((ratios[0] + ratios[1]) / total * n_rows + 1e-9)
    return 0, b1, b2, n_rows


def make_windows(values, seq_len, horizon):
    """Stride-1 (input, target) pairs fully inside ``values``."""
    n = len(values) - seq_len - horizon + 1
    if n < 1:
        raise ConfigurationError(
            f"segment of {len(values)} rows is too short: need at least "
            f"seq_len + horizon = {seq_len + horizon}"
        )
    win = sliding_window_view(values, seq_len + horizon, axis=0)[:n]
    # (n, C, L+H) -> (n, L+H, C)
    win = win.transpose(0, 2, 1)
    return np.ascontiguousarray(win[:, :seq_len]), np.ascontiguousarray(win[:, seq_len:])


def fit_standardizer(values):
    mean = values.mean(axis=0)
    std = values.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return mean, std


def chronological_split(raw, seq_len, horizon, ratios=DEFAULT_RATIOS, standardize=False,
                        scaler=None):
    """Train/validation/test windows from consecutive row segments.

    With ``standardize`` each channel is shifted and scaled by statistics of
    the training segment (or by ``scaler`` when given).
    """
    bounds = segment_bounds(raw.n_rows, ratios)
    values = raw.values
    if standardize or scaler is not None:
        if scaler is None:
            scaler = fit_standardizer(values[bounds[0]:bounds[1]])
        values = (values - scaler[0]) / scaler[1]
    splits = []
    for role, lo, hi in zip(("train", "val", "test"), bounds[:-1], bounds[1:]):
        try:
            x, y = make_windows(values[lo:hi], seq_len, horizon)
        except ConfigurationError as exc:
            raise ConfigurationError(f"{role} segment rows [{lo}, {hi}): {exc}") from None
        splits.append(DatasetSplit(role, x, y, lo, scaler))
    return tuple(splits)


@dataclass(frozen=True)
class SyntheticSpec:
    n: int = 5000
    c: int = 3
    trend_slope: float = 0.001
    sinusoids: tuple = ((24, 1.0), (96, 0.5))
    noise_sigma: float = 0.1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "sinusoids",
                           tuple((float(p), float(a)) for p, a in self.sinusoids))
        if any(p < 2 for p, _ in self.sinusoids):
            raise ConfigurationError("sinusoid periods must be >= 2")
        if self.noise_sigma < 0:
            raise ConfigurationError("noise_sigma must be >= 0")
        if self.n < 1 or self.c < 1:
            raise ConfigurationError("n and c must be positive")


def generate_synthetic(spec):
    """Linear trend plus per-channel phase-shifted sinusoids plus Gaussian noise."""
    rng = np.random.default_rng(spec.seed)
    t = np.arange(spec.n, dtype=np.float64)[:, None]
    phases = rng.uniform(0.0, 2 * np.pi, size=(len(spec.sinusoids), spec.c))
    values = np.broadcast_to(spec.trend_slope * t, (spec.n, spec.c)).copy()
    for (period, amp), phi in zip(spec.sinusoids, phases):
        values += amp * np.sin(2 * np.pi * t / period + phi)
    if spec.noise_sigma > 0:
        values += rng.normal(0.0, spec.noise_sigma, size=(spec.n, spec.c))
    return RawDataset(values, [f"ch{i}" for i in range(spec.c)])
