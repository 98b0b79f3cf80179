"""Deterministic preprocessing of raw multichannel series into windows.

The two preparation chains used downstream:

* generation chain (``gan_chain_semg`` / ``imu_chain``): moving RMS on the
  muscle signal, moving average on the motion signal, then decimation. This
  yields the low-frequency activation envelopes the generator learns from.
* recognition chain (``hgr_chain_semg``): rectification, first-order low-pass
  Butterworth, then decimation. This is the classifier's raw-signal input.

All filters run causally at the full rate and decimation is plain sample
selection afterwards; windows in milliseconds convert to samples by floor.
Every operation is a pure function of its inputs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ModalityError, StatsMismatchError

MODALITIES = ("semg", "acc", "euler")


@dataclass(frozen=True)
class MultichannelSeries:
    """Uniformly sampled frames x channels signal with a modality tag."""

    data: np.ndarray
    sample_rate_hz: float
    modality: str

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        object.__setattr__(self, "data", arr)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("series data must be a frames x channels matrix with >= 1 row")
        if not np.all(np.isfinite(arr)):
            raise ValueError("series contains non-finite samples")
        if not self.sample_rate_hz > 0:
            raise ValueError("sample rate must be positive")
        if self.modality not in MODALITIES:
            raise ValueError(f"unknown modality {self.modality!r}")

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def channel_count(self) -> int:
        return self.data.shape[1]

    def with_data(self, data, sample_rate_hz=None) -> "MultichannelSeries":
        return MultichannelSeries(
            data, self.sample_rate_hz if sample_rate_hz is None else sample_rate_hz, self.modality
        )


@dataclass(frozen=True)
class SignalWindow:
    """Fixed-length k x C segment of a series."""

    data: np.ndarray
    origin_frame: int
    modality: str

    def __post_init__(self):
        if self.origin_frame < 0:
            raise ValueError("origin_frame must be >= 0")


@dataclass(frozen=True)
class ChannelStats:
    """Per-channel statistics fitted on training data only."""

    minimum: np.ndarray
    maximum: np.ndarray
    mean: np.ndarray
    std: np.ndarray

    @property
    def channels(self) -> int:
        return int(self.minimum.shape[0])

    def to_dict(self) -> dict:
        return {
            "minimum": self.minimum.tolist(),
            "maximum": self.maximum.tolist(),
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelStats":
        return cls(
            np.asarray(d["minimum"], dtype=np.float64),
            np.asarray(d["maximum"], dtype=np.float64),
            np.asarray(d["mean"], dtype=np.float64),
            np.asarray(d["std"], dtype=np.float64),
        )


def window_samples(window_ms: float, sample_rate_hz: float) -> int:
    """Milliseconds to samples, floored (with a guard against float dust)."""
    return int(math.floor(window_ms * sample_rate_hz / 1000.0 + 1e-9))


def rectify(s: MultichannelSeries) -> MultichannelSeries:
    """Full-wave rectification of a muscle signal."""
    if s.modality != "semg":
        raise ModalityError(f"rectify expects an sEMG series, got {s.modality!r}")
    return s.with_data(np.abs(s.data))


def _trailing_window_sums(values: np.ndarray, width: int):
    """Causal trailing-window sums with a shortened prefix (no zero padding)."""
    csum = np.cumsum(values, axis=0)
    sums = csum.copy()
    if width < values.shape[0]:
        sums[width:] = csum[width:] - csum[:-width]
    counts = np.minimum(np.arange(1, values.shape[0] + 1), width)
    return sums, counts[:, None]


def moving_rms(s: MultichannelSeries, window_ms: float) -> MultichannelSeries:
    """Moving RMS over a trailing window of ``window_ms`` milliseconds.

    Each output frame is the root mean square of the samples in the window
    ending at that frame; the window is shortened at the start of the series.
    """
    width = window_samples(window_ms, s.sample_rate_hz)
    if width < 1:
        raise ValueError(f"window of {window_ms} ms is shorter than one sample")
    sums, counts = _trailing_window_sums(s.data**2, width)
    return s.with_data(np.sqrt(sums / counts))


def moving_average(s: MultichannelSeries, window_ms: float) -> MultichannelSeries:
    """Moving arithmetic mean over a trailing window of ``window_ms``."""
    width = window_samples(window_ms, s.sample_rate_hz)
    if width < 1:
        raise ValueError(f"window of {window_ms} ms is shorter than one sample")
    sums, counts = _trailing_window_sums(s.data, width)
    return s.with_data(sums / counts)


def butter_lowpass1(s: MultichannelSeries, cutoff_hz: float) -> MultichannelSeries:
    """First-order low-pass Butterworth, single causal pass, zero initial state.

    Coefficients come from the bilinear transform of H(s) = wc / (s + wc):
    with K = tan(pi * fc / fs), b0 = b1 = K / (K + 1) and a1 = (K - 1) / (K + 1),
    so the difference equation is y[n] = b0 x[n] + b1 x[n-1] - a1 y[n-1].
    """
    if not 0 < cutoff_hz < s.sample_rate_hz / 2:
        raise ValueError(
            f"cutoff {cutoff_hz} Hz must lie strictly below the Nyquist rate "
            f"{s.sample_rate_hz / 2} Hz"
        )
    k = math.tan(math.pi * cutoff_hz / s.sample_rate_hz)
    b0 = b1 = k / (k + 1.0)
    a1 = (k - 1.0) / (k + 1.0)
    x = s.data
    y = np.empty_like(x)
    y[0] = b0 * x[0]
    for i in range(1, x.shape[0]):
        y[i] = b0 * x[i] + b1 * x[i - 1] - a1 * y[i - 1]
    return s.with_data(y)


def decimate(s: MultichannelSeries, factor: int) -> MultichannelSeries:
    """Keep every ``factor``-th frame; the rate divides accordingly.

    Pure sample selection: the smoothing stages ahead of it in both chains
    are treated as the anti-aliasing step.
    """
    if int(factor) != factor or factor < 1:
        raise ValueError(f"decimation factor must be a positive integer, got {factor}")
    factor = int(factor)
    if s.frames < factor:
        raise ValueError(f"series of {s.frames} frames is shorter than factor {factor}")
    return s.with_data(s.data[::factor].copy(), sample_rate_hz=s.sample_rate_hz / factor)


def segment(s: MultichannelSeries, window_ms: float, step_ms: float) -> list:
    """Slice a series into overlapping windows of ``window_ms`` every ``step_ms``.

    Windows start at frames 0, st, 2 st, ...; the count is
    floor((frames - k) / st) + 1. Each window records its origin frame.
    """
    k = window_samples(window_ms, s.sample_rate_hz)
    st = window_samples(step_ms, s.sample_rate_hz)
    if k < 1:
        raise ValueError(f"window of {window_ms} ms is shorter than one sample")
    if st < 1:
        raise ValueError(f"step of {step_ms} ms is shorter than one sample")
    if s.frames < k:
        raise ValueError(f"series of {s.frames} frames cannot hold a {k}-frame window")
    count = (s.frames - k) // st + 1
    return [
        SignalWindow(s.data[i * st : i * st + k], origin_frame=i * st, modality=s.modality)
        for i in range(count)
    ]


def stack_windows(windows) -> np.ndarray:
    """Stack a window list into an (n, k, C) array."""
    return np.stack([w.data for w in windows], axis=0)


def fit_stats(items) -> ChannelStats:
    """Fit per-channel min/max/mean/std (population std) on training data.

    Accepts a list of series, a list of arrays, or a single array; frames
    are pooled across the list. Never fit these on test data.
    """
    if isinstance(items, (MultichannelSeries, np.ndarray)):
        items = [items]
    blocks = []
    for item in items:
        arr = item.data if isinstance(item, MultichannelSeries) else np.asarray(item, dtype=np.float64)
        blocks.append(arr.reshape(-1, arr.shape[-1]))
    pooled = np.concatenate(blocks, axis=0)
    return ChannelStats(
        minimum=pooled.min(axis=0),
        maximum=pooled.max(axis=0),
        mean=pooled.mean(axis=0),
        std=pooled.std(axis=0),
    )


def _check_channels(stats: ChannelStats, channels: int):
    if stats.channels != channels:
        raise StatsMismatchError(
            f"stats fitted on {stats.channels} channels applied to {channels}-channel data"
        )


def apply_norm(data, stats: ChannelStats, mode: str) -> np.ndarray:
    """Normalize per channel: ``minmax_pm1`` to [-1, 1] or ``zscore``.

    Degenerate channels (max == min, or std == 0) map to zero. Accepts a
    series or any array whose last axis is channels; returns an array.
    """
    arr = data.data if isinstance(data, MultichannelSeries) else np.asarray(data, dtype=np.float64)
    _check_channels(stats, arr.shape[-1])
    if mode == "minmax_pm1":
        span = stats.maximum - stats.minimum
        safe = np.where(span == 0, 1.0, span)
        out = 2.0 * (arr - stats.minimum) / safe - 1.0
        return np.where(span == 0, 0.0, out)
    if mode == "zscore":
        safe = np.where(stats.std == 0, 1.0, stats.std)
        out = (arr - stats.mean) / safe
        return np.where(stats.std == 0, 0.0, out)
    raise ValueError(f"unknown normalization mode {mode!r}")


def invert_norm(arr: np.ndarray, stats: ChannelStats, mode: str) -> np.ndarray:
    """Map normalized values back to physical units (degenerate -> mean/min)."""
    arr = np.asarray(arr, dtype=np.float64)
    _check_channels(stats, arr.shape[-1])
    if mode == "minmax_pm1":
        return (arr + 1.0) / 2.0 * (stats.maximum - stats.minimum) + stats.minimum
    if mode == "zscore":
        return arr * stats.std + stats.mean
    raise ValueError(f"unknown normalization mode {mode!r}")


# ---------------------------------------------------------------------------
# named preprocessing presets

@dataclass(frozen=True)
class PreprocSpec:
    """Window, step, decimation, and filter parameters for both chains."""

    window_ms: float = 200.0
    step_ms: float = 10.0
    decimation: int = 20
    rms_ms: float = 100.0
    mavg_ms: float = 100.0
    butter_cutoff_hz: float = 1.0

    def to_dict(self) -> dict:
        return {
            "window_ms": self.window_ms,
            "step_ms": self.step_ms,
            "decimation": self.decimation,
            "rms_ms": self.rms_ms,
            "mavg_ms": self.mavg_ms,
            "butter_cutoff_hz": self.butter_cutoff_hz,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PreprocSpec":
        return cls(**d)


def gan_chain_semg(s: MultichannelSeries, spec: PreprocSpec) -> MultichannelSeries:
    """Generation-chain sEMG: moving RMS envelope, then decimation."""
    return decimate(moving_rms(s, spec.rms_ms), spec.decimation)


def hgr_chain_semg(s: MultichannelSeries, spec: PreprocSpec) -> MultichannelSeries:
    """Recognition-chain sEMG: rectify, low-pass Butterworth, decimate.

    Kept separate from the generation chain on purpose; the two are not
    merged and a caller picks the one matching its role.
    """
    return decimate(butter_lowpass1(rectify(s), spec.butter_cutoff_hz), spec.decimation)


def imu_chain(s: MultichannelSeries, spec: PreprocSpec) -> MultichannelSeries:
    """Motion-signal chain: moving average, then decimation."""
    return decimate(moving_average(s, spec.mavg_ms), spec.decimation)


def segment_series(s: MultichannelSeries, spec: PreprocSpec) -> list:
    return segment(s, spec.window_ms, spec.step_ms)
