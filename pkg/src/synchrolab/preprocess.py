"""EDA cleaning chain: low-pass filter, fence-based outlier repair,
moving-average smoothing, min-max normalization, and resampling.

Stage order in `preprocess_pipeline` is fixed: filter, outlier repair,
moving average, normalize. Every stage preserves length; `resample` is
the only length-changing operation and is invoked separately by the
keyframe encoder.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import butter, lfilter, sosfiltfilt, sosfilt

from .dataset import Recording
from .errors import (
    AllFlagged,
    CutoffAboveNyquist,
    DegenerateRange,
    SignalTooShort,
)


@dataclass(frozen=True)
class PreprocessConfig:
    """Tunables for the cleaning chain; defaults follow the study setup."""

    cutoff_hz: float = 0.5
    filter_order: int = 2
    zero_phase: bool = True
    iqr_multiplier: float = 1.5
    ma_window_s: float = 1.0
    analysis_hz: float = 10.0
    animation_hz: float = 30.0

    def __post_init__(self):
        if self.filter_order < 1:
            raise ValueError("filter_order must be >= 1")
        if not self.ma_window_s > 0:
            raise ValueError("ma_window_s must be positive")
        if not self.cutoff_hz > 0:
            raise ValueError("cutoff_hz must be positive")

    @classmethod
    def from_mapping(cls, d: dict) -> "PreprocessConfig":
        d = dict(d)
        rates = d.pop("target_rates", {})
        kwargs = {k: d[k] for k in
                  ("cutoff_hz", "filter_order", "zero_phase", "iqr_multiplier",
                   "ma_window_s") if k in d}
        if "analysis_hz" in rates:
            kwargs["analysis_hz"] = rates["analysis_hz"]
        if "animation_hz" in rates:
            kwargs["animation_hz"] = rates["animation_hz"]
        return cls(**kwargs)


def _butter_lowpass(signal: np.ndarray, rate_hz: float, cutoff_hz: float,
                    order: int, zero_phase: bool) -> np.ndarray:
    """Butterworth low-pass (bilinear transform of the analog prototype).

    Zero-phase mode filters forward then backward over an odd-reflected
    extension of 3*(order+1) samples, so no phase lag is introduced.
    """
    signal = np.asarray(signal, dtype=np.float64)
    nyquist = rate_hz / 2.0
    if cutoff_hz >= nyquist:
        raise CutoffAboveNyquist(
            f"cutoff {cutoff_hz} Hz >= Nyquist {nyquist} Hz at rate {rate_hz} Hz")
    min_len = 3 * (order + 1)
    if signal.size < min_len:
        raise SignalTooShort(f"need >= {min_len} samples, got {signal.size}")
    sos = butter(order, cutoff_hz, btype="low", fs=rate_hz, output="sos")
    if zero_phase:
        padlen = min(min_len, signal.size - 1)
        return sosfiltfilt(sos, signal, padtype="odd", padlen=padlen)
    return sosfilt(sos, signal)


def butterworth_lowpass(signal: np.ndarray, rate_hz: float,
                        cfg: PreprocessConfig | None = None) -> np.ndarray:
    cfg = cfg or PreprocessConfig()
    return _butter_lowpass(signal, rate_hz, cfg.cutoff_hz, cfg.filter_order,
                           cfg.zero_phase)


def detect_outliers(signal: np.ndarray, iqr_multiplier: float = 1.5) -> np.ndarray:
    """Boolean mask of samples outside the quartile fences.

    Fences are Q1 - k*IQR and Q3 + k*IQR with type-7 (linearly
    interpolated) quartiles; k = 0 collapses the fences to the quartiles
    themselves. Flagging is invariant under positive affine rescaling.
    """
    signal = np.asarray(signal, dtype=np.float64)
    if signal.size < 4:
        raise SignalTooShort(f"need >= 4 samples for quartile fences, got {signal.size}")
    q1, q3 = np.quantile(signal, [0.25, 0.75])
    iqr = q3 - q1
    lo = q1 - iqr_multiplier * iqr
    hi = q3 + iqr_multiplier * iqr
    return (signal < lo) | (signal > hi)


def interpolate_outliers(signal: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Replace flagged runs by linear interpolation between valid neighbors.

    Leading/trailing flagged runs take the nearest valid value (constant
    extension). Raises AllFlagged when no valid sample remains.
    """
    signal = np.asarray(signal, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != signal.shape:
        raise ValueError("mask length must equal signal length")
    if mask.all():
        raise AllFlagged("no valid samples to interpolate from")
    if not mask.any():
        return signal.copy()
    out = signal.copy()
    idx = np.arange(signal.size)
    valid = ~mask
    out[mask] = np.interp(idx[mask], idx[valid], signal[valid])
    return out


def moving_average(signal: np.ndarray, rate_hz: float, window_s: float = 1.0) -> np.ndarray:
    """Centered moving average; window truncates to the valid range at edges.

    Window width is round(window_s * rate) samples, forced odd by adding
    one. Length is preserved; a constant signal is unchanged.
    """
    if not window_s > 0:
        raise ValueError("window_s must be positive")
    signal = np.asarray(signal, dtype=np.float64)
    w = int(round(window_s * rate_hz))
    if w % 2 == 0:
        w += 1
    if w <= 1:
        return signal.copy()
    half = w // 2
    n = signal.size
    csum = np.concatenate(([0.0], np.cumsum(signal)))
    idx = np.arange(n)
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half, n - 1)
    return (csum[hi + 1] - csum[lo]) / (hi - lo + 1)


def minmax_normalize(signal: np.ndarray) -> np.ndarray:
    """Map onto [0, 1]; raises DegenerateRange for a constant signal."""
    signal = np.asarray(signal, dtype=np.float64)
    lo = float(np.min(signal))
    hi = float(np.max(signal))
    if hi == lo:
        raise DegenerateRange("signal has zero range")
    return (signal - lo) / (hi - lo)


def resample(signal: np.ndarray, from_hz: float, to_hz: float) -> np.ndarray:
    """Linear interpolation onto a uniform grid at to_hz.

    The grid spans the same endpoint-to-endpoint duration
    (n-1)/from_hz, so the output has round(duration*to_hz) + 1 samples
    with both endpoints retained. Identical rates return the signal
    unchanged.
    """
    if not (from_hz > 0 and to_hz > 0):
        raise ValueError("rates must be positive")
    signal = np.asarray(signal, dtype=np.float64)
    n = signal.size
    if n == 0:
        raise ValueError("empty signal")
    if n == 1:
        return signal.copy()
    span = (n - 1) / from_hz
    n_out = int(round(span * to_hz)) + 1
    t_in = np.arange(n) / from_hz
    t_out = np.minimum(np.arange(n_out) / to_hz, span)
    return np.interp(t_out, t_in, signal)


def preprocess_signal(signal: np.ndarray, rate_hz: float,
                      cfg: PreprocessConfig | None = None) -> np.ndarray:
    """Cleaning chain on a bare array: filter, repair, smooth, normalize."""
    cfg = cfg or PreprocessConfig()
    out = _butter_lowpass(signal, rate_hz, cfg.cutoff_hz, cfg.filter_order,
                          cfg.zero_phase)
    mask = detect_outliers(out, cfg.iqr_multiplier)
    if mask.any():
        out = interpolate_outliers(out, mask)
    out = moving_average(out, rate_hz, cfg.ma_window_s)
    return minmax_normalize(out)


def preprocess_pipeline(rec: Recording, cfg: PreprocessConfig | None = None) -> Recording:
    """Apply the full cleaning chain to a recording; rate is unchanged."""
    return rec.replace_samples(preprocess_signal(rec.samples, rec.sample_rate_hz, cfg))
