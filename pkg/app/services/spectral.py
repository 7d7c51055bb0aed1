"""
Spectral RR estimation: periodogram, peak search and windowed aggregation.
"""

import math
from typing import Iterator, List, Optional, Tuple

import numpy as np
from scipy import fft

from app.models.models import METHODS, PressureSeries, RrEstimate, Spectrum
from app.services.preprocess import isolate_breathing, remove_dc
from app.utils.exceptions import InsufficientDataError, InvalidParameterError, NoPeakError
from app.utils.logger import get_logger

logger = get_logger(__name__)

Band = Optional[Tuple[float, float]]


def periodogram(series: PressureSeries) -> Spectrum:
    """
    |DFT(x)[k]|^2 for k = 0 .. N // 2 with a rectangular window and no zero padding.

    The series is transformed as given; callers remove DC first.
    """
    x = series.values
    n = x.size
    if n < 2:
        raise InsufficientDataError(f"periodogram needs at least 2 samples, got {n}")
    spectrum = fft.rfft(x)
    power = spectrum.real ** 2 + spectrum.imag ** 2
    freqs = fft.rfftfreq(n, d=1.0 / series.fs)
    return Spectrum(freqs, power, n, series.fs)


def _check_band(band: Band) -> Band:
    if band is None:
        return None
    lo, hi = (float(b) for b in band)
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo < 0 or lo >= hi:
        raise InvalidParameterError(f"band must satisfy 0 <= lo < hi, got {band}")
    return lo, hi


def peak_frequency(spec: Spectrum, exclude_dc: bool = True, band: Band = None) -> float:
    """
    Frequency of the strongest bin; ties resolve to the lowest frequency.

    Raises NoPeakError when every candidate bin is zero.
    """
    band = _check_band(band)
    candidates = np.ones(spec.freqs.shape, dtype=bool)
    if exclude_dc:
        candidates[0] = False
    if band is not None:
        tol = 1e-9 * spec.bin_width_hz
        candidates &= (spec.freqs >= band[0] - tol) & (spec.freqs <= band[1] + tol)

    idx = np.flatnonzero(candidates)
    if idx.size == 0:
        raise NoPeakError(f"no spectral bins inside band {band}")
    power = spec.power[idx]
    best = int(np.argmax(power))
    if power[best] <= 0:
        raise NoPeakError("all candidate bins carry zero power")
    return float(spec.freqs[idx[best]])


def window_layout(n_samples: int, fs: float, window_s: float, overlap: float) -> Tuple[int, List[int]]:
    """
    Window length and start indices for a record of n_samples.

    Windows hold round(window_s * fs) samples and advance by
    round((1 - overlap) * window_s * fs); a trailing partial window is dropped.
    """
    if not math.isfinite(window_s) or window_s <= 0:
        raise InvalidParameterError(f"window must be > 0 s, got {window_s}")
    if not 0 <= overlap < 1:
        raise InvalidParameterError(f"overlap must be in [0, 1), got {overlap}")
    length = math.floor(window_s * fs + 0.5)
    hop = math.floor((1.0 - overlap) * window_s * fs + 0.5)
    if length < 2:
        raise InvalidParameterError(f"a {window_s} s window holds fewer than 2 samples at {fs} Hz")
    if hop < 1:
        raise InvalidParameterError(f"overlap {overlap} leaves a hop of zero samples")
    if n_samples < length:
        raise InsufficientDataError(
            f"record of {n_samples / fs:g} s is shorter than one {window_s:g} s window")
    return length, list(range(0, n_samples - length + 1, hop))


def _conditioned_input(series: PressureSeries, method: str, smooth_window_s: float) -> PressureSeries:
    if method not in METHODS:
        raise InvalidParameterError(f"method must be one of {METHODS}, got '{method}'")
    if method == "modified":
        return isolate_breathing(series, smooth_window_s)
    return series


def _window_spectra(series: PressureSeries, window_s: float, overlap: float) -> Iterator[Tuple[float, Spectrum]]:
    length, starts = window_layout(series.n_samples, series.fs, window_s, overlap)
    for start in starts:
        segment = PressureSeries(series.values[start:start + length], series.fs)
        yield start / series.fs, periodogram(remove_dc(segment))


def windowed_spectra(series: PressureSeries, window_s: float = 20.0, overlap: float = 0.5,
                     method: str = "baseline", smooth_window_s: float = 1.5) -> List[Tuple[float, Spectrum]]:
    """(start time in s, spectrum) for every analysis window, in time order."""
    conditioned = _conditioned_input(series, method, smooth_window_s)
    return list(_window_spectra(conditioned, window_s, overlap))


def _estimate(series: PressureSeries, window_s: float, overlap: float, band: Band, method: str) -> RrEstimate:
    band = _check_band(band)
    starts, peaks = [], []
    for start_s, spec in _window_spectra(series, window_s, overlap):
        starts.append(start_s)
        peaks.append(peak_frequency(spec, exclude_dc=True, band=band))

    estimate = RrEstimate.from_peaks(
        peaks,
        window_s=window_s,
        overlap_fraction=overlap,
        method=method,
        band=band,
        window_starts_s=tuple(starts),
    )
    logger.info(f"{method} estimate: {estimate.rr_bpm:.2f} bpm from {estimate.n_windows} windows")
    return estimate


def estimate_rr(series: PressureSeries, window_s: float = 20.0, overlap: float = 0.5,
                band: Band = None) -> RrEstimate:
    """
    Baseline estimator: 60 x mean of the per-window peak frequencies.

    Each window is DC-removed and transformed on its own.

    Example: 1.0 Hz sinusoid, 60 s at 20 fps -> 60.0 bpm over 5 windows
    """
    return _estimate(series, window_s, overlap, band, "baseline")


def estimate_rr_modified(series: PressureSeries, smooth_window_s: float = 1.5, window_s: float = 20.0,
                         overlap: float = 0.5, band: Band = None) -> RrEstimate:
    """Motion-suppressed estimator: the baseline pipeline on the series minus its moving average."""
    conditioned = isolate_breathing(series, smooth_window_s)
    return _estimate(conditioned, window_s, overlap, band, "modified")
