"""
Signal conditioning ahead of spectral estimation.
"""

import math

import numpy as np

from app.models.models import ConditionedSeries, PressureSeries
from app.utils.constants import SNR_BAND_HALFWIDTH_HZ, SNR_HARMONICS, SNR_REST_EPSILON
from app.utils.exceptions import DegenerateInputError, InvalidParameterError
from app.utils.logger import get_logger

logger = get_logger(__name__)


def _conditioned(values: np.ndarray, series: PressureSeries, provenance: str) -> ConditionedSeries:
    return ConditionedSeries(
        values, series.fs,
        flagged=series.flagged,
        active_counts=series.active_counts,
        provenance=provenance,
    )


def _zero_mean(values: np.ndarray) -> np.ndarray:
    if np.ptp(values) == 0:
        return np.zeros_like(values)
    return values - values.mean()


def remove_dc(series: PressureSeries) -> ConditionedSeries:
    """
    Subtract the series mean from every sample.

    Examples:
        [1, 2, 3] -> [-1, 0, 1]
        constant series -> all zeros
    """
    return _conditioned(_zero_mean(series.values), series, "dc-removed")


def smoothing_length(window_s: float, fs: float) -> int:
    """Samples in a smoothing window, window_s * fs rounded half up."""
    if not math.isfinite(window_s) or window_s <= 0:
        raise InvalidParameterError(f"smoothing window must be > 0 s, got {window_s}")
    w = math.floor(window_s * fs + 0.5)
    if w < 1:
        raise InvalidParameterError(f"smoothing window of {window_s} s is shorter than one sample at {fs} Hz")
    return w


def moving_average(series: PressureSeries, window_s: float = 1.5) -> PressureSeries:
    """
    Centered moving mean with windows truncated at the record edges.

    Even lengths put the sample on the earlier of the two middle positions,
    i.e. (w - 1) // 2 samples before and w // 2 after.

    Example: [0, 0, 0, 10, 0, 0, 0] with w = 3 -> [0, 0, 10/3, 10/3, 10/3, 0, 0]
    """
    w = smoothing_length(window_s, series.fs)
    x = series.values
    n = x.size
    if w == 1:
        return PressureSeries(x, series.fs, flagged=series.flagged, active_counts=series.active_counts)

    # shifted by the first sample so constant inputs come back exactly
    offset = x[0]
    csum = np.concatenate(([0.0], np.cumsum(x - offset)))
    idx = np.arange(n)
    lo = np.maximum(idx - (w - 1) // 2, 0)
    hi = np.minimum(idx + w // 2 + 1, n)
    smoothed = (csum[hi] - csum[lo]) / (hi - lo) + offset
    return PressureSeries(smoothed, series.fs, flagged=series.flagged, active_counts=series.active_counts)


def isolate_breathing(series: PressureSeries, window_s: float = 1.5) -> ConditionedSeries:
    """Raw series minus its moving average, then DC-removed."""
    residual = series.values - moving_average(series, window_s).values
    return _conditioned(_zero_mean(residual), series, "motion-suppressed")


def snr_db(series: PressureSeries, f0: float, n_harmonics: int = SNR_HARMONICS,
           band_halfwidth: float = SNR_BAND_HALFWIDTH_HZ) -> float:
    """
    Power in the bands around f0 and its harmonics against all other non-DC power (dB).

    n_harmonics counts multiples beyond the fundamental: 0 keeps f0 only,
    1 adds 2*f0. Returns math.inf when the remaining power is negligible.
    """
    from app.services.spectral import periodogram

    fs = series.fs
    nyquist = fs / 2
    if not 0 < f0 < nyquist:
        raise InvalidParameterError(f"f0 = {f0} Hz is outside (0, {nyquist}) Hz")
    if n_harmonics < 0:
        raise InvalidParameterError(f"n_harmonics must be >= 0, got {n_harmonics}")
    if band_halfwidth < 0:
        raise InvalidParameterError(f"band half-width must be >= 0, got {band_halfwidth}")

    centers = [k * f0 for k in range(1, n_harmonics + 2)]
    for fc in centers:
        if fc - band_halfwidth <= 0 or fc + band_halfwidth >= nyquist:
            raise InvalidParameterError(
                f"band {fc:g} +/- {band_halfwidth:g} Hz leaves (0, {nyquist:g}) Hz")

    spec = periodogram(series)
    freqs, power = spec.freqs[1:], spec.power[1:]
    total = float(power.sum())
    if total == 0:
        raise DegenerateInputError("spectrum carries no power outside DC")

    tol = 1e-9 * spec.bin_width_hz
    in_band = np.zeros(freqs.shape, dtype=bool)
    for fc in centers:
        in_band |= np.abs(freqs - fc) <= band_halfwidth + tol

    signal = float(power[in_band].sum())
    rest = float(power[~in_band].sum())
    if rest < SNR_REST_EPSILON * total:
        return math.inf
    if signal == 0:
        return -math.inf
    return 10.0 * math.log10(signal / rest)
