"""
Mat metrology: drift, one-minute creep and the bootstrap spread of drift.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from typing import Optional

import numpy as np

from app.models.models import FrameSequence, MetrologyReport, PressureSeries, Roi
from app.services.frames import average_series, contact_area_percent, trim_transients
from app.utils.constants import (
    BOOTSTRAP_BLOCK_SIZE,
    BOOTSTRAP_RESAMPLES,
    CREEP_ENDPOINT_WINDOW_S,
    TRANSIENT_LEAD_S,
    TRANSIENT_TAIL_S,
)
from app.utils.exceptions import DegenerateInputError, InsufficientDataError, InvalidParameterError
from app.utils.logger import get_logger

logger = get_logger(__name__)


def _drift(values: np.ndarray) -> float:
    if values.size < 2:
        raise InsufficientDataError(f"drift needs at least 2 samples, got {values.size}")
    p_avg = float(values.mean())
    if p_avg == 0:
        raise DegenerateInputError("mean pressure is zero")
    if np.ptp(values) == 0:
        return 0.0
    # population divisor N
    return float(100.0 * np.std(values) / p_avg)


def drift_percent(series: PressureSeries) -> float:
    """
    Standard deviation of P_n as a percentage of P_avg, divisor N.

    Example: [0.9, 1.1, 0.9, 1.1] -> 10.0
    """
    return _drift(series.values)


def creep_percent(series: PressureSeries, endpoint_window_s: float = CREEP_ENDPOINT_WINDOW_S) -> float:
    """
    (P_N - P_1) / P_avg per minute, in percent.

    P_1 and P_N are the means of the first and last endpoint_window_s of the
    record; the factor 60 * fs / N scales the record length to one minute.
    """
    x = series.values
    n = x.size
    m = math.floor(endpoint_window_s * series.fs + 0.5)
    if m < 1:
        raise InvalidParameterError(f"endpoint window of {endpoint_window_s} s holds no samples")
    if n < 2 * m:
        raise InsufficientDataError(
            f"creep needs two {endpoint_window_s:g} s endpoint windows, record is {series.duration_s:g} s")
    p_avg = float(x.mean())
    if p_avg == 0:
        raise DegenerateInputError("mean pressure is zero")
    p_first = float(x[:m].mean())
    p_last = float(x[-m:].mean())
    return (p_last - p_first) / p_avg * (60.0 * series.fs / n) * 100.0


def _check_bootstrap(n: int, block_size: int, n_boot: int, seed: int) -> None:
    if block_size < 1:
        raise InvalidParameterError(f"block size must be >= 1, got {block_size}")
    if n_boot < 2:
        raise InvalidParameterError(f"n_boot must be >= 2, got {n_boot}")
    if seed < 0:
        raise InvalidParameterError(f"seed must be >= 0, got {seed}")
    if n < block_size:
        raise InsufficientDataError(f"series of {n} samples is shorter than one block of {block_size}")


def bootstrap_drift_samples(series: PressureSeries, block_size: int = BOOTSTRAP_BLOCK_SIZE,
                            n_boot: int = BOOTSTRAP_RESAMPLES, seed: int = 0,
                            workers: int = 1) -> np.ndarray:
    """
    Drift of each moving-block resample, in resample order.

    Every resample concatenates N // block_size blocks whose starts are drawn
    uniformly from [0, N - block_size]; blocks overlap and never wrap. Resample
    b draws from default_rng([seed, b]), so results do not depend on `workers`.
    """
    x = series.values
    n = x.size
    _check_bootstrap(n, block_size, n_boot, seed)
    n_blocks = n // block_size
    n_starts = n - block_size + 1
    offsets = np.arange(block_size)

    def resample(b: int) -> float:
        rng = np.random.default_rng([seed, b])
        starts = rng.integers(0, n_starts, size=n_blocks)
        return _drift(x[(starts[:, None] + offsets).ravel()])

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            drifts = list(executor.map(resample, range(n_boot)))
    else:
        drifts = [resample(b) for b in range(n_boot)]
    return np.asarray(drifts)


def bootstrap_drift_std(series: PressureSeries, block_size: int = BOOTSTRAP_BLOCK_SIZE,
                        n_boot: int = BOOTSTRAP_RESAMPLES, seed: int = 0, workers: int = 1) -> float:
    """Sample standard deviation (divisor n_boot - 1) of the resampled drifts."""
    drifts = bootstrap_drift_samples(series, block_size, n_boot, seed, workers)
    return float(np.std(drifts, ddof=1))


def metrology_report(series: PressureSeries, endpoint_window_s: float = CREEP_ENDPOINT_WINDOW_S,
                     block_size: int = BOOTSTRAP_BLOCK_SIZE, n_boot: int = BOOTSTRAP_RESAMPLES,
                     seed: int = 0, workers: int = 1, contact_area_pct: Optional[float] = None,
                     noise_floor: Optional[float] = None) -> MetrologyReport:
    report = MetrologyReport(
        p_avg=float(series.values.mean()),
        drift_pct=drift_percent(series),
        creep_pct=creep_percent(series, endpoint_window_s),
        drift_std_pct=bootstrap_drift_std(series, block_size, n_boot, seed, workers),
        n_samples=series.n_samples,
        fs=series.fs,
        contact_area_pct=contact_area_pct,
        noise_floor=noise_floor,
        block_size=block_size,
        n_boot=n_boot,
    )
    logger.info(
        f"Metrology: P_avg={report.p_avg:.4g} psi, drift={report.drift_pct:.4g} %, "
        f"creep={report.creep_pct:.4g} %/min, std of drift={report.drift_std_pct:.4g} %")
    return report


def characterize_mat(seq: FrameSequence, noise_floor: float, roi: Optional[Roi] = None,
                     lead_s: float = TRANSIENT_LEAD_S, tail_s: float = TRANSIENT_TAIL_S,
                     endpoint_window_s: float = CREEP_ENDPOINT_WINDOW_S,
                     block_size: int = BOOTSTRAP_BLOCK_SIZE, n_boot: int = BOOTSTRAP_RESAMPLES,
                     seed: int = 0, workers: int = 1) -> MetrologyReport:
    """
    Static-load characterisation of a frame record.

    Drops the leading and trailing transients, averages over the whole mat
    (or `roi`) and reports mean pressure, contact area, creep, drift and the
    bootstrap std of drift.
    """
    trimmed = trim_transients(seq, lead_s, tail_s)
    region = roi if roi is not None else Roi.full(trimmed.shape)
    series = average_series(trimmed, region, noise_floor)
    area = contact_area_percent(trimmed, noise_floor, roi)
    return metrology_report(
        series,
        endpoint_window_s=endpoint_window_s,
        block_size=block_size,
        n_boot=n_boot,
        seed=seed,
        workers=workers,
        contact_area_pct=area,
        noise_floor=noise_floor,
    )
