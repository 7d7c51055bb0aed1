"""
Frame reduction - turns sensel grids into ROI-averaged pressure series.
"""

import math
from typing import Optional

import numpy as np

from app.models.models import (
    FrameSequence,
    PressureFrame,
    PressureSeries,
    Roi,
    SpatialAverage,
)
from app.utils.exceptions import EmptyInputError, EmptyResultError, InvalidParameterError
from app.utils.logger import get_logger

logger = get_logger(__name__)


def _check_floor(noise_floor: float) -> float:
    noise_floor = float(noise_floor)
    if not math.isfinite(noise_floor) or noise_floor < 0:
        raise InvalidParameterError(f"noise floor must be >= 0, got {noise_floor}")
    return noise_floor


def spatial_average(frame: PressureFrame, roi: Roi, noise_floor: float) -> SpatialAverage:
    """
    Mean of the ROI sensels at or above the noise floor.

    Returns a zero pressure with an active count of 0 when no sensel passes.

    Examples:
        sensels {0.05, 0.10, 0.20}, floor 0.06 -> SpatialAverage(0.15, 2)
    """
    noise_floor = _check_floor(noise_floor)
    roi.validate_for(frame.shape)
    patch = frame.grid[roi.slices]
    active = patch >= noise_floor
    count = int(active.sum())
    if count == 0:
        return SpatialAverage(0.0, 0)
    return SpatialAverage(float(patch[active].mean()), count)


def _masked_means(stack: np.ndarray, noise_floor: float):
    """Per-frame mean of the sensels at or above the floor, with the active counts."""
    active = stack >= noise_floor
    counts = active.reshape(stack.shape[0], -1).sum(axis=1)
    sums = np.where(active, stack, 0.0).reshape(stack.shape[0], -1).sum(axis=1)
    means = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
    return means, counts


def average_series(seq: FrameSequence, roi: Roi, noise_floor: float) -> PressureSeries:
    """One spatial average per frame; zero-active frames yield 0 and are flagged."""
    if seq.n_frames == 0:
        raise EmptyInputError("frame sequence is empty")
    noise_floor = _check_floor(noise_floor)
    roi.validate_for(seq.shape)

    stack = seq.to_array()[(slice(None),) + roi.slices]
    means, counts = _masked_means(stack, noise_floor)
    flagged = counts == 0
    if flagged.any():
        logger.warning(
            f"{int(flagged.sum())} of {seq.n_frames} frames have no sensel >= {noise_floor} psi in ROI {roi.as_tuple()}")
    return PressureSeries(means, seq.fs, flagged=flagged, active_counts=counts)


def contact_area_percent(seq: FrameSequence, noise_floor: float, roi: Optional[Roi] = None) -> float:
    """Mean share of the mat's sensels at or above the floor (%), counted inside `roi` when given."""
    if seq.n_frames == 0:
        raise EmptyInputError("frame sequence is empty")
    noise_floor = _check_floor(noise_floor)
    stack = seq.to_array()
    total = stack.shape[1] * stack.shape[2]
    if roi is not None:
        roi.validate_for(seq.shape)
        stack = stack[(slice(None),) + roi.slices]
    active = (stack >= noise_floor).reshape(stack.shape[0], -1).sum(axis=1)
    return float(100.0 * active.mean() / total)


def trim_transients(seq: FrameSequence, lead_s: float, tail_s: float) -> FrameSequence:
    """
    Keep the frames with t in [lead_s, duration - tail_s), timestamps re-zeroed.

    Example: 10 s at 20 fps trimmed 2 s / 2 s keeps 120 frames.
    """
    if lead_s < 0 or tail_s < 0:
        raise InvalidParameterError(f"trims must be >= 0, got {lead_s} / {tail_s}")
    n = seq.n_frames
    if n == 0:
        raise EmptyInputError("frame sequence is empty")
    if lead_s == 0 and tail_s == 0:
        return seq

    # frame i sits at i / fs relative to the first frame
    start = math.ceil(lead_s * seq.fs - 1e-9)
    stop = math.ceil(n - tail_s * seq.fs - 1e-9)
    if lead_s + tail_s >= seq.duration_s or stop <= start:
        raise EmptyResultError(
            f"trims {lead_s} s + {tail_s} s leave nothing of a {seq.duration_s} s record")

    kept = seq.frames[start:stop]
    t0 = kept[0].timestamp
    frames = tuple(PressureFrame(f.timestamp - t0, f.grid) for f in kept)
    logger.info(f"Trimmed {start} leading and {n - stop} trailing frames, {len(frames)} kept")
    return FrameSequence(frames, seq.fs)
