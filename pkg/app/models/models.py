"""Domain types of the PSM measurement chain.

Every type is immutable after construction; array fields are stored as
read-only numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from app.utils.constants import (
    MATTRESS_TYPES,
    MOTION_CODINGS,
    MOTION_TYPES,
    POSITIONS,
    SIMULATOR_MODELS,
    TIMESTAMP_RTOL,
    TRIAL_DURATION_BOUNDS_S,
    DEFAULT_MOTION_POWER_RATIO,
    DEFAULT_FS,
)
from app.utils.exceptions import (
    DesignError,
    EmptyInputError,
    InvalidParameterError,
    RoiBoundsError,
)


def _readonly(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


def _check_fs(fs: float) -> float:
    fs = float(fs)
    if not math.isfinite(fs) or fs <= 0:
        raise InvalidParameterError(f"fs must be > 0, got {fs}")
    return fs


# ============================================================================
# FRAMES
# ============================================================================

@dataclass(frozen=True, eq=False)
class PressureFrame:
    """One timestamped sensel grid (psi)."""

    timestamp: float
    grid: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        if grid.ndim != 2 or grid.size == 0:
            raise InvalidParameterError(f"grid must be a non-empty 2-D matrix, got shape {grid.shape}")
        if not np.all(np.isfinite(grid)) or np.any(grid < 0):
            raise InvalidParameterError("sensel pressures must be finite and >= 0")
        if grid.flags.writeable:
            grid = grid.copy()
            grid.setflags(write=False)
        object.__setattr__(self, 'grid', grid)
        object.__setattr__(self, 'timestamp', float(self.timestamp))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.grid.shape


@dataclass(frozen=True, eq=False)
class FrameSequence:
    """Ordered frames sampled at `fs` frames/s."""

    frames: Tuple[PressureFrame, ...]
    fs: float

    def __post_init__(self):
        object.__setattr__(self, 'fs', _check_fs(self.fs))
        frames = tuple(self.frames)
        object.__setattr__(self, 'frames', frames)
        if not frames:
            return
        shape = frames[0].shape
        for i, frame in enumerate(frames):
            if frame.shape != shape:
                raise InvalidParameterError(
                    f"frame {i + 1} has grid shape {frame.shape}, expected {shape}")
        check_timestamps(np.array([f.timestamp for f in frames]), self.fs)

    @classmethod
    def from_array(cls, data, fs: float, timestamps: Optional[Sequence[float]] = None) -> "FrameSequence":
        """Build a sequence from a (frames, rows, cols) array; timestamps default to i / fs."""
        fs = _check_fs(fs)
        data = np.array(data, dtype=float)
        if data.ndim != 3:
            raise InvalidParameterError(f"expected a (frames, rows, cols) array, got shape {data.shape}")
        if not np.all(np.isfinite(data)) or np.any(data < 0):
            raise InvalidParameterError("sensel pressures must be finite and >= 0")
        data.setflags(write=False)
        if timestamps is None:
            timestamps = np.arange(data.shape[0]) / fs
        elif len(timestamps) != data.shape[0]:
            raise InvalidParameterError("one timestamp per frame is required")
        frames = tuple(PressureFrame(float(t), data[i]) for i, t in enumerate(timestamps))
        return cls(frames, fs)

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    @property
    def shape(self) -> Optional[Tuple[int, int]]:
        return self.frames[0].shape if self.frames else None

    @property
    def duration_s(self) -> float:
        return self.n_frames / self.fs

    @cached_property
    def timestamps(self) -> np.ndarray:
        return _readonly([f.timestamp for f in self.frames])

    def to_array(self) -> np.ndarray:
        """Stacked (frames, rows, cols) read-only array."""
        return self._stacked

    @cached_property
    def _stacked(self) -> np.ndarray:
        if not self.frames:
            raise EmptyInputError("frame sequence is empty")
        stacked = np.stack([f.grid for f in self.frames])
        stacked.setflags(write=False)
        return stacked


def check_timestamps(timestamps: np.ndarray, fs: float) -> None:
    """Timestamps must increase strictly with spacing 1/fs (relative tolerance 1e-6)."""
    if timestamps.size < 2:
        return
    steps = np.diff(timestamps)
    if np.any(steps <= 0):
        bad = int(np.argmax(steps <= 0)) + 2
        raise InvalidParameterError(f"timestamps not strictly increasing at frame {bad}")
    period = 1.0 / fs
    off = np.abs(steps - period) > TIMESTAMP_RTOL * period
    if np.any(off):
        bad = int(np.argmax(off)) + 2
        raise InvalidParameterError(
            f"frame {bad} spacing {steps[bad - 2]!r} s does not match 1/fs = {period!r} s")


@dataclass(frozen=True)
class Roi:
    """Rectangular region of interest, inclusive row/col bounds."""

    r0: int
    r1: int
    c0: int
    c1: int

    def __post_init__(self):
        for name in ('r0', 'r1', 'c0', 'c1'):
            value = getattr(self, name)
            if int(value) != value or value < 0:
                raise RoiBoundsError(f"ROI bound {name} must be a non-negative integer, got {value}")
            object.__setattr__(self, name, int(value))
        if self.r0 > self.r1 or self.c0 > self.c1:
            raise RoiBoundsError(f"ROI {self.as_tuple()} is empty")

    @classmethod
    def parse(cls, text: str) -> "Roi":
        """Parse 'r0,r1,c0,c1'."""
        parts = [p.strip() for p in str(text).split(',')]
        if len(parts) != 4:
            raise RoiBoundsError(f"ROI must be 'r0,r1,c0,c1', got '{text}'")
        try:
            bounds = [int(p) for p in parts]
        except ValueError:
            raise RoiBoundsError(f"ROI bounds must be integers, got '{text}'")
        return cls(*bounds)

    @classmethod
    def full(cls, shape: Tuple[int, int]) -> "Roi":
        return cls(0, shape[0] - 1, 0, shape[1] - 1)

    def validate_for(self, shape: Tuple[int, int]) -> None:
        rows, cols = shape
        if self.r1 >= rows or self.c1 >= cols:
            raise RoiBoundsError(f"ROI {self.as_tuple()} out of bounds for a {rows}x{cols} grid")

    def as_tuple(self) -> Tuple[int, int, int, int]:
        return (self.r0, self.r1, self.c0, self.c1)

    @property
    def slices(self) -> Tuple[slice, slice]:
        return slice(self.r0, self.r1 + 1), slice(self.c0, self.c1 + 1)


class SpatialAverage(NamedTuple):
    pressure: float
    active_sensels: int


@dataclass(frozen=True, eq=False)
class PressureSeries:
    """Uniformly sampled contact pressure P_n (psi)."""

    values: np.ndarray
    fs: float
    # True where no sensel passed the noise floor
    flagged: Optional[np.ndarray] = None
    active_counts: Optional[np.ndarray] = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 1:
            raise InvalidParameterError(f"series must be 1-D, got shape {values.shape}")
        if values.size == 0:
            raise EmptyInputError("series is empty")
        if not np.all(np.isfinite(values)):
            raise InvalidParameterError("series contains non-finite samples")
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 'fs', _check_fs(self.fs))
        for name, dtype in (('flagged', bool), ('active_counts', int)):
            extra = getattr(self, name)
            if extra is not None:
                extra = _readonly(extra, dtype=dtype)
                if extra.shape != values.shape:
                    raise InvalidParameterError(f"{name} must match the series length")
                object.__setattr__(self, name, extra)

    @property
    def n_samples(self) -> int:
        return int(self.values.size)

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.fs

    @property
    def time_s(self) -> np.ndarray:
        return np.arange(self.n_samples) / self.fs

    @property
    def n_flagged(self) -> int:
        return 0 if self.flagged is None else int(self.flagged.sum())


PROVENANCES = ("dc-removed", "motion-suppressed")


@dataclass(frozen=True, eq=False)
class ConditionedSeries(PressureSeries):
    """Series after DC removal or motion suppression."""

    provenance: str = "dc-removed"

    def __post_init__(self):
        super().__post_init__()
        if self.provenance not in PROVENANCES:
            raise InvalidParameterError(f"unknown provenance '{self.provenance}'")


# ============================================================================
# METROLOGY
# ============================================================================

@dataclass(frozen=True)
class MetrologyReport:
    p_avg: float
    drift_pct: float
    creep_pct: float
    drift_std_pct: float
    n_samples: int
    fs: float
    contact_area_pct: Optional[float] = None
    noise_floor: Optional[float] = None
    block_size: Optional[int] = None
    n_boot: Optional[int] = None


# ============================================================================
# SPECTRAL
# ============================================================================

@dataclass(frozen=True, eq=False)
class Spectrum:
    """One-sided periodogram, bins 0 .. fs/2."""

    freqs: np.ndarray
    power: np.ndarray
    n_fft: int
    fs: float

    def __post_init__(self):
        freqs = _readonly(self.freqs)
        power = _readonly(self.power)
        expected = self.n_fft // 2 + 1
        if freqs.shape != (expected,) or power.shape != (expected,):
            raise InvalidParameterError(
                f"spectrum needs {expected} bins for n_fft={self.n_fft}, got {freqs.shape} / {power.shape}")
        if np.any(power < 0):
            raise InvalidParameterError("spectral power must be >= 0")
        object.__setattr__(self, 'freqs', freqs)
        object.__setattr__(self, 'power', power)
        object.__setattr__(self, 'fs', _check_fs(self.fs))

    @property
    def bin_width_hz(self) -> float:
        return self.fs / self.n_fft


METHODS = ("baseline", "modified")


@dataclass(frozen=True)
class RrEstimate:
    rr_bpm: float
    per_window_peaks: Tuple[float, ...]
    window_s: float
    overlap_fraction: float
    method: str
    band: Optional[Tuple[float, float]] = None
    window_starts_s: Tuple[float, ...] = ()

    @classmethod
    def from_peaks(cls, peaks: Sequence[float], **kwargs) -> "RrEstimate":
        peaks = tuple(float(p) for p in peaks)
        if not peaks:
            raise EmptyInputError("no window peaks to aggregate")
        return cls(rr_bpm=60.0 * float(np.mean(peaks)), per_window_peaks=peaks, **kwargs)

    @property
    def n_windows(self) -> int:
        return len(self.per_window_peaks)


# ============================================================================
# MIXED-EFFECTS LIMITS OF AGREEMENT
# ============================================================================

@dataclass(frozen=True, eq=False)
class Design:
    """y ~ X beta + Z b + e with Z built from `groups`."""

    y: np.ndarray
    X: np.ndarray
    groups: np.ndarray
    column_names: Tuple[str, ...] = ()
    # effect name -> columns of X that code it
    effects: Dict[str, Tuple[int, ...]] = field(default_factory=dict)

    def __post_init__(self):
        y = np.array(self.y, dtype=float)
        X = np.array(self.X, dtype=float)
        groups = np.array(self.groups)
        if y.ndim != 1 or y.size == 0:
            raise DesignError("y must be a non-empty vector")
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2 or X.shape[0] != y.size or groups.shape != (y.size,):
            raise DesignError(
                f"inconsistent design: y {y.shape}, X {X.shape}, groups {groups.shape}")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
            raise DesignError("design contains non-finite values")
        names = tuple(self.column_names) or tuple(f"x{j}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise DesignError("one column name per column of X is required")
        effects = {k: tuple(int(j) for j in v) for k, v in dict(self.effects).items()}
        for effect, cols in effects.items():
            if not cols or any(j < 0 or j >= X.shape[1] for j in cols):
                raise DesignError(f"effect '{effect}' refers to missing columns {cols}")
        for arr in (y, X, groups):
            arr.setflags(write=False)
        object.__setattr__(self, 'y', y)
        object.__setattr__(self, 'X', X)
        object.__setattr__(self, 'groups', groups)
        object.__setattr__(self, 'column_names', names)
        object.__setattr__(self, 'effects', effects)

    @property
    def n_obs(self) -> int:
        return int(self.y.size)

    @property
    def n_fixed(self) -> int:
        return int(self.X.shape[1])


@dataclass(frozen=True, eq=False)
class MixedFit:
    beta: np.ndarray
    v1: float
    v2: float
    loglik: float
    n_params: int
    column_names: Tuple[str, ...] = ()
    n_obs: int = 0
    n_groups: int = 0
    random_effects: Dict = field(default_factory=dict)
    converged: bool = True
    boundary: bool = False
    identifiable: bool = True
    iterations: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'beta', _readonly(np.atleast_1d(self.beta)))

    @property
    def sd(self) -> float:
        return math.sqrt(self.v1 + self.v2)

    @property
    def intercept(self) -> float:
        if 'intercept' in self.column_names:
            return float(self.beta[self.column_names.index('intercept')])
        return float(self.beta[0])

    def coefficients(self) -> Dict[str, float]:
        names = self.column_names or tuple(f"x{j}" for j in range(self.beta.size))
        return {name: float(b) for name, b in zip(names, self.beta)}


@dataclass(frozen=True)
class LoAReport:
    bias: float
    sd: float
    lower: float
    upper: float
    method: str = ""

    @property
    def width(self) -> float:
        return self.upper - self.lower


@dataclass(frozen=True)
class LrtResult:
    chi2: float
    df: int
    p: float


@dataclass(frozen=True)
class EffectExclusion:
    """Model refit without one fixed effect, compared with the full model."""

    effect: str
    loa: LoAReport
    lrt: LrtResult
    fit: MixedFit


@dataclass(frozen=True)
class MethodAnalysis:
    method: str
    full_fit: MixedFit
    bias_fit: MixedFit
    loa: LoAReport
    exclusions: Tuple[EffectExclusion, ...] = ()
    pearson_r: Optional[float] = None
    n_trials: int = 0


# ============================================================================
# SYNTHETIC BENCH
# ============================================================================

@dataclass(frozen=True)
class TrialConfig:
    gold_rr_bpm: float = 60.0
    duration_s: float = 60.0
    fs: float = DEFAULT_FS
    motion: str = "none"
    mattress: str = "warmer"
    grunting: bool = False
    position: str = "supine"
    seed: int = 0
    model: str = "simnewb"
    motion_power_ratio: float = DEFAULT_MOTION_POWER_RATIO
    snap_to_bin: bool = True
    allow_any_duration: bool = False

    def __post_init__(self):
        fs = _check_fs(self.fs)
        object.__setattr__(self, 'fs', fs)
        for name, allowed in (('motion', MOTION_TYPES), ('mattress', MATTRESS_TYPES),
                              ('position', POSITIONS), ('model', SIMULATOR_MODELS)):
            if getattr(self, name) not in allowed:
                raise InvalidParameterError(f"{name} must be one of {allowed}, got '{getattr(self, name)}'")
        breathing_hz = float(self.gold_rr_bpm) / 60.0
        if not 0 < breathing_hz < fs / 2:
            raise InvalidParameterError(
                f"gold RR {self.gold_rr_bpm} bpm is outside (0, {30 * fs}) bpm for fs={fs}")
        lo, hi = TRIAL_DURATION_BOUNDS_S
        if not self.allow_any_duration and not lo <= self.duration_s <= hi:
            raise InvalidParameterError(f"duration {self.duration_s} s outside [{lo}, {hi}] s")
        if self.duration_s * fs < 2:
            raise InvalidParameterError("trial must contain at least two frames")
        if self.motion_power_ratio < 0:
            raise InvalidParameterError("motion_power_ratio must be >= 0")
        if self.seed < 0:
            raise InvalidParameterError(f"seed must be >= 0, got {self.seed}")

    @property
    def has_motion(self) -> bool:
        return self.motion != "none"


@dataclass(frozen=True, eq=False)
class SyntheticTrial:
    frames: FrameSequence
    gold_rr_bpm: float
    breathing_hz: float
    thorax_roi: Roi
    config: TrialConfig


@dataclass(frozen=True)
class EstimatorSettings:
    noise_floor: float
    window_s: float = 20.0
    overlap: float = 0.5
    smooth_window_s: float = 1.5
    band: Optional[Tuple[float, float]] = None


@dataclass(frozen=True)
class TrialResult:
    index: int
    config: TrialConfig
    gold_rr_bpm: float
    rr_baseline: Optional[float] = None
    rr_modified: Optional[float] = None
    snr_db: Optional[float] = None
    baseline_peaks: Tuple[float, ...] = ()
    modified_peaks: Tuple[float, ...] = ()
    baseline_error: Optional[str] = None
    modified_error: Optional[str] = None

    @property
    def diff_baseline(self) -> Optional[float]:
        return None if self.rr_baseline is None else self.rr_baseline - self.gold_rr_bpm

    @property
    def diff_modified(self) -> Optional[float]:
        return None if self.rr_modified is None else self.rr_modified - self.gold_rr_bpm

    def estimate(self, method: str) -> Optional[float]:
        return self.rr_baseline if method == "baseline" else self.rr_modified

    def diff(self, method: str) -> Optional[float]:
        return self.diff_baseline if method == "baseline" else self.diff_modified


@dataclass(frozen=True)
class TrialFailure:
    index: int
    method: str
    error: str


@dataclass(frozen=True)
class ExperimentResult:
    results: Tuple[TrialResult, ...]
    failures: Tuple[TrialFailure, ...]
    designs: Dict[str, Design]
    settings: EstimatorSettings
    motion_coding: str = "binary"


@dataclass(frozen=True)
class ExperimentAnalysis:
    methods: Dict[str, MethodAnalysis]
    motion_coding: str
    snr_motion_db: Optional[float] = None
    snr_still_db: Optional[float] = None


# ============================================================================
# CLI
# ============================================================================

REPORT_FORMATS = ("text", "json", "csv")


@dataclass(frozen=True)
class RunConfig:
    """Validated options of one CLI invocation."""

    subcommand: str
    input_path: Optional[str] = None
    output_path: Optional[str] = None
    noise_floor: Optional[float] = None
    roi: Optional[Roi] = None
    window_s: float = 20.0
    overlap: float = 0.5
    smooth_window_s: float = 1.5
    band: Optional[Tuple[float, float]] = None
    seed: int = 0
    report_format: str = "text"
    method: str = "both"
    motion_coding: str = "binary"

    def __post_init__(self):
        if self.report_format not in REPORT_FORMATS:
            raise InvalidParameterError(f"format must be one of {REPORT_FORMATS}")
        if self.method not in METHODS + ("both",):
            raise InvalidParameterError(f"method must be baseline, modified or both, got '{self.method}'")
        if self.motion_coding not in MOTION_CODINGS:
            raise InvalidParameterError(f"motion coding must be one of {MOTION_CODINGS}")
        if self.noise_floor is not None and self.noise_floor < 0:
            raise InvalidParameterError("noise floor must be >= 0")
        if self.window_s <= 0 or self.smooth_window_s <= 0:
            raise InvalidParameterError("window lengths must be > 0")
        if not 0 <= self.overlap < 1:
            raise InvalidParameterError("overlap must be in [0, 1)")
        if self.band is not None:
            lo, hi = self.band
            if not 0 <= lo < hi:
                raise InvalidParameterError(f"band must satisfy 0 <= lo < hi, got {self.band}")

    @property
    def methods(self) -> Tuple[str, ...]:
        return METHODS if self.method == "both" else (self.method,)
