"""
Synthetic bench: PSM frame records of a breathing neonatal simulator under
motion, mattress, grunting and position effects, and the end-to-end experiment
that turns them into paired differences for the mixed-model analysis.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import signal

from app.models.models import (
    METHODS,
    Design,
    EstimatorSettings,
    ExperimentAnalysis,
    ExperimentResult,
    FrameSequence,
    MethodAnalysis,
    Roi,
    SyntheticTrial,
    TrialConfig,
    TrialFailure,
    TrialResult,
)
from app.services.frames import average_series
from app.services.lmm import analyze_method
from app.services.preprocess import remove_dc, snr_db
from app.services.spectral import estimate_rr, estimate_rr_modified
from app.utils.constants import (
    BREATHING_AMPLITUDE,
    DEFAULT_SEED,
    DRIFT_AR_POLE,
    EXTERNAL_TRANSITION_S,
    GRUNT_HARMONICS,
    INTERNAL_MOTION_BAND_HZ,
    LOAD_TABLE,
    MAT_COLS,
    MAT_ROWS,
    MOTION_CODINGS,
    MOTION_EDGE_GUARD_S,
    OFF_BODY_NOISE_PSI,
    PRONE_BREATHING_FACTOR,
    PRONE_LOAD_FACTOR,
    RR_WINDOW_S,
    SENSEL_NOISE_PSI,
    SIMULATOR_MODELS,
    MATTRESS_TYPES,
    SNR_BAND_HALFWIDTH_HZ,
    SNR_HARMONICS,
    THORAX_LOAD_FACTOR,
    TRIAL_NOISE_FLOOR_PSI,
)
from app.utils.exceptions import (
    EmptyInputError,
    IdentifiabilityError,
    InvalidParameterError,
    PsmError,
)
from app.utils.logger import get_logger

logger = get_logger(__name__)

MAT_SHAPE = (MAT_ROWS, MAT_COLS)


# ============================================================================
# SPATIAL LAYOUT
# ============================================================================

def _load_entry(model: str, mattress: str) -> dict:
    try:
        return LOAD_TABLE[(model, mattress)]
    except KeyError:
        raise InvalidParameterError(
            f"unknown simulator/mattress pair ({model}, {mattress}); models {SIMULATOR_MODELS}, "
            f"mattresses {MATTRESS_TYPES}")


def footprint_roi(model: str, mattress: str, shape: Tuple[int, int] = MAT_SHAPE) -> Roi:
    """Contact footprint centred on the mat."""
    h, w = _load_entry(model, mattress)["footprint"]
    r0 = (shape[0] - h) // 2
    c0 = (shape[1] - w) // 2
    return Roi(r0, r0 + h - 1, c0, c0 + w - 1)


def thorax_roi(model: str, mattress: str, shape: Tuple[int, int] = MAT_SHAPE) -> Roi:
    """Middle rows of the footprint (at least two) across its full width."""
    foot = footprint_roi(model, mattress, shape)
    h = foot.r1 - foot.r0 + 1
    rows = min(h, max(2, h // 2))
    r0 = foot.r0 + (h - rows) // 2
    return Roi(r0, r0 + rows - 1, foot.c0, foot.c1)


def _base_load(model: str, mattress: str, position: str) -> Tuple[np.ndarray, np.ndarray, Roi]:
    """Static sensel load (psi), the footprint mask and the thorax ROI."""
    entry = _load_entry(model, mattress)
    foot = footprint_roi(model, mattress)
    thorax = thorax_roi(model, mattress)

    footprint = np.zeros(MAT_SHAPE, dtype=bool)
    footprint[foot.slices] = True
    chest = np.zeros(MAT_SHAPE, dtype=bool)
    chest[thorax.slices] = True

    n_foot = int(footprint.sum())
    n_chest = int(chest.sum())
    if n_chest == n_foot:
        chest_factor, rest_factor = 1.0, 0.0
    else:
        chest_factor = THORAX_LOAD_FACTOR
        # footprint mean stays at p_avg
        rest_factor = (n_foot - n_chest * chest_factor) / (n_foot - n_chest)

    load = np.zeros(MAT_SHAPE)
    load[footprint] = entry["p_avg"] * rest_factor
    load[chest] = entry["p_avg"] * chest_factor
    if position == "prone":
        load *= PRONE_LOAD_FACTOR
    return load, footprint, thorax


# ============================================================================
# TEMPORAL COMPONENTS (relative modulation of the static load)
# ============================================================================

def snapped_breathing_hz(config: TrialConfig) -> float:
    """Breathing frequency, moved onto the 20 s window bin grid unless snapping is off."""
    hz = config.gold_rr_bpm / 60.0
    if not config.snap_to_bin:
        return hz
    bin_hz = 1.0 / RR_WINDOW_S
    return max(1, round(hz / bin_hz)) * bin_hz


def _breathing(t: np.ndarray, hz: float, grunting: bool, rng: np.random.Generator) -> np.ndarray:
    phase = 2.0 * math.pi * hz * t + rng.uniform(0.0, 2.0 * math.pi)
    wave = np.sin(phase)
    if grunting:
        # asymmetric half cycles, same fundamental
        for k, amplitude in enumerate(GRUNT_HARMONICS, start=2):
            wave = wave + amplitude * np.sin(k * phase)
    return wave


def _internal_motion(n: int, fs: float, rng: np.random.Generator) -> np.ndarray:
    """Band-limited low-frequency noise gated by long bursts with smooth onsets."""
    sos = signal.butter(3, INTERNAL_MOTION_BAND_HZ, btype='bandpass', fs=fs, output='sos')
    padlen = min(3 * (2 * len(sos) + 1), n - 1)
    noise = signal.sosfiltfilt(sos, rng.standard_normal(n), padlen=padlen)

    gate = np.zeros(n)
    cursor = rng.uniform(0.0, 3.0)
    duration = n / fs
    while cursor < duration:
        on = rng.uniform(8.0, 20.0)
        gate[int(cursor * fs):int(min(cursor + on, duration) * fs)] = 1.0
        cursor += on + rng.uniform(2.0, 5.0)
    ramp = signal.windows.hann(max(3, int(1.5 * fs)))
    envelope = np.convolve(gate, ramp / ramp.sum(), mode='same')
    if not envelope.any():
        envelope = np.ones(n)
    return noise * envelope


def _raised_cosine(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 - np.cos(math.pi * np.clip(x, 0.0, 1.0)))


def _external_motion(n: int, fs: float, rng: np.random.Generator) -> np.ndarray:
    """Large slow baseline excursions: rise, hold, return, kept clear of the record edges."""
    t = np.arange(n) / fs
    duration = n / fs
    usable = max(duration - 2 * MOTION_EDGE_GUARD_S, 0.0)
    count = max(1, int(round(duration / 25.0)))
    slot = usable / count
    motion = np.zeros(n)
    for k in range(count):
        rise = rng.uniform(*EXTERNAL_TRANSITION_S)
        fall = rng.uniform(*EXTERNAL_TRANSITION_S)
        hold = rng.uniform(4.0, 10.0)
        span = rise + hold + fall
        if span > slot:
            hold = max(0.0, slot - rise - fall)
            span = rise + hold + fall
            if span > slot and span > 0:
                scale = slot / span
                rise, hold, fall = rise * scale, hold * scale, fall * scale
                span = slot
        start = MOTION_EDGE_GUARD_S + k * slot + rng.uniform(0.0, max(slot - span, 0.0))
        level = rng.choice([-1.0, 1.0]) * rng.uniform(0.6, 1.0)
        up = _raised_cosine((t - start) / rise) if rise > 0 else (t >= start).astype(float)
        down_start = start + rise + hold
        down = _raised_cosine((t - down_start) / fall) if fall > 0 else (t >= down_start).astype(float)
        motion += level * (up - down)
    return motion


def _scaled_to_power(component: np.ndarray, reference: np.ndarray, ratio: float) -> np.ndarray:
    """Scale `component` so its mean square is `ratio` times that of `reference`."""
    power = float(np.mean(component ** 2))
    if power == 0 or ratio == 0:
        return np.zeros_like(component)
    return component * math.sqrt(ratio * float(np.mean(reference ** 2)) / power)


def _drift(n: int, drift_pct: float, rng: np.random.Generator) -> np.ndarray:
    """Stationary AR(1) with unit variance, scaled to drift_pct percent."""
    a = DRIFT_AR_POLE
    innovations = rng.standard_normal(n)
    zi = np.array([a * rng.standard_normal()])
    ar, _ = signal.lfilter([math.sqrt(1.0 - a * a)], [1.0, -a], innovations, zi=zi)
    return ar * drift_pct / 100.0


def _creep(t: np.ndarray, creep_pct: float) -> np.ndarray:
    # linear, centred on the record midpoint
    return creep_pct / 100.0 * (t - t[-1] / 2.0) / 60.0


def _sensel_noise(stack: np.ndarray, footprint: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    noise = rng.normal(0.0, SENSEL_NOISE_PSI, stack.shape)
    off_body = np.abs(rng.normal(0.0, OFF_BODY_NOISE_PSI, stack.shape))
    stack = stack + np.where(footprint, noise, off_body)
    return np.clip(stack, 0.0, None)


def _n_frames(duration_s: float, fs: float) -> int:
    return int(math.floor(duration_s * fs + 0.5))


# ============================================================================
# GENERATORS
# ============================================================================

def synth_trial(config: TrialConfig) -> SyntheticTrial:
    """
    Frame record of one bench trial, deterministic per config.seed.

    Thorax sensels carry the breathing modulation (harmonic-enriched when
    grunting); the whole footprint carries motion, creep and drift; every
    sensel gets white noise.
    """
    fs = config.fs
    n = _n_frames(config.duration_s, fs)
    t = np.arange(n) / fs
    entry = _load_entry(config.model, config.mattress)
    load, footprint, thorax = _base_load(config.model, config.mattress, config.position)
    phase_rng, motion_rng, drift_rng, noise_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(config.seed).spawn(4))

    breathing_hz = snapped_breathing_hz(config)
    if not 0 < breathing_hz < fs / 2:
        raise InvalidParameterError(f"breathing frequency {breathing_hz} Hz is outside (0, {fs / 2}) Hz")
    amplitude = BREATHING_AMPLITUDE * (PRONE_BREATHING_FACTOR if config.position == "prone" else 1.0)
    breathing = amplitude * _breathing(t, breathing_hz, config.grunting, phase_rng)

    if config.motion == "internal":
        motion = _scaled_to_power(_internal_motion(n, fs, motion_rng), breathing, config.motion_power_ratio)
    elif config.motion == "external":
        motion = _scaled_to_power(_external_motion(n, fs, motion_rng), breathing, config.motion_power_ratio)
    else:
        motion = np.zeros(n)

    body = motion + _creep(t, entry["creep_pct"]) + _drift(n, entry["drift_pct"], drift_rng)
    chest = np.zeros(MAT_SHAPE)
    chest[thorax.slices] = 1.0

    modulation = 1.0 + body[:, None, None] + breathing[:, None, None] * chest[None, :, :]
    stack = _sensel_noise(load[None, :, :] * modulation, footprint, noise_rng)

    frames = FrameSequence.from_array(stack, fs)
    gold = 60.0 * breathing_hz
    logger.info(
        f"Synthesised {config.duration_s:g} s trial (seed {config.seed}, motion={config.motion}, "
        f"{config.mattress}, {config.position}, grunting={config.grunting}) at {gold:g} bpm")
    return SyntheticTrial(frames, gold, breathing_hz, thorax, config)


def synth_static_load(model: str, mattress: str, duration_s: float, fs: float = 20.0,
                      seed: int = 0) -> FrameSequence:
    """Motion-free, non-breathing load on the mat: creep, drift and sensel noise only."""
    if duration_s <= 0:
        raise InvalidParameterError(f"duration must be > 0 s, got {duration_s}")
    if seed < 0:
        raise InvalidParameterError(f"seed must be >= 0, got {seed}")
    entry = _load_entry(model, mattress)
    n = _n_frames(duration_s, fs)
    if n < 2:
        raise InvalidParameterError("static load record must contain at least two frames")
    t = np.arange(n) / fs
    load, footprint, _ = _base_load(model, mattress, "supine")
    drift_rng, noise_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    body = _creep(t, entry["creep_pct"]) + _drift(n, entry["drift_pct"], drift_rng)
    stack = _sensel_noise(load[None, :, :] * (1.0 + body[:, None, None]), footprint, noise_rng)
    return FrameSequence.from_array(stack, fs)


def default_manifest(seed: int = DEFAULT_SEED) -> List[TrialConfig]:
    """
    The 28-trial bench protocol.

    18 warmer / 10 crib, 19 normal / 9 grunting, 16 supine / 12 prone,
    6 x 45, 15 x 60 and 7 x 75 bpm, 8 internal and 8 external motion trials;
    durations cycle through 30-80 s.
    """
    crib = {1, 4, 7, 10, 13, 16, 19, 22, 25, 27}
    grunting = {2, 5, 8, 11, 14, 17, 20, 23, 26}
    prone = {0, 2, 3, 6, 9, 12, 13, 15, 18, 21, 24, 27}
    slow = {0, 5, 10, 15, 20, 25}
    fast = {3, 8, 13, 18, 23, 26, 27}
    internal = {1, 6, 7, 11, 14, 16, 21, 24}
    external = {3, 4, 8, 9, 13, 18, 22, 23}

    manifest = []
    for i in range(28):
        manifest.append(TrialConfig(
            gold_rr_bpm=45.0 if i in slow else 75.0 if i in fast else 60.0,
            duration_s=30.0 + 10.0 * (i % 6),
            motion="internal" if i in internal else "external" if i in external else "none",
            mattress="crib" if i in crib else "warmer",
            grunting=i in grunting,
            position="prone" if i in prone else "supine",
            seed=seed + i,
            model=SIMULATOR_MODELS[i % 2],
        ))
    return manifest


# ============================================================================
# EXPERIMENT
# ============================================================================

def _run_trial(index: int, config: TrialConfig, settings: EstimatorSettings) -> TrialResult:
    trial = synth_trial(config)
    series = average_series(trial.frames, trial.thorax_roi, settings.noise_floor)

    try:
        snr = snr_db(remove_dc(series), trial.breathing_hz, SNR_HARMONICS, SNR_BAND_HALFWIDTH_HZ)
    except PsmError as e:
        logger.warning(f"⚠️ Trial {index}: SNR unavailable ({e})")
        snr = None

    outcome: Dict[str, dict] = {}
    for method in METHODS:
        try:
            if method == "baseline":
                estimate = estimate_rr(series, settings.window_s, settings.overlap, settings.band)
            else:
                estimate = estimate_rr_modified(
                    series, settings.smooth_window_s, settings.window_s, settings.overlap, settings.band)
            outcome[method] = {'rr': estimate.rr_bpm, 'peaks': estimate.per_window_peaks, 'error': None}
        except PsmError as e:
            outcome[method] = {'rr': None, 'peaks': (), 'error': f"{type(e).__name__}: {e}"}

    return TrialResult(
        index=index,
        config=config,
        gold_rr_bpm=trial.gold_rr_bpm,
        rr_baseline=outcome['baseline']['rr'],
        rr_modified=outcome['modified']['rr'],
        snr_db=snr,
        baseline_peaks=outcome['baseline']['peaks'],
        modified_peaks=outcome['modified']['peaks'],
        baseline_error=outcome['baseline']['error'],
        modified_error=outcome['modified']['error'],
    )


def build_design(results: Sequence[TrialResult], method: str, motion_coding: str = "binary") -> Design:
    """
    Paired differences of one estimator against the fixed effects, grouped by gold RR.

    Columns: intercept, motion (one 0/1 column, or internal/external with the
    "type" coding), mattress_crib, grunting, position_prone. Effect columns that
    do not vary across the trials are dropped.
    """
    if method not in METHODS:
        raise InvalidParameterError(f"method must be one of {METHODS}, got '{method}'")
    if motion_coding not in MOTION_CODINGS:
        raise InvalidParameterError(f"motion coding must be one of {MOTION_CODINGS}, got '{motion_coding}'")
    rows = [r for r in results if r.diff(method) is not None]
    if not rows:
        raise EmptyInputError(f"no trial has a {method} estimate")

    columns: List[Tuple[str, str, np.ndarray]] = []
    if motion_coding == "binary":
        columns.append(("motion", "motion", np.array([r.config.has_motion for r in rows], dtype=float)))
    else:
        for kind in ("internal", "external"):
            columns.append(("motion", f"motion_{kind}",
                            np.array([r.config.motion == kind for r in rows], dtype=float)))
    columns.append(("mattress", "mattress_crib", np.array([r.config.mattress == "crib" for r in rows], dtype=float)))
    columns.append(("grunting", "grunting", np.array([r.config.grunting for r in rows], dtype=float)))
    columns.append(("position", "position_prone", np.array([r.config.position == "prone" for r in rows], dtype=float)))

    names = ["intercept"]
    data = [np.ones(len(rows))]
    effects: Dict[str, Tuple[int, ...]] = {}
    for effect, name, values in columns:
        if np.ptp(values) == 0:
            logger.warning(f"⚠️ {method}: column '{name}' is constant across trials and is left out")
            continue
        effects[effect] = effects.get(effect, ()) + (len(names),)
        names.append(name)
        data.append(values)

    return Design(
        y=np.array([r.diff(method) for r in rows]),
        X=np.column_stack(data),
        groups=np.array([r.gold_rr_bpm for r in rows]),
        column_names=tuple(names),
        effects=effects,
    )


def run_experiment(manifest: Sequence[TrialConfig], settings: Optional[EstimatorSettings] = None,
                   motion_coding: str = "binary", workers: int = 1) -> ExperimentResult:
    """
    Run both estimators on every trial and assemble one Design per method.

    Estimator errors are recorded per trial as failures; results keep manifest order.
    """
    manifest = list(manifest)
    if not manifest:
        raise EmptyInputError("manifest is empty")
    if motion_coding not in MOTION_CODINGS:
        raise InvalidParameterError(f"motion coding must be one of {MOTION_CODINGS}, got '{motion_coding}'")
    levels = {60.0 * snapped_breathing_hz(c) for c in manifest}
    if len(levels) < 2:
        raise IdentifiabilityError(f"manifest needs at least 2 gold RR levels, got {sorted(levels)}")
    settings = settings or EstimatorSettings(noise_floor=TRIAL_NOISE_FLOOR_PSI)

    logger.info(f"Running {len(manifest)} trials with {workers} worker(s)")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            results = tuple(executor.map(lambda item: _run_trial(item[0], item[1], settings), enumerate(manifest)))
    else:
        results = tuple(_run_trial(i, config, settings) for i, config in enumerate(manifest))

    failures = []
    for result in results:
        for method in METHODS:
            error = result.baseline_error if method == "baseline" else result.modified_error
            if error is not None:
                logger.warning(f"⚠️ Trial {result.index} ({method}) failed: {error}")
                failures.append(TrialFailure(result.index, method, error))

    designs = {}
    for method in METHODS:
        try:
            designs[method] = build_design(results, method, motion_coding)
        except PsmError as e:
            logger.warning(f"⚠️ No {method} design: {e}")

    logger.info(f"✅ Experiment finished: {len(results)} trials, {len(failures)} estimator failures")
    return ExperimentResult(
        results=results,
        failures=tuple(failures),
        designs=designs,
        settings=settings,
        motion_coding=motion_coding,
    )


def _mean_finite(values: List[Optional[float]]) -> Optional[float]:
    finite = [v for v in values if v is not None and math.isfinite(v)]
    return float(np.mean(finite)) if finite else None


def analyze_results(results: Sequence[TrialResult], motion_coding: str = "binary",
                    methods: Sequence[str] = METHODS, workers: int = 1) -> ExperimentAnalysis:
    """Per-method LoA analysis, Pearson r against gold and mean SNR of motion vs still trials."""
    analyses: Dict[str, MethodAnalysis] = {}
    for method in methods:
        design = build_design(results, method, motion_coding)
        rows = [r for r in results if r.estimate(method) is not None]
        analyses[method] = analyze_method(
            design,
            method,
            estimates=[r.estimate(method) for r in rows],
            gold=[r.gold_rr_bpm for r in rows],
            workers=workers,
        )
    return ExperimentAnalysis(
        methods=analyses,
        motion_coding=motion_coding,
        snr_motion_db=_mean_finite([r.snr_db for r in results if r.config.has_motion]),
        snr_still_db=_mean_finite([r.snr_db for r in results if not r.config.has_motion]),
    )


def analyze_experiment(experiment: ExperimentResult, motion_coding: Optional[str] = None,
                       workers: int = 1) -> ExperimentAnalysis:
    return analyze_results(
        experiment.results,
        motion_coding=motion_coding or experiment.motion_coding,
        methods=[m for m in METHODS if m in experiment.designs],
        workers=workers,
    )
