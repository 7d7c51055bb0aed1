"""
Centralised constants for the PSM bench.
Defaults that are policy (noise floors, search band) are applied by the CLI
and the HTTP routes; the library takes them as explicit arguments.
"""

# ============================================================================
# ACQUISITION
# ============================================================================

# Frames per second of the trial recordings
DEFAULT_FS = 20.0

# Mat geometry: 18 x 18 in at 1 sensel/in^2
MAT_ROWS = 18
MAT_COLS = 18

# Sensel readings below these values are left out of the spatial average (psi)
TRIAL_NOISE_FLOOR_PSI = 0.097
METROLOGY_NOISE_FLOOR_PSI = 0.06

# Loading / off-loading transients discarded before metrology (s)
TRANSIENT_LEAD_S = 2.0
TRANSIENT_TAIL_S = 2.0

# Relative tolerance on frame spacing against 1/fs
TIMESTAMP_RTOL = 1e-6

# ============================================================================
# METROLOGY
# ============================================================================

CREEP_ENDPOINT_WINDOW_S = 5.0
BOOTSTRAP_BLOCK_SIZE = 100
BOOTSTRAP_RESAMPLES = 2000

# ============================================================================
# RESPIRATORY RATE ESTIMATION
# ============================================================================

RR_WINDOW_S = 20.0
RR_OVERLAP = 0.5
SMOOTH_WINDOW_S = 1.5

# Search band used by the CLI (Hz); about 18-150 bpm
CLI_BAND_HZ = (0.3, 2.5)

# SNR band half-width: one DFT bin of a 20 s window (Hz)
SNR_BAND_HALFWIDTH_HZ = 1.0 / RR_WINDOW_S
SNR_HARMONICS = 1
# P_rest below this share of the total power reports +inf
SNR_REST_EPSILON = 1e-12

# ============================================================================
# MIXED-EFFECTS LIMITS OF AGREEMENT
# ============================================================================

LOA_Z = 1.96
V2_LOWER_CLAMP = 1e-10

# Search range for log(V1/V2) and the coarse grid resolution
LOG_RATIO_BOUNDS = (-15.0, 30.0)
LOG_RATIO_GRID_POINTS = 181
OPTIMIZER_MAX_ITER = 500
OPTIMIZER_XATOL = 1e-10

MOTION_CODINGS = ("binary", "type")
FIXED_EFFECTS = ("motion", "mattress", "grunting", "position")

# ============================================================================
# SYNTHETIC BENCH
# ============================================================================

MOTION_TYPES = ("none", "internal", "external")
MATTRESS_TYPES = ("warmer", "crib")
POSITIONS = ("supine", "prone")
SIMULATOR_MODELS = ("simnewb", "premature_anne")
GOLD_RR_LEVELS_BPM = (45.0, 60.0, 75.0)

TRIAL_DURATION_BOUNDS_S = (30.0, 80.0)
DEFAULT_MOTION_POWER_RATIO = 10.0
DEFAULT_SEED = 20240601

# Static load per (model, mattress): mean pressure (psi), footprint (rows, cols),
# creep (%/min) and drift (%) patterned on the mat characterisation runs
LOAD_TABLE = {
    ("premature_anne", "crib"): {"p_avg": 0.136, "footprint": (2, 5), "creep_pct": -0.097, "drift_pct": 0.586},
    ("premature_anne", "warmer"): {"p_avg": 0.099, "footprint": (4, 4), "creep_pct": 0.091, "drift_pct": 0.213},
    ("simnewb", "crib"): {"p_avg": 0.139, "footprint": (5, 6), "creep_pct": 0.341, "drift_pct": 0.163},
    ("simnewb", "warmer"): {"p_avg": 0.101, "footprint": (7, 7), "creep_pct": 0.228, "drift_pct": 0.093},
}

# Thorax carries more of the load than the rest of the footprint
THORAX_LOAD_FACTOR = 1.3
PRONE_LOAD_FACTOR = 1.1
PRONE_BREATHING_FACTOR = 0.8

# Relative breathing modulation of thorax sensels
BREATHING_AMPLITUDE = 0.02
# Grunting: harmonic amplitudes (2f, 3f) relative to the fundamental
GRUNT_HARMONICS = (0.3, 0.12)

SENSEL_NOISE_PSI = 0.0015
OFF_BODY_NOISE_PSI = 0.005

# Drift as AR(1) with this pole; creep as a linear trend
DRIFT_AR_POLE = 0.995

# Internal motion: band-limited bursts (Hz)
INTERNAL_MOTION_BAND_HZ = (0.03, 0.2)
# External motion: raised-cosine transitions (s)
EXTERNAL_TRANSITION_S = (3.0, 6.0)
MOTION_EDGE_GUARD_S = 3.0
