"""
Serialization schemas for reports and trial results.
"""

from marshmallow import Schema, fields, post_load, EXCLUDE

from app.models.models import TrialResult
from app.schemas.manifest_schemas import TrialConfigSchema


class MetrologyReportSchema(Schema):
    """Mat characterisation: mean pressure, contact area, creep, drift, std of drift"""
    p_avg = fields.Float(metadata={"description": "Mean spatially averaged pressure (psi)"})
    contact_area_pct = fields.Float(allow_none=True)
    creep_pct = fields.Float(metadata={"description": "One-minute creep (%)"})
    drift_pct = fields.Float(metadata={"description": "Drift (%)"})
    drift_std_pct = fields.Float(metadata={"description": "Bootstrap std of drift (%)"})
    n_samples = fields.Int()
    fs = fields.Float()
    noise_floor = fields.Float(allow_none=True)
    block_size = fields.Int(allow_none=True)
    n_boot = fields.Int(allow_none=True)


class RrEstimateSchema(Schema):
    method = fields.Str()
    rr_bpm = fields.Float()
    per_window_peaks = fields.List(fields.Float(), metadata={"description": "Peak frequency per window (Hz)"})
    window_starts_s = fields.List(fields.Float())
    n_windows = fields.Int(dump_only=True)
    window_s = fields.Float()
    overlap_fraction = fields.Float()
    band = fields.List(fields.Float(), allow_none=True)


class LoAReportSchema(Schema):
    method = fields.Str()
    bias = fields.Float()
    sd = fields.Float()
    lower = fields.Float()
    upper = fields.Float()


class LrtResultSchema(Schema):
    chi2 = fields.Float()
    df = fields.Int()
    p = fields.Float()


class MixedFitSchema(Schema):
    coefficients = fields.Method("get_coefficients")
    v1 = fields.Float()
    v2 = fields.Float()
    loglik = fields.Float()
    n_params = fields.Int()
    n_obs = fields.Int()
    n_groups = fields.Int()
    random_effects = fields.Method("get_random_effects")
    converged = fields.Bool()
    boundary = fields.Bool()
    identifiable = fields.Bool()

    def get_coefficients(self, fit):
        return fit.coefficients()

    def get_random_effects(self, fit):
        return {str(k): float(v) for k, v in fit.random_effects.items()}


class EffectExclusionSchema(Schema):
    effect = fields.Str()
    loa = fields.Nested(LoAReportSchema)
    lrt = fields.Nested(LrtResultSchema)


class MethodAnalysisSchema(Schema):
    method = fields.Str()
    n_trials = fields.Int()
    loa = fields.Nested(LoAReportSchema)
    pearson_r = fields.Float(allow_none=True)
    exclusions = fields.List(fields.Nested(EffectExclusionSchema))
    full_fit = fields.Nested(MixedFitSchema)
    bias_fit = fields.Nested(MixedFitSchema)


class ExperimentAnalysisSchema(Schema):
    motion_coding = fields.Str()
    snr_motion_db = fields.Float(allow_none=True, allow_nan=True)
    snr_still_db = fields.Float(allow_none=True, allow_nan=True)
    methods = fields.Dict(keys=fields.Str(), values=fields.Nested(MethodAnalysisSchema))


class TrialResultSchema(Schema):
    """One trial: gold RR, both estimates and their paired differences"""

    class Meta:
        unknown = EXCLUDE

    index = fields.Int(required=True)
    config = fields.Nested(TrialConfigSchema, required=True)
    gold_rr_bpm = fields.Float(required=True)
    rr_baseline = fields.Float(allow_none=True, load_default=None)
    rr_modified = fields.Float(allow_none=True, load_default=None)
    diff_baseline = fields.Float(dump_only=True, allow_none=True)
    diff_modified = fields.Float(dump_only=True, allow_none=True)
    snr_db = fields.Float(allow_none=True, allow_nan=True, load_default=None)
    baseline_peaks = fields.List(fields.Float(), load_default=list)
    modified_peaks = fields.List(fields.Float(), load_default=list)
    baseline_error = fields.Str(allow_none=True, load_default=None)
    modified_error = fields.Str(allow_none=True, load_default=None)

    @post_load
    def make_result(self, data, **kwargs) -> TrialResult:
        data['baseline_peaks'] = tuple(data['baseline_peaks'])
        data['modified_peaks'] = tuple(data['modified_peaks'])
        return TrialResult(**data)

