"""
Validation schemas for HTTP request bodies.
"""

from marshmallow import Schema, fields, validate, validates_schema, ValidationError

from app.schemas.manifest_schemas import TrialConfigSchema
from app.schemas.report_schemas import TrialResultSchema
from app.utils.constants import (
    BOOTSTRAP_BLOCK_SIZE,
    BOOTSTRAP_RESAMPLES,
    CREEP_ENDPOINT_WINDOW_S,
    DEFAULT_SEED,
    MOTION_CODINGS,
    RR_OVERLAP,
    RR_WINDOW_S,
    SMOOTH_WINDOW_S,
)

_positive = validate.Range(min=0, min_inclusive=False)


class SeriesRequestSchema(Schema):
    """A spatially averaged pressure series"""
    fs = fields.Float(required=True, validate=_positive, metadata={"description": "Samples per second"})
    values = fields.List(
        fields.Float(allow_nan=False),
        required=True,
        validate=validate.Length(min=1),
        metadata={"description": "Pressure samples (psi)"}
    )


class MetrologyRequestSchema(SeriesRequestSchema):
    endpoint_window_s = fields.Float(load_default=CREEP_ENDPOINT_WINDOW_S, validate=_positive)
    block_size = fields.Int(load_default=BOOTSTRAP_BLOCK_SIZE, validate=validate.Range(min=1))
    n_boot = fields.Int(load_default=BOOTSTRAP_RESAMPLES, validate=validate.Range(min=2, max=100000))
    seed = fields.Int(load_default=0, validate=validate.Range(min=0))


class EstimateRequestSchema(SeriesRequestSchema):
    method = fields.Str(load_default="both", validate=validate.OneOf(["baseline", "modified", "both"]))
    window_s = fields.Float(load_default=RR_WINDOW_S, validate=_positive)
    overlap = fields.Float(load_default=RR_OVERLAP, validate=validate.Range(min=0, max=1, max_inclusive=False))
    smooth_window_s = fields.Float(load_default=SMOOTH_WINDOW_S, validate=_positive)
    band = fields.List(fields.Float(), load_default=None, allow_none=True, validate=validate.Length(equal=2))

    @validates_schema
    def validate_band(self, data, **kwargs):
        band = data.get('band')
        if band is not None and not 0 <= band[0] < band[1]:
            raise ValidationError("band must satisfy 0 <= lo < hi", "band")


class LoaRequestSchema(Schema):
    results = fields.List(fields.Nested(TrialResultSchema), required=True, validate=validate.Length(min=1))
    motion_coding = fields.Str(load_default="binary", validate=validate.OneOf(MOTION_CODINGS))


class ExperimentRequestSchema(Schema):
    seed = fields.Int(load_default=DEFAULT_SEED, validate=validate.Range(min=0))
    manifest = fields.List(fields.Nested(TrialConfigSchema), load_default=None, allow_none=True)
    motion_coding = fields.Str(load_default="binary", validate=validate.OneOf(MOTION_CODINGS))
