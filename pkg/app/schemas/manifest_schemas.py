"""
Validation schemas for trial manifests.
A manifest is a JSON array of trial configurations.
"""

from marshmallow import Schema, fields, validate, post_load, ValidationError

from app.models.models import TrialConfig
from app.utils.constants import (
    DEFAULT_FS,
    DEFAULT_MOTION_POWER_RATIO,
    MATTRESS_TYPES,
    MOTION_TYPES,
    POSITIONS,
    SIMULATOR_MODELS,
)
from app.utils.exceptions import InvalidParameterError


class TrialConfigSchema(Schema):
    """Schema for one bench trial"""
    gold_rr_bpm = fields.Float(
        required=True,
        validate=validate.Range(min=0, min_inclusive=False),
        metadata={"description": "Simulator breathing rate (bpm)"}
    )
    duration_s = fields.Float(
        required=True,
        validate=validate.Range(min=0, min_inclusive=False),
        metadata={"description": "Record length in seconds (30-80 unless allow_any_duration)"}
    )
    fs = fields.Float(
        load_default=DEFAULT_FS,
        validate=validate.Range(min=0, min_inclusive=False),
        metadata={"description": "Frames per second"}
    )
    motion = fields.Str(load_default="none", validate=validate.OneOf(MOTION_TYPES))
    mattress = fields.Str(load_default="warmer", validate=validate.OneOf(MATTRESS_TYPES))
    grunting = fields.Bool(load_default=False)
    position = fields.Str(load_default="supine", validate=validate.OneOf(POSITIONS))
    seed = fields.Int(load_default=0, validate=validate.Range(min=0))
    model = fields.Str(load_default="simnewb", validate=validate.OneOf(SIMULATOR_MODELS))
    motion_power_ratio = fields.Float(
        load_default=DEFAULT_MOTION_POWER_RATIO,
        validate=validate.Range(min=0),
        metadata={"description": "Motion power as a multiple of breathing power"}
    )
    snap_to_bin = fields.Bool(load_default=True)
    allow_any_duration = fields.Bool(load_default=False)

    @post_load
    def make_config(self, data, **kwargs) -> TrialConfig:
        try:
            return TrialConfig(**data)
        except InvalidParameterError as e:
            raise ValidationError(str(e))
