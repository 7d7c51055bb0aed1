"""
JSON mirror of the CSV frame format.
"""

from marshmallow import Schema, fields, validate, validates_schema, ValidationError


class FrameRecordSchema(Schema):
    t = fields.Float(load_default=None, allow_none=True)
    values = fields.List(fields.Float(allow_nan=False), required=True)


class FrameFileSchema(Schema):
    """{fs, rows, cols, frames: [{t, values}]} with values in row-major order"""
    fs = fields.Float(required=True, validate=validate.Range(min=0, min_inclusive=False))
    rows = fields.Int(required=True, validate=validate.Range(min=1))
    cols = fields.Int(required=True, validate=validate.Range(min=1))
    frames = fields.List(fields.Nested(FrameRecordSchema), required=True)

    @validates_schema
    def validate_grid(self, data, **kwargs):
        expected = data['rows'] * data['cols']
        for i, frame in enumerate(data['frames'], 1):
            if len(frame['values']) != expected:
                raise ValidationError(
                    f"frame {i}: expected {expected} values, got {len(frame['values'])}", "frames")
