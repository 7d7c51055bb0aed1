"""
Frame files: CSV and its JSON mirror.

CSV layout:
    fs=<float>,rows=<int>,cols=<int>
    t=<float>,<v00>,<v01>,...      one line per frame, row-major

The `t=` token is optional; missing timestamps are (frame - 1) / fs.
Blank lines and lines starting with '#' are ignored.
"""

import json
import math
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from marshmallow import ValidationError

from app.interface.files import BaseFileInterface, PathLike
from app.models.models import FrameSequence
from app.schemas.frame_schemas import FrameFileSchema
from app.utils.constants import TIMESTAMP_RTOL
from app.utils.exceptions import EmptyInputError, FrameParseError
from app.utils.logger import get_logger

logger = get_logger(__name__)


def _format_value(value: float) -> str:
    return format(float(value), '.6g')


class FrameFileInterface(BaseFileInterface):
    """Read and write FrameSequence files; the format follows the file suffix."""

    @staticmethod
    def load(path: PathLike) -> FrameSequence:
        path = Path(path)
        text = BaseFileInterface.read_text(path)
        if not text.strip():
            raise EmptyInputError(f"{path} is empty")
        if path.suffix.lower() == '.json':
            seq = FrameFileInterface.parse_json(text)
        else:
            seq = FrameFileInterface.parse_csv(text)
        logger.info(f"Loaded {seq.n_frames} frames of {seq.shape} at {seq.fs:g} fps from {path}")
        return seq

    @staticmethod
    def save(seq: FrameSequence, path: PathLike) -> Path:
        path = Path(path)
        if seq.n_frames == 0:
            raise EmptyInputError("refusing to write an empty frame sequence")
        if path.suffix.lower() == '.json':
            text = FrameFileInterface.to_json(seq)
        else:
            text = FrameFileInterface.to_csv(seq)
        return BaseFileInterface.write_text(path, text)

    # ------------------------------------------------------------------ CSV

    @staticmethod
    def _parse_header(line: str, lineno: int) -> Tuple[float, int, int]:
        fields = {}
        for token in line.split(','):
            key, sep, value = token.strip().partition('=')
            if not sep:
                raise FrameParseError(f"header token '{token.strip()}' is not key=value", line=lineno)
            fields[key.strip()] = value.strip()
        missing = [k for k in ('fs', 'rows', 'cols') if k not in fields]
        if missing:
            raise FrameParseError(f"header is missing {', '.join(missing)}", line=lineno)
        try:
            fs = float(fields['fs'])
            rows = int(fields['rows'])
            cols = int(fields['cols'])
        except ValueError as e:
            raise FrameParseError(f"bad header value ({e})", line=lineno)
        if not math.isfinite(fs) or fs <= 0:
            raise FrameParseError(f"fs must be > 0, got {fields['fs']}", line=lineno)
        if rows < 1 or cols < 1:
            raise FrameParseError(f"grid must be at least 1x1, got {rows}x{cols}", line=lineno)
        return fs, rows, cols

    @staticmethod
    def parse_csv(text: str) -> FrameSequence:
        lines = [
            (lineno, line.strip()) for lineno, line in enumerate(text.splitlines(), 1)
            if line.strip() and not line.strip().startswith('#')
        ]
        if not lines:
            raise EmptyInputError("frame file has no content")
        fs, rows, cols = FrameFileInterface._parse_header(lines[0][1], lines[0][0])
        expected = rows * cols

        grids: List[np.ndarray] = []
        stamps: List[Optional[float]] = []
        line_of: List[int] = []
        for frame, (lineno, line) in enumerate(lines[1:], 1):
            tokens = [tok.strip() for tok in line.split(',')]
            stamp = None
            if tokens[0].startswith('t='):
                try:
                    stamp = float(tokens[0][2:])
                except ValueError:
                    raise FrameParseError(f"bad timestamp '{tokens[0]}'", line=lineno, frame=frame)
                if not math.isfinite(stamp):
                    raise FrameParseError(f"timestamp must be finite, got {tokens[0]}", line=lineno, frame=frame)
                tokens = tokens[1:]
            if len(tokens) != expected:
                raise FrameParseError(
                    f"expected {expected} values for a {rows}x{cols} grid, got {len(tokens)}",
                    line=lineno, frame=frame)
            try:
                values = np.array([float(tok) for tok in tokens])
            except ValueError as e:
                raise FrameParseError(f"bad value ({e})", line=lineno, frame=frame)
            if not np.all(np.isfinite(values)) or np.any(values < 0):
                raise FrameParseError("pressures must be finite and >= 0", line=lineno, frame=frame)
            grids.append(values.reshape(rows, cols))
            stamps.append(stamp)
            line_of.append(lineno)

        if not grids:
            raise EmptyInputError("frame file has a header but no frames")
        timestamps = FrameFileInterface._resolve_timestamps(stamps, fs, line_of)
        return FrameSequence.from_array(np.stack(grids), fs, timestamps)

    @staticmethod
    def _resolve_timestamps(stamps: List[Optional[float]], fs: float,
                            line_of: Optional[List[int]] = None) -> np.ndarray:
        """Fill missing timestamps from fs and check the explicit ones against it."""
        period = 1.0 / fs
        resolved = np.array([(i * period if s is None else s) for i, s in enumerate(stamps)])
        for i in range(1, resolved.size):
            step = resolved[i] - resolved[i - 1]
            lineno = line_of[i] if line_of else None
            if step <= 0:
                raise FrameParseError(
                    f"non-monotone timestamp {resolved[i]!r} after {resolved[i - 1]!r}", line=lineno, frame=i + 1)
            if abs(step - period) > TIMESTAMP_RTOL * period:
                raise FrameParseError(
                    f"timestamp step {step!r} s does not match 1/fs = {period!r} s", line=lineno, frame=i + 1)
        return resolved

    @staticmethod
    def to_csv(seq: FrameSequence) -> str:
        rows, cols = seq.shape
        out = [f"fs={seq.fs!r},rows={rows},cols={cols}"]
        for frame in seq.frames:
            values = ','.join(_format_value(v) for v in frame.grid.ravel())
            out.append(f"t={frame.timestamp!r},{values}")
        return '\n'.join(out) + '\n'

    # ----------------------------------------------------------------- JSON

    @staticmethod
    def parse_json(text: str) -> FrameSequence:
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as e:
            raise FrameParseError(f"invalid JSON ({e.msg})", line=e.lineno)
        try:
            data = FrameFileSchema().load(raw)
        except ValidationError as e:
            raise FrameParseError(f"invalid frame file: {e.messages}")
        if not data['frames']:
            raise EmptyInputError("frame file has no frames")
        rows, cols = data['rows'], data['cols']
        grid = np.array([f['values'] for f in data['frames']], dtype=float).reshape(-1, rows, cols)
        for i, values in enumerate(grid, 1):
            if np.any(values < 0):
                raise FrameParseError("pressures must be >= 0", frame=i)
        timestamps = FrameFileInterface._resolve_timestamps([f['t'] for f in data['frames']], data['fs'])
        return FrameSequence.from_array(grid, data['fs'], timestamps)

    @staticmethod
    def to_json(seq: FrameSequence) -> str:
        rows, cols = seq.shape
        payload = {
            'fs': seq.fs,
            'rows': rows,
            'cols': cols,
            'frames': [
                {'t': frame.timestamp, 'values': [float(_format_value(v)) for v in frame.grid.ravel()]}
                for frame in seq.frames
            ],
        }
        return json.dumps(FrameFileSchema().dump(payload))


def load_frames(path: PathLike) -> FrameSequence:
    """Parse a CSV or JSON frame file."""
    return FrameFileInterface.load(path)


def save_frames(seq: FrameSequence, path: PathLike) -> Path:
    """Write a frame file; values at 6 significant digits, timestamps in full."""
    return FrameFileInterface.save(seq, path)
