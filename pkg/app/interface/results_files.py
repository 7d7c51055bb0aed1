"""
Manifests, trial results, design matrices and tidy CSV exports.
"""

import io
import json
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np
import pandas as pd
from marshmallow import ValidationError

from app.interface.files import BaseFileInterface, PathLike
from app.models.models import (
    Design,
    ExperimentResult,
    PressureSeries,
    RrEstimate,
    Spectrum,
    TrialConfig,
    TrialResult,
)
from app.schemas.manifest_schemas import TrialConfigSchema
from app.schemas.report_schemas import TrialResultSchema
from app.utils.exceptions import EmptyInputError, ManifestError
from app.utils.logger import get_logger

logger = get_logger(__name__)

CONFIG_FIELDS = tuple(TrialConfigSchema().fields)
CONFIG_PREFIX = "config."
CONFIG_COLUMNS = tuple(CONFIG_PREFIX + field for field in CONFIG_FIELDS)
RESULT_COLUMNS = (
    "index", "gold_rr_bpm", "rr_baseline", "rr_modified", "diff_baseline", "diff_modified",
    "snr_db", "baseline_peaks", "modified_peaks", "baseline_error", "modified_error",
)


def _loads(text: str, what: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ManifestError(f"invalid {what} JSON: {e.msg}", location=f"line {e.lineno} column {e.colno}")


def _first_error(messages) -> str:
    if isinstance(messages, dict):
        key, value = next(iter(messages.items()))
        return f"{key}: {_first_error(value)}"
    if isinstance(messages, list) and messages:
        return str(messages[0])
    return str(messages)


class ManifestInterface(BaseFileInterface):
    """JSON array of trial configurations."""

    @staticmethod
    def parse(raw) -> List[TrialConfig]:
        if not isinstance(raw, list):
            raise ManifestError("manifest must be a JSON array of trials")
        if not raw:
            raise EmptyInputError("manifest is empty")
        schema = TrialConfigSchema()
        configs = []
        for i, item in enumerate(raw):
            try:
                configs.append(schema.load(item))
            except ValidationError as e:
                raise ManifestError(_first_error(e.messages), location=f"trial {i}")
        return configs

    @staticmethod
    def load(path: PathLike) -> List[TrialConfig]:
        configs = ManifestInterface.parse(_loads(BaseFileInterface.read_text(path), "manifest"))
        logger.info(f"Loaded manifest of {len(configs)} trials from {path}")
        return configs

    @staticmethod
    def save(configs: Sequence[TrialConfig], path: PathLike) -> Path:
        payload = TrialConfigSchema(many=True).dump(configs)
        return BaseFileInterface.write_text(path, BaseFileInterface.dumps_json(payload))


class ResultsInterface(BaseFileInterface):
    """Trial results as JSON (nested configs) or flat CSV."""

    @staticmethod
    def to_frame(results: Sequence[TrialResult]) -> pd.DataFrame:
        records = []
        for row in TrialResultSchema(many=True).dump(results):
            config = row.pop('config')
            row['baseline_peaks'] = ';'.join(repr(p) for p in row['baseline_peaks'])
            row['modified_peaks'] = ';'.join(repr(p) for p in row['modified_peaks'])
            record = {col: row.get(col) for col in RESULT_COLUMNS}
            record.update({CONFIG_PREFIX + field: config[field] for field in CONFIG_FIELDS})
            records.append(record)
        return pd.DataFrame.from_records(records, columns=list(RESULT_COLUMNS) + list(CONFIG_COLUMNS))

    @staticmethod
    def from_frame(df: pd.DataFrame) -> List[TrialResult]:
        df = df.astype(object).where(pd.notna(df), None)
        schema = TrialResultSchema()
        results = []
        for i, row in enumerate(df.to_dict(orient='records')):
            item = {key: value for key, value in row.items() if not key.startswith(CONFIG_PREFIX)}
            item['config'] = {column[len(CONFIG_PREFIX):]: value for column, value in row.items()
                              if column.startswith(CONFIG_PREFIX) and value is not None}
            for key in ('baseline_peaks', 'modified_peaks'):
                text = item.get(key)
                item[key] = [float(p) for p in str(text).split(';')] if text not in (None, '') else []
            try:
                results.append(schema.load(item))
            except ValidationError as e:
                raise ManifestError(_first_error(e.messages), location=f"row {i + 1}")
        return results

    @staticmethod
    def parse_json(raw) -> List[TrialResult]:
        if isinstance(raw, dict):
            raw = raw.get('results')
        if not isinstance(raw, list):
            raise ManifestError("results must be a JSON array or an object with a 'results' array")
        schema = TrialResultSchema()
        results = []
        for i, item in enumerate(raw):
            try:
                results.append(schema.load(item))
            except ValidationError as e:
                raise ManifestError(_first_error(e.messages), location=f"result {i}")
        return results

    @staticmethod
    def load(path: PathLike) -> List[TrialResult]:
        path = Path(path)
        if path.suffix.lower() == '.csv':
            try:
                df = pd.read_csv(path, keep_default_na=True, dtype={'baseline_peaks': str, 'modified_peaks': str})
            except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
                raise ManifestError(f"invalid results CSV: {e}", location=str(path))
            results = ResultsInterface.from_frame(df)
        else:
            results = ResultsInterface.parse_json(_loads(BaseFileInterface.read_text(path), "results"))
        if not results:
            raise EmptyInputError(f"{path} holds no trial results")
        logger.info(f"Loaded {len(results)} trial results from {path}")
        return results

    @staticmethod
    def save_json(results: Sequence[TrialResult], path: PathLike) -> Path:
        payload = {'results': TrialResultSchema(many=True).dump(results)}
        return BaseFileInterface.write_text(path, BaseFileInterface.dumps_json(payload))

    @staticmethod
    def save_csv(results: Sequence[TrialResult], path: PathLike) -> Path:
        return BaseFileInterface.write_text(path, ResultsInterface.to_frame(results).to_csv(index=False))


class DesignInterface(BaseFileInterface):

    @staticmethod
    def to_frame(design: Design) -> pd.DataFrame:
        df = pd.DataFrame(design.X, columns=list(design.column_names))
        df.insert(0, 'group', design.groups)
        df.insert(0, 'y', design.y)
        return df

    @staticmethod
    def save(design: Design, path: PathLike) -> Path:
        return BaseFileInterface.write_text(path, DesignInterface.to_frame(design).to_csv(index=False))


def write_experiment(experiment: ExperimentResult, out_dir: PathLike) -> Dict[str, Path]:
    """results.json, results.csv and one design_<method>.csv per method."""
    out_dir = Path(out_dir)
    written = {
        'results_json': ResultsInterface.save_json(experiment.results, out_dir / 'results.json'),
        'results_csv': ResultsInterface.save_csv(experiment.results, out_dir / 'results.csv'),
    }
    for method, design in experiment.designs.items():
        written[f'design_{method}'] = DesignInterface.save(design, out_dir / f'design_{method}.csv')
    logger.info(f"✅ Experiment files written to {out_dir}")
    return written


# ============================================================================
# TIDY EXPORTS FOR EXTERNAL PLOTTING
# ============================================================================

class ExportInterface(BaseFileInterface):

    @staticmethod
    def series_frame(series_by_name: Dict[str, PressureSeries]) -> pd.DataFrame:
        parts = []
        for name, series in series_by_name.items():
            parts.append(pd.DataFrame({
                'series': name,
                'sample': np.arange(series.n_samples),
                'time_s': series.time_s,
                'value': series.values,
            }))
        return pd.concat(parts, ignore_index=True)

    @staticmethod
    def spectra_frame(spectra: Dict[str, Iterable[Tuple[float, Spectrum]]]) -> pd.DataFrame:
        parts = []
        for method, windows in spectra.items():
            for window, (start_s, spec) in enumerate(windows):
                parts.append(pd.DataFrame({
                    'method': method,
                    'window': window,
                    'window_start_s': start_s,
                    'freq_hz': spec.freqs,
                    'power': spec.power,
                }))
        return pd.concat(parts, ignore_index=True)

    @staticmethod
    def peaks_frame(estimates: Sequence[RrEstimate]) -> pd.DataFrame:
        records = []
        for estimate in estimates:
            for window, (start_s, peak) in enumerate(zip(estimate.window_starts_s, estimate.per_window_peaks)):
                records.append({
                    'method': estimate.method,
                    'window': window,
                    'window_start_s': start_s,
                    'peak_hz': peak,
                    'peak_bpm': 60.0 * peak,
                })
        return pd.DataFrame.from_records(
            records, columns=['method', 'window', 'window_start_s', 'peak_hz', 'peak_bpm'])

    @staticmethod
    def write(out_dir: PathLike, series_by_name: Dict[str, PressureSeries],
              spectra: Dict[str, Iterable[Tuple[float, Spectrum]]],
              estimates: Sequence[RrEstimate]) -> Dict[str, Path]:
        """series.csv, spectra.csv and peaks.csv in long format."""
        out_dir = Path(out_dir)
        frames = {
            'series': ExportInterface.series_frame(series_by_name),
            'spectra': ExportInterface.spectra_frame(spectra),
            'peaks': ExportInterface.peaks_frame(estimates),
        }
        written = {}
        for name, df in frames.items():
            buffer = io.StringIO()
            df.to_csv(buffer, index=False)
            written[name] = BaseFileInterface.write_text(out_dir / f'{name}.csv', buffer.getvalue())
        logger.info(f"✅ Plot data exported to {out_dir}")
        return written
