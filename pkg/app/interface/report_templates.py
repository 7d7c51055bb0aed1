"""
Report payloads and their text / JSON / CSV renderings.

A payload is built once, rounded to 6 significant digits, and every format
renders that same payload.
"""

import io
import math
from typing import Any, Dict, List, Optional

import pandas as pd

from app.interface.files import BaseFileInterface
from app.models.models import ExperimentAnalysis, MetrologyReport, RrEstimate
from app.schemas.report_schemas import (
    ExperimentAnalysisSchema,
    MetrologyReportSchema,
    RrEstimateSchema,
)
from app.utils.date_utils import generated_at
from app.utils.exceptions import InvalidParameterError

SIGNIFICANT_DIGITS = 6


def round_sig(value: Any, digits: int = SIGNIFICANT_DIGITS) -> Any:
    """Round every float in a nested payload; ints, strings, None and inf pass through."""
    if isinstance(value, bool) or value is None:
        return value
    if isinstance(value, float):
        if not math.isfinite(value) or value == 0:
            return value
        return float(format(value, f'.{digits}g'))
    if isinstance(value, dict):
        return {k: round_sig(v, digits) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [round_sig(v, digits) for v in value]
    return value


def _num(value: Optional[float]) -> str:
    if value is None:
        return "n/a"
    return format(value, 'g')


# ============================================================================
# PAYLOADS
# ============================================================================

def metrology_payload(report: MetrologyReport) -> Dict[str, Any]:
    return {
        'report': 'metrology',
        'generated_at': generated_at(),
        'metrology': round_sig(MetrologyReportSchema().dump(report)),
    }


def estimate_payload(estimates: List[RrEstimate], gold_rr_bpm: Optional[float] = None) -> Dict[str, Any]:
    rows = []
    for estimate in estimates:
        row = RrEstimateSchema().dump(estimate)
        row['diff_bpm'] = None if gold_rr_bpm is None else estimate.rr_bpm - gold_rr_bpm
        rows.append(row)
    return {
        'report': 'estimate',
        'generated_at': generated_at(),
        'gold_rr_bpm': round_sig(gold_rr_bpm),
        'estimates': round_sig(rows),
    }


def loa_payload(analysis: ExperimentAnalysis) -> Dict[str, Any]:
    return {
        'report': 'loa',
        'generated_at': generated_at(),
        'analysis': round_sig(ExperimentAnalysisSchema().dump(analysis)),
    }


# ============================================================================
# TEXT TEMPLATES
# ============================================================================

METROLOGY_TEMPLATE = """PSM characteristics ({generated_at})
  P_avg (psi)             {p_avg}
  Avg contact area (%)    {contact_area_pct}
  Creep (%/min)           {creep_pct}
  Drift (%)               {drift_pct}
  Std of drift (%)        {drift_std_pct}
  Samples                 {n_samples} at {fs} fps
  Bootstrap               {n_boot} resamples, block {block_size}
"""


def _metrology_text(payload: Dict[str, Any]) -> str:
    m = payload['metrology']
    return METROLOGY_TEMPLATE.format(
        generated_at=payload['generated_at'],
        p_avg=_num(m['p_avg']),
        contact_area_pct=_num(m['contact_area_pct']),
        creep_pct=_num(m['creep_pct']),
        drift_pct=_num(m['drift_pct']),
        drift_std_pct=_num(m['drift_std_pct']),
        n_samples=m['n_samples'],
        fs=_num(m['fs']),
        n_boot=m['n_boot'],
        block_size=m['block_size'],
    )


def _estimate_text(payload: Dict[str, Any]) -> str:
    lines = [f"RR estimates ({payload['generated_at']})"]
    if payload['gold_rr_bpm'] is not None:
        lines.append(f"  Gold standard: {_num(payload['gold_rr_bpm'])} bpm")
    lines.append(f"  {'Method':<10}{'RR (bpm)':>10}{'Diff':>10}{'Windows':>9}  Band (Hz)")
    for row in payload['estimates']:
        band = "none" if row['band'] is None else f"{_num(row['band'][0])}-{_num(row['band'][1])}"
        lines.append(
            f"  {row['method']:<10}{_num(row['rr_bpm']):>10}{_num(row['diff_bpm']):>10}"
            f"{row['n_windows']:>9}  {band}")
    for row in payload['estimates']:
        peaks = ', '.join(_num(p) for p in row['per_window_peaks'])
        lines.append(f"  {row['method']} window peaks (Hz): {peaks}")
    return '\n'.join(lines) + '\n'


def _interval(loa: Dict[str, Any]) -> str:
    return f"{_num(loa['bias'])} ({_num(loa['lower'])} to {_num(loa['upper'])})"


def _loa_text(payload: Dict[str, Any]) -> str:
    analysis = payload['analysis']
    lines = [
        f"95% limits of agreement ({payload['generated_at']}, motion coding: {analysis['motion_coding']})",
        f"  {'Method':<10}{'Bias (LoA), bpm':<34}{'SD':>10}{'Pearson r':>12}",
    ]
    for method, result in analysis['methods'].items():
        lines.append(
            f"  {method:<10}{_interval(result['loa']):<34}{_num(result['loa']['sd']):>10}"
            f"{_num(result['pearson_r']):>12}")

    for method, result in analysis['methods'].items():
        lines.append("")
        lines.append(f"Effect exclusion: {method}")
        lines.append(f"  {'Excluded':<12}{'Bias (LoA), bpm':<34}Likelihood ratio test")
        for row in result['exclusions']:
            lrt = row['lrt']
            lines.append(
                f"  {row['effect']:<12}{_interval(row['loa']):<34}"
                f"chi2({lrt['df']}) = {_num(lrt['chi2'])}, p = {_num(lrt['p'])}")

    if analysis['snr_motion_db'] is not None or analysis['snr_still_db'] is not None:
        lines.append("")
        lines.append(
            f"Mean SNR: motion trials {_num(analysis['snr_motion_db'])} dB, "
            f"motion-free trials {_num(analysis['snr_still_db'])} dB")
    return '\n'.join(lines) + '\n'


# ============================================================================
# CSV
# ============================================================================

def _metrology_rows(payload):
    return [payload['metrology']]


def _estimate_rows(payload):
    rows = []
    for row in payload['estimates']:
        band = row['band'] or (None, None)
        rows.append({
            'method': row['method'],
            'rr_bpm': row['rr_bpm'],
            'diff_bpm': row['diff_bpm'],
            'n_windows': row['n_windows'],
            'window_s': row['window_s'],
            'overlap_fraction': row['overlap_fraction'],
            'band_lo_hz': band[0],
            'band_hi_hz': band[1],
            'per_window_peaks_hz': ';'.join(format(p, 'g') for p in row['per_window_peaks']),
        })
    return rows


def _loa_rows(payload):
    rows = []
    for method, result in payload['analysis']['methods'].items():
        models = [('full', result['loa'], None)]
        models += [(f"without_{row['effect']}", row['loa'], row['lrt']) for row in result['exclusions']]
        for model, loa, lrt in models:
            rows.append({
                'method': method,
                'model': model,
                'bias': loa['bias'],
                'sd': loa['sd'],
                'lower': loa['lower'],
                'upper': loa['upper'],
                'chi2': None if lrt is None else lrt['chi2'],
                'df': None if lrt is None else lrt['df'],
                'p': None if lrt is None else lrt['p'],
                'pearson_r': result['pearson_r'] if model == 'full' else None,
            })
    return rows


_TEXT = {'metrology': _metrology_text, 'estimate': _estimate_text, 'loa': _loa_text}
_ROWS = {'metrology': _metrology_rows, 'estimate': _estimate_rows, 'loa': _loa_rows}


def render(payload: Dict[str, Any], fmt: str) -> str:
    """Render a payload as text, json or csv."""
    kind = payload['report']
    if fmt == 'json':
        return BaseFileInterface.dumps_json(payload)
    if fmt == 'text':
        return _TEXT[kind](payload)
    if fmt == 'csv':
        buffer = io.StringIO()
        pd.DataFrame.from_records(_ROWS[kind](payload)).to_csv(buffer, index=False)
        return buffer.getvalue()
    raise InvalidParameterError(f"unknown report format '{fmt}'")
