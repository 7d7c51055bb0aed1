"""
psm-rr command line: metrology, estimate, simulate, experiment and loa.

Library errors become exit codes (see app.utils.exceptions); reports go to
stdout or --output, logs to stderr.
"""

import sys
from functools import wraps
from pathlib import Path
from typing import List, Optional, Tuple

import click

from app.interface.files import BaseFileInterface
from app.interface.frame_files import load_frames, save_frames
from app.interface.report_templates import estimate_payload, loa_payload, metrology_payload, render
from app.interface.results_files import (
    ExportInterface,
    ManifestInterface,
    ResultsInterface,
    write_experiment,
)
from app.models.models import REPORT_FORMATS, EstimatorSettings, Roi, RunConfig
from app.services.frames import average_series
from app.services.metrology import characterize_mat
from app.services.simbench import (
    analyze_experiment,
    analyze_results,
    default_manifest,
    run_experiment,
    synth_static_load,
    synth_trial,
)
from app.services.spectral import estimate_rr, estimate_rr_modified, windowed_spectra
from app.services.preprocess import isolate_breathing, remove_dc
from app.utils.config import Config
from app.utils.constants import (
    BOOTSTRAP_BLOCK_SIZE,
    BOOTSTRAP_RESAMPLES,
    CLI_BAND_HZ,
    CREEP_ENDPOINT_WINDOW_S,
    DEFAULT_FS,
    DEFAULT_SEED,
    LOAD_TABLE,
    METROLOGY_NOISE_FLOOR_PSI,
    MOTION_CODINGS,
    RR_OVERLAP,
    RR_WINDOW_S,
    SMOOTH_WINDOW_S,
    TRANSIENT_LEAD_S,
    TRANSIENT_TAIL_S,
    TRIAL_NOISE_FLOOR_PSI,
)
from app.utils.exceptions import InvalidParameterError, PsmError
from app.utils.logger import get_logger

logger = get_logger(__name__)

existing_file = click.Path(exists=True, dir_okay=False, path_type=Path)


def exit_on_error(f):
    """Turn library errors into the exit code declared on the exception class."""
    @wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except PsmError as e:
            logger.error(f"❌ {f.__name__}: {type(e).__name__}: {e}")
            click.echo(f"error: {e}", err=True)
            sys.exit(e.exit_code)
    return wrapper


def parse_band(text: Optional[str]) -> Optional[Tuple[float, float]]:
    if text is None:
        return None
    parts = [p.strip() for p in text.split(',')]
    try:
        lo, hi = (float(p) for p in parts)
    except ValueError:
        raise InvalidParameterError(f"band must be 'lo,hi' in Hz, got '{text}'")
    return lo, hi


def emit(text: str, output: Optional[Path]) -> None:
    if output is None:
        click.echo(text, nl=False)
    else:
        BaseFileInterface.write_text(output, text)
        logger.info(f"✅ Report written to {output}")


def _load_manifest(manifest: Optional[Path], seed: int):
    return ManifestInterface.load(manifest) if manifest else default_manifest(seed)


@click.group()
@click.version_option(package_name="psm-rr")
def cli():
    """Respiratory rate from pressure-sensitive mat recordings."""


# ============================================================================
# METROLOGY
# ============================================================================

@cli.command()
@click.option('--input', 'input_path', type=existing_file, required=True, help='Frame file (CSV or JSON).')
@click.option('--output', 'output_path', type=click.Path(dir_okay=False, path_type=Path), help='Report file; stdout when omitted.')
@click.option('--roi', help='r0,r1,c0,c1 (inclusive); whole mat when omitted.')
@click.option('--noise-floor', type=float, default=METROLOGY_NOISE_FLOOR_PSI, show_default=True, help='psi')
@click.option('--lead-s', type=float, default=TRANSIENT_LEAD_S, show_default=True)
@click.option('--tail-s', type=float, default=TRANSIENT_TAIL_S, show_default=True)
@click.option('--endpoint-s', type=float, default=CREEP_ENDPOINT_WINDOW_S, show_default=True,
              help='Averaging window for the creep endpoints.')
@click.option('--block-size', type=int, default=BOOTSTRAP_BLOCK_SIZE, show_default=True)
@click.option('--n-boot', type=int, default=BOOTSTRAP_RESAMPLES, show_default=True)
@click.option('--seed', type=int, default=0, show_default=True)
@click.option('--workers', type=int, default=Config.WORKERS, show_default=True)
@click.option('--format', 'report_format', type=click.Choice(REPORT_FORMATS), default='text', show_default=True)
@exit_on_error
def metrology(input_path, output_path, roi, noise_floor, lead_s, tail_s, endpoint_s, block_size,
              n_boot, seed, workers, report_format):
    """Mat characterisation: P_avg, contact area, creep, drift and std of drift."""
    run = RunConfig(
        subcommand='metrology',
        input_path=str(input_path),
        output_path=str(output_path) if output_path else None,
        noise_floor=noise_floor,
        roi=Roi.parse(roi) if roi else None,
        seed=seed,
        report_format=report_format,
    )
    seq = load_frames(input_path)
    report = characterize_mat(
        seq, run.noise_floor, roi=run.roi, lead_s=lead_s, tail_s=tail_s,
        endpoint_window_s=endpoint_s, block_size=block_size, n_boot=n_boot,
        seed=run.seed, workers=workers,
    )
    emit(render(metrology_payload(report), run.report_format), output_path)


# ============================================================================
# ESTIMATE
# ============================================================================

@cli.command()
@click.option('--input', 'input_path', type=existing_file, required=True, help='Frame file (CSV or JSON).')
@click.option('--output', 'output_path', type=click.Path(dir_okay=False, path_type=Path))
@click.option('--roi', help='Thorax ROI r0,r1,c0,c1; whole mat when omitted.')
@click.option('--noise-floor', type=float, default=TRIAL_NOISE_FLOOR_PSI, show_default=True, help='psi')
@click.option('--window-s', type=float, default=RR_WINDOW_S, show_default=True)
@click.option('--overlap', type=float, default=RR_OVERLAP, show_default=True)
@click.option('--smooth-s', type=float, default=SMOOTH_WINDOW_S, show_default=True)
@click.option('--band', default=f"{CLI_BAND_HZ[0]},{CLI_BAND_HZ[1]}", show_default=True, help='Peak search band lo,hi (Hz).')
@click.option('--no-band', is_flag=True, help='Search every non-DC bin.')
@click.option('--method', type=click.Choice(['baseline', 'modified', 'both']), default='both', show_default=True)
@click.option('--gold', type=float, help='Gold-standard RR (bpm) for paired differences.')
@click.option('--export-dir', type=click.Path(file_okay=False, path_type=Path),
              help='Write series.csv, spectra.csv and peaks.csv for plotting.')
@click.option('--format', 'report_format', type=click.Choice(REPORT_FORMATS), default='text', show_default=True)
@exit_on_error
def estimate(input_path, output_path, roi, noise_floor, window_s, overlap, smooth_s, band, no_band,
             method, gold, export_dir, report_format):
    """Respiratory rate from the thorax ROI, baseline and/or modified."""
    run = RunConfig(
        subcommand='estimate',
        input_path=str(input_path),
        output_path=str(output_path) if output_path else None,
        noise_floor=noise_floor,
        roi=Roi.parse(roi) if roi else None,
        window_s=window_s,
        overlap=overlap,
        smooth_window_s=smooth_s,
        band=None if no_band else parse_band(band),
        report_format=report_format,
        method=method,
    )
    seq = load_frames(input_path)
    region = run.roi or Roi.full(seq.shape)
    series = average_series(seq, region, run.noise_floor)

    estimates = []
    for name in run.methods:
        if name == 'baseline':
            estimates.append(estimate_rr(series, run.window_s, run.overlap, run.band))
        else:
            estimates.append(estimate_rr_modified(series, run.smooth_window_s, run.window_s, run.overlap, run.band))

    if export_dir is not None:
        ExportInterface.write(
            export_dir,
            series_by_name={
                'raw': series,
                'dc_removed': remove_dc(series),
                'motion_suppressed': isolate_breathing(series, run.smooth_window_s),
            },
            spectra={name: windowed_spectra(series, run.window_s, run.overlap, name, run.smooth_window_s)
                     for name in run.methods},
            estimates=estimates,
        )
    emit(render(estimate_payload(estimates, gold), run.report_format), output_path)


# ============================================================================
# SIMULATE / EXPERIMENT
# ============================================================================

@cli.command()
@click.option('--manifest', type=existing_file, help='JSON array of trial configs; default 28-trial protocol otherwise.')
@click.option('--seed', type=int, default=DEFAULT_SEED, show_default=True, help='Base seed of the default manifest.')
@click.option('--output', 'output_dir', type=click.Path(file_okay=False, path_type=Path),
              help='Output directory (default: $PSM_OUTPUT_DIR).')
@click.option('--frame-format', type=click.Choice(['csv', 'json']), default='csv', show_default=True)
@click.option('--metrology', 'static_load', is_flag=True, help='Write the four static-load recordings instead.')
@click.option('--duration-s', type=float, default=60.0, show_default=True, help='Static-load record length.')
@exit_on_error
def simulate(manifest, seed, output_dir, frame_format, static_load, duration_s):
    """Write synthetic frame files, the manifest and the gold labels."""
    out = Path(output_dir or Config.output_dir())
    if static_load:
        for i, (model, mattress) in enumerate(sorted(LOAD_TABLE)):
            seq = synth_static_load(model, mattress, duration_s + TRANSIENT_LEAD_S + TRANSIENT_TAIL_S,
                                    DEFAULT_FS, seed + i)
            save_frames(seq, out / f"static_{model}_{mattress}.{frame_format}")
        logger.info(f"✅ {len(LOAD_TABLE)} static-load recordings written to {out}")
        return

    configs = _load_manifest(manifest, seed)
    ManifestInterface.save(configs, out / 'manifest.json')
    labels: List[str] = ["trial,file,gold_rr_bpm,breathing_hz,thorax_roi"]
    for i, config in enumerate(configs):
        trial = synth_trial(config)
        name = f"trial_{i:02d}.{frame_format}"
        save_frames(trial.frames, out / name)
        roi = ','.join(str(b) for b in trial.thorax_roi.as_tuple())
        labels.append(f'{i},{name},{trial.gold_rr_bpm!r},{trial.breathing_hz!r},"{roi}"')
    BaseFileInterface.write_text(out / 'gold_labels.csv', '\n'.join(labels) + '\n')
    logger.info(f"✅ {len(configs)} trials written to {out}")


@cli.command()
@click.option('--manifest', type=existing_file)
@click.option('--seed', type=int, default=DEFAULT_SEED, show_default=True)
@click.option('--output', 'output_dir', type=click.Path(file_okay=False, path_type=Path),
              help='Output directory (default: $PSM_OUTPUT_DIR).')
@click.option('--noise-floor', type=float, default=TRIAL_NOISE_FLOOR_PSI, show_default=True)
@click.option('--window-s', type=float, default=RR_WINDOW_S, show_default=True)
@click.option('--overlap', type=float, default=RR_OVERLAP, show_default=True)
@click.option('--smooth-s', type=float, default=SMOOTH_WINDOW_S, show_default=True)
@click.option('--band', default=None, help='Peak search band lo,hi (Hz); unrestricted by default.')
@click.option('--motion-coding', type=click.Choice(MOTION_CODINGS), default='binary', show_default=True)
@click.option('--workers', type=int, default=Config.WORKERS, show_default=True)
@click.option('--format', 'report_format', type=click.Choice(REPORT_FORMATS), default='text', show_default=True)
@exit_on_error
def experiment(manifest, seed, output_dir, noise_floor, window_s, overlap, smooth_s, band, motion_coding,
               workers, report_format):
    """Run the synthetic bench end to end and report limits of agreement."""
    run = RunConfig(
        subcommand='experiment',
        noise_floor=noise_floor,
        window_s=window_s,
        overlap=overlap,
        smooth_window_s=smooth_s,
        band=parse_band(band),
        seed=seed,
        report_format=report_format,
        motion_coding=motion_coding,
    )
    out = Path(output_dir or Config.output_dir())
    configs = _load_manifest(manifest, run.seed)
    settings = EstimatorSettings(
        noise_floor=run.noise_floor,
        window_s=run.window_s,
        overlap=run.overlap,
        smooth_window_s=run.smooth_window_s,
        band=run.band,
    )
    result = run_experiment(configs, settings=settings, motion_coding=run.motion_coding, workers=workers)
    text = render(loa_payload(analyze_experiment(result, workers=workers)), run.report_format)

    # nothing is written unless the analysis succeeded
    ManifestInterface.save(configs, out / 'manifest.json')
    write_experiment(result, out)
    extension = {'text': 'txt', 'json': 'json', 'csv': 'csv'}[run.report_format]
    emit(text, out / f"loa.{extension}")
    click.echo(text, nl=False)


# ============================================================================
# LOA
# ============================================================================

@cli.command()
@click.option('--input', 'input_path', type=existing_file, required=True, help='results.json or results.csv')
@click.option('--output', 'output_path', type=click.Path(dir_okay=False, path_type=Path))
@click.option('--method', type=click.Choice(['baseline', 'modified', 'both']), default='both', show_default=True)
@click.option('--motion-coding', type=click.Choice(MOTION_CODINGS), default='binary', show_default=True,
              help='binary: one motion column (1 df); type: internal/external columns (2 df).')
@click.option('--format', 'report_format', type=click.Choice(REPORT_FORMATS), default='text', show_default=True)
@exit_on_error
def loa(input_path, output_path, method, motion_coding, report_format):
    """Limits of agreement and effect-exclusion likelihood ratio tests."""
    run = RunConfig(
        subcommand='loa',
        input_path=str(input_path),
        output_path=str(output_path) if output_path else None,
        report_format=report_format,
        method=method,
        motion_coding=motion_coding,
    )
    results = ResultsInterface.load(input_path)
    analysis = analyze_results(results, motion_coding=run.motion_coding, methods=run.methods)
    emit(render(loa_payload(analysis), run.report_format), output_path)


if __name__ == '__main__':
    cli()
