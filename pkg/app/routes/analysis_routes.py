"""
Analysis routes - the measurement chain as a JSON API
"""

import threading
import uuid
from functools import wraps
from pathlib import Path

from flask import Blueprint, current_app, jsonify, request
from marshmallow import ValidationError

from app.interface.files import json_safe
from app.models.models import METHODS, PressureSeries
from app.routes.thread_functions import thread_run_experiment
from app.schemas.report_schemas import (
    ExperimentAnalysisSchema,
    MetrologyReportSchema,
    RrEstimateSchema,
)
from app.schemas.request_schemas import (
    EstimateRequestSchema,
    ExperimentRequestSchema,
    LoaRequestSchema,
    MetrologyRequestSchema,
)
from app.services.metrology import metrology_report
from app.services.simbench import analyze_results
from app.services.spectral import estimate_rr, estimate_rr_modified
from app.utils.config import Config
from app.utils.exceptions import PsmError
from app.utils.logger import get_logger

logger = get_logger(__name__)

analysis_bp = Blueprint('analysis', __name__, url_prefix='/api/psm')


def analysis_handler(schema_class=None):
    """
    Validate the JSON body with `schema_class` and map errors to responses:
    ValidationError -> 400, PsmError -> its http_status, anything else -> 500.
    """
    def decorator(f):
        @wraps(f)
        def wrapper(*args, **kwargs):
            try:
                if schema_class:
                    kwargs['validated_data'] = schema_class().load(request.get_json(silent=True) or {})
                return f(*args, **kwargs)

            except ValidationError as e:
                logger.warning(f"⚠️ Invalid request to {f.__name__}: {e.messages}")
                return jsonify({
                    'success': False,
                    'error': 'Invalid request body',
                    'details': e.messages
                }), 400

            except PsmError as e:
                logger.error(f"❌ {f.__name__}: {type(e).__name__}: {e}")
                return jsonify({
                    'success': False,
                    'error': str(e),
                    'type': type(e).__name__
                }), e.http_status

            except Exception as e:
                logger.error(f"❌ Error in {f.__name__}: {e}")
                return jsonify({
                    'success': False,
                    'error': 'Internal server error'
                }), 500

        return wrapper
    return decorator


@analysis_bp.route('/metrology', methods=['POST'])
@analysis_handler(MetrologyRequestSchema)
def metrology(validated_data):
    """Drift, creep and bootstrap std of drift of a pressure series"""
    series = PressureSeries(validated_data['values'], validated_data['fs'])
    report = metrology_report(
        series,
        endpoint_window_s=validated_data['endpoint_window_s'],
        block_size=validated_data['block_size'],
        n_boot=validated_data['n_boot'],
        seed=validated_data['seed'],
        workers=Config.WORKERS,
    )
    return jsonify({'success': True, 'data': MetrologyReportSchema().dump(report)}), 200


@analysis_bp.route('/estimate', methods=['POST'])
@analysis_handler(EstimateRequestSchema)
def estimate(validated_data):
    """RR estimate of a thorax pressure series, baseline and/or modified"""
    series = PressureSeries(validated_data['values'], validated_data['fs'])
    band = tuple(validated_data['band']) if validated_data['band'] else None
    methods = METHODS if validated_data['method'] == 'both' else (validated_data['method'],)

    estimates = []
    for method in methods:
        if method == 'baseline':
            estimates.append(estimate_rr(series, validated_data['window_s'], validated_data['overlap'], band))
        else:
            estimates.append(estimate_rr_modified(
                series, validated_data['smooth_window_s'], validated_data['window_s'],
                validated_data['overlap'], band))
    return jsonify({'success': True, 'data': RrEstimateSchema(many=True).dump(estimates)}), 200


@analysis_bp.route('/loa', methods=['POST'])
@analysis_handler(LoaRequestSchema)
def loa(validated_data):
    """Mixed-effects limits of agreement and effect-exclusion tests for trial results"""
    analysis = analyze_results(validated_data['results'], motion_coding=validated_data['motion_coding'])
    return jsonify({'success': True, 'data': json_safe(ExperimentAnalysisSchema().dump(analysis))}), 200


@analysis_bp.route('/experiment', methods=['POST'])
@analysis_handler(ExperimentRequestSchema)
def experiment(validated_data):
    """Start the synthetic bench in a background thread"""
    run_id = uuid.uuid4().hex[:12]
    out_dir = Path(Config.output_dir()) / run_id
    app = current_app._get_current_object()
    worker = threading.Thread(
        target=thread_run_experiment,
        args=(app, out_dir, validated_data['manifest'], validated_data['seed'], validated_data['motion_coding']),
        daemon=True,
    )
    worker.start()
    logger.info(f"🚀 Experiment {run_id} started, writing to {out_dir}")
    return jsonify({
        'success': True,
        'data': {'run_id': run_id, 'output_dir': str(out_dir)}
    }), 202
