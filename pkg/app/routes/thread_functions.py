"""
Background jobs started from the routes.
They run outside the request and only need the app context for logging and config.
"""

from pathlib import Path
from typing import List, Optional

from app.interface.report_templates import loa_payload, render
from app.interface.files import BaseFileInterface
from app.interface.results_files import ManifestInterface, write_experiment
from app.models.models import TrialConfig
from app.services.simbench import analyze_experiment, default_manifest, run_experiment
from app.utils.config import Config
from app.utils.exceptions import PsmError
from app.utils.logger import get_logger

logger = get_logger(__name__)


def thread_run_experiment(app, out_dir: Path, manifest: Optional[List[TrialConfig]], seed: int,
                          motion_coding: str = "binary") -> bool:
    """
    Run the bench and write results, designs and the LoA report into out_dir.
    """
    with app.app_context():
        try:
            configs = manifest or default_manifest(seed)
            experiment = run_experiment(configs, motion_coding=motion_coding, workers=Config.WORKERS)
            payload = loa_payload(analyze_experiment(experiment))
            ManifestInterface.save(configs, Path(out_dir) / 'manifest.json')
            write_experiment(experiment, out_dir)
            BaseFileInterface.write_text(Path(out_dir) / 'loa.json', render(payload, 'json'))
            BaseFileInterface.write_text(Path(out_dir) / 'loa.txt', render(payload, 'text'))
            logger.info(f"✅ Experiment written to {out_dir}")
            return True
        except PsmError as e:
            logger.error(f"❌ Experiment in {out_dir} failed: {type(e).__name__}: {e}")
            return False
        except Exception as e:
            logger.error(f"❌ Error in thread_run_experiment: {e}")
            return False
