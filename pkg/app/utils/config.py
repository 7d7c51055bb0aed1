import os
from flask_marshmallow import Marshmallow
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

from app.utils.constants import *


ma = Marshmallow()

_REPO_ROOT = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))


def _env_log_file() -> str:
    value = os.getenv('PSM_LOG_FILE')
    if value is None:
        return os.path.join(_REPO_ROOT, 'logs', 'psm_rr.log')
    return value


class Config:
    """Runtime settings read from the environment (.env supported)."""

    SECRET_KEY = os.getenv('SECRET_KEY', 'dev-secret-key')
    JSON_SORT_KEYS = False

    # Default directory for simulate / experiment outputs
    OUTPUT_DIR = os.getenv('PSM_OUTPUT_DIR', 'output')

    LOG_FILE = _env_log_file()
    LOG_LEVEL = os.getenv('PSM_LOG_LEVEL', 'INFO').upper()

    # Timezone for report timestamps
    TIMEZONE = os.getenv('PSM_TIMEZONE', 'UTC')

    WORKERS = int(os.getenv('PSM_WORKERS', '1'))

    @staticmethod
    def output_dir() -> str:
        """Output directory, re-read so tests and shells can override it at runtime."""
        return os.getenv('PSM_OUTPUT_DIR', Config.OUTPUT_DIR)
