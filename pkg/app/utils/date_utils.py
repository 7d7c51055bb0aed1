"""
Timestamp helpers for report metadata.
"""
from datetime import datetime
from typing import Optional
import pytz
from app.utils.config import Config
from app.utils.logger import get_logger

logger = get_logger(__name__)


def report_timezone(name: Optional[str] = None):
    """
    Resolve the timezone used to stamp reports.

    Falls back to UTC when the configured name is unknown.
    """
    tz_name = name or Config.TIMEZONE
    try:
        return pytz.timezone(tz_name)
    except pytz.exceptions.UnknownTimeZoneError:
        logger.warning(f"Unknown timezone '{tz_name}', using UTC")
        return pytz.utc


def now_local(name: Optional[str] = None) -> datetime:
    """Timezone-aware current time in the report timezone."""
    return datetime.now(report_timezone(name))


def generated_at(name: Optional[str] = None) -> str:
    """ISO-8601 stamp written into report metadata, e.g. '2026-01-29T23:11:30-03:00'."""
    return now_local(name).replace(microsecond=0).isoformat()
