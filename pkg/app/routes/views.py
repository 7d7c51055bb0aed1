"""Views"""

from flask import jsonify

from app.routes import blueprint
from app.utils.logger import get_logger

logger = get_logger(__name__)


@blueprint.route("/", methods=["GET"])
def health_check():
    """Health check endpoint"""
    logger.info("🏥 Health check endpoint called")
    return jsonify({
        "status": "healthy",
        "service": "psm-rr",
        "message": "Application is running"
    }), 200
