from flask import Flask
from app.utils.config import Config, ma
from app.utils.logger import get_logger

logger = get_logger(__name__)


def create_app() -> Flask:
    """Application factory for the app."""
    app = Flask(__name__)

    app.config.from_object(Config)
    ma.init_app(app)

    # Register blueprints
    from app.routes import blueprint as routes_bp
    from app.routes.analysis_routes import analysis_bp
    app.register_blueprint(routes_bp)
    app.register_blueprint(analysis_bp)
    logger.info("✅ Blueprints registered")

    return app
