from flask import Flask
import os


def create_app(test_config=None):
    """Create and configure the Flask application"""
    app = Flask(__name__)

    # Configuration
    app.config['DEFAULT_SEED'] = int(os.environ.get('PIM_SEED', 20240917))
    app.config['DEFAULT_DRAWS'] = int(os.environ.get('PIM_DRAWS', 1000))
    app.config['CREDIBLE_LEVELS'] = os.environ.get('PIM_LEVELS', '0.80,0.95')
    app.config['SIMULATION_LEVEL'] = float(os.environ.get('PIM_SIM_LEVEL', 0.90))
    app.config['BF_FAIL_THRESHOLD'] = float(os.environ.get('PIM_BF_FAIL_THRESHOLD', 10.0))
    app.config['PRIOR_ATTEMPTS'] = int(os.environ.get('PIM_PRIOR_ATTEMPTS', 200000))
    app.config['BATCH_SIZE'] = int(os.environ.get('PIM_BATCH_SIZE', 8192))
    app.config['N_JOBS'] = int(os.environ.get('PIM_N_JOBS', 1))
    app.config['OUTPUT_DIR'] = os.environ.get('PIM_OUTPUT_DIR', 'output')
    app.config['LOG_LEVEL'] = os.environ.get('LOG_LEVEL', 'INFO')

    if test_config:
        app.config.update(test_config)

    # Library modules log under the app logger
    app.logger.setLevel(app.config['LOG_LEVEL'].upper())

    # Register blueprints - use lazy imports to avoid circular dependencies
    def register_blueprints():
        from app.analysis import analysis_bp
        from app.studies import studies_bp
        from app.diagnostics import diagnostics_bp

        app.register_blueprint(analysis_bp)
        app.register_blueprint(studies_bp)
        app.register_blueprint(diagnostics_bp)

    register_blueprints()

    return app
