from pathlib import Path

import pytest

from app import create_app
from app.evidence import clear_prior_cache
from app.models import CountsTable, ObservedCellParams, ZMarginParam

ROOT = Path(__file__).resolve().parent.parent
DATA_DIR = ROOT / 'data'
CONFIG_DIR = ROOT / 'configs'

# Worked examples as (q11, q0dot) per cell; q10 absorbs the rounding
EXAMPLE1 = ((0.06, 0.48), (0.29, 0.16), (0.28, 0.43), (0.49, 0.12))
EXAMPLE1_OMEGA = (0.37 / 0.48, 0.13 / 0.16, 0.29 / 0.43, 0.08 / 0.12)
EXAMPLE2 = ((0.14, 0.36), (0.23, 0.28), (0.22, 0.46), (0.24, 0.49))


def observed(rows):
    return tuple(ObservedCellParams(1.0 - q11 - q0dot, q11, q0dot) for q11, q0dot in rows)


@pytest.fixture
def app(tmp_path):
    app = create_app({
        'TESTING': True,
        'DEFAULT_SEED': 12345,
        'DEFAULT_DRAWS': 200,
        'PRIOR_ATTEMPTS': 20_000,
        'OUTPUT_DIR': str(tmp_path / 'output'),
        'LOG_LEVEL': 'WARNING',
    })
    yield app
    clear_prior_cache()


@pytest.fixture
def runner(app):
    return app.test_cli_runner()


@pytest.fixture
def example1():
    return observed(EXAMPLE1)


@pytest.fixture
def example2():
    return observed(EXAMPLE2)


@pytest.fixture
def half():
    return ZMarginParam(0.5)


@pytest.fixture
def example1_counts():
    """Example 1 at 100 rows per cell"""
    return CountsTable(((46, 6, 48), (55, 29, 16), (29, 28, 43), (39, 49, 12)))


@pytest.fixture
def falsifying_counts():
    """Z shifts the outcome far more than missingness can explain"""
    return CountsTable(((10, 85, 5), (85, 10, 5), (40, 40, 20), (40, 40, 20)))
