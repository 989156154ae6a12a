import hashlib
import logging
import math
import os
from functools import wraps
from importlib import metadata

import click
import numpy as np
import pandas as pd
from flask import current_app

logger = logging.getLogger(__name__)

COUNTS_COLUMNS = ['x', 'z', 'n_y0_r1', 'n_y1_r1', 'n_r0']
ROWS_COLUMNS = ['x', 'z', 'r', 'y']
QTABLE_COLUMNS = ['x', 'z', 'q10', 'q11', 'q0dot']
CELL_KEYS = [(0, 0), (0, 1), (1, 0), (1, 1)]

ASSUMPTION_KINDS = ['None', 'ExactIV', 'ThresholdIV', 'LognormalIV',
                    'ExactIVPosBias', 'LognormalBetaBias']
MODEL_KINDS = ASSUMPTION_KINDS + ['Heckman', 'MAR', 'Oracle']
DGP_KINDS = ['HeckmanDGP', 'SaturatedDGP']
BIAS_DIRECTIONS = ['positive', 'negative']

SEED = click.IntRange(0, 2 ** 64 - 1)
GLOBAL_OPTIONS_KEY = 'partialid.global_options'


class PartialIdError(Exception):
    """Base class for every error raised by the engine"""


class ValidationError(PartialIdError):
    """Invalid input, configuration or parameter values"""

    def __init__(self, details):
        self.details = list(details)
        super().__init__('Validation failed: ' + '; '.join(self.details))


class DataParseError(PartialIdError):
    """Malformed data file; `line` is the 1-based file line (header is line 1)"""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class BudgetExhausted(PartialIdError):
    """A restricted posterior could not reach its accepted-draw target.

    Carries enough to report a lower-bound Bayes factor instead of failing.
    """

    def __init__(self, kind, required, max_attempts, stratum_accepted, stratum_attempted):
        self.kind = kind
        self.required = required
        self.max_attempts = max_attempts
        self.stratum_accepted = tuple(int(a) for a in stratum_accepted)
        self.stratum_attempted = tuple(int(a) for a in stratum_attempted)
        super().__init__(
            f"{kind}: accepted {self.stratum_accepted} of {self.stratum_attempted} "
            f"attempts per stratum, {required} required within {max_attempts}"
        )

    @property
    def accepted(self):
        return min(self.stratum_accepted)

    @property
    def attempted(self):
        return max(self.stratum_attempted)

    @property
    def rate_upper(self):
        """Joint acceptance rate with one success credited to an empty stratum"""
        rate = 1.0
        for acc, att in zip(self.stratum_accepted, self.stratum_attempted):
            rate *= max(acc, 1) / max(att, 1)
        return rate


class DegenerateDesignError(PartialIdError):
    """Gibbs posterior covariance is not positive definite"""


class TruncationError(PartialIdError):
    """Truncated-normal support carries no numerical mass"""


class GenerationError(PartialIdError):
    """A data-generating process could not satisfy its constraints"""


def handle_validation_errors(errors):
    """Raise the collected validation errors in a consistent format"""
    if errors:
        logger.warning(f"Validation failed: {errors}")
        raise ValidationError(errors)


def _is_probability(value):
    return isinstance(value, (int, float)) and not math.isnan(value) and 0.0 <= value <= 1.0


def validate_seed(seed):
    errors = []
    if not isinstance(seed, int) or isinstance(seed, bool):
        errors.append("Seed must be an integer")
    elif seed < 0 or seed >= 2 ** 64:
        errors.append("Seed must be an unsigned 64-bit integer")
    return errors


def validate_levels(levels):
    """Validate credible levels"""
    errors = []
    if not levels:
        errors.append("At least one credible level is required")
    for level in levels:
        if not 0.0 < level < 1.0:
            errors.append(f"Credible level {level} must lie in (0, 1)")
    return errors


def validate_counts_frame(frame):
    """Validate a counts table read from CSV. Returns (line, message) pairs."""
    errors = []
    if list(frame.columns) != COUNTS_COLUMNS:
        return [(1, f"Header must be {','.join(COUNTS_COLUMNS)}")]
    if len(frame) != 4:
        return [(1, f"Expected exactly 4 data rows, found {len(frame)}")]

    for position, (_, row) in enumerate(frame.iterrows()):
        line = position + 2
        values = []
        for column in COUNTS_COLUMNS:
            value = pd.to_numeric(row[column], errors='coerce')
            if pd.isna(value) or float(value) != int(value):
                errors.append((line, f"{column} must be an integer"))
                break
            values.append(int(value))
        else:
            if (values[0], values[1]) != CELL_KEYS[position]:
                errors.append((line, f"Cell must be {CELL_KEYS[position]} in x, z order"))
            if any(v < 0 for v in values[2:]):
                errors.append((line, "Counts must be non-negative"))
    return errors


def validate_rows_frame(frame):
    """Validate unit-level rows. Returns (line, message) pairs."""
    errors = []
    if list(frame.columns) != ROWS_COLUMNS:
        return [(1, f"Header must be {','.join(ROWS_COLUMNS)}")]
    if frame.empty:
        return [(1, "No data rows")]

    for position, (_, row) in enumerate(frame.iterrows()):
        line = position + 2
        for column in ['x', 'z', 'r']:
            if str(row[column]).strip() not in ('0', '1'):
                errors.append((line, f"{column} must be 0 or 1"))
        y = row['y']
        observed = str(row['r']).strip() == '1'
        missing_y = pd.isna(y) or str(y).strip() == ''
        if observed and (missing_y or str(y).strip() not in ('0', '1')):
            errors.append((line, "y must be 0 or 1 when r is 1"))
        if not observed and not missing_y:
            errors.append((line, "y must be empty when r is 0"))
    return errors


def validate_qtable_frame(frame, tolerance=1e-9):
    """Validate a table of observed cell probabilities"""
    errors = []
    if list(frame.columns) != QTABLE_COLUMNS:
        return [(1, f"Header must be {','.join(QTABLE_COLUMNS)}")]
    if len(frame) != 4:
        return [(1, f"Expected exactly 4 data rows, found {len(frame)}")]

    for position, (_, row) in enumerate(frame.iterrows()):
        line = position + 2
        if (int(row['x']), int(row['z'])) != CELL_KEYS[position]:
            errors.append((line, f"Cell must be {CELL_KEYS[position]} in x, z order"))
        probs = [float(row[c]) for c in ['q10', 'q11', 'q0dot']]
        if not all(_is_probability(p) for p in probs):
            errors.append((line, "Probabilities must lie in [0, 1]"))
        elif abs(sum(probs) - 1.0) > tolerance:
            errors.append((line, f"Row sums to {sum(probs)}, not 1"))
    return errors


def validate_assumption_data(data):
    """Validate the fields of an assumption specification"""
    errors = []
    kind = data.get('kind')
    if kind not in ASSUMPTION_KINDS:
        errors.append(f"Kind must be one of {', '.join(ASSUMPTION_KINDS)}")
        return errors

    t_l, t_h = data.get('t_l'), data.get('t_h')
    if kind == 'ThresholdIV' and not (0 < t_l < t_h):
        errors.append("Thresholds must satisfy 0 < t_l < t_h")
    if kind in ('LognormalIV', 'LognormalBetaBias') and not data.get('sigma', 0) > 0:
        errors.append("Sigma must be positive")
    if kind == 'LognormalBetaBias':
        if not data.get('a', 0) > 1 or not data.get('b', 0) > 1:
            errors.append("Beta shape parameters a and b must both exceed 1")

    for name in ('alpha1', 'alpha2', 'alpha3'):
        if name in data and not data[name] > 0:
            errors.append(f"{name} must be positive")
    return errors


def validate_gibbs_data(data):
    """Validate Gibbs sampler settings"""
    errors = []
    iterations = data.get('iterations', 0)
    burn_in = data.get('burn_in', 0)
    if burn_in < 0:
        errors.append("Burn-in must be non-negative")
    if iterations < burn_in + 500:
        errors.append("Iterations must exceed burn-in by at least 500")
    if not data.get('mh_sd', 0) > 0:
        errors.append("Proposal standard deviation must be positive")
    return errors


def validate_dgp_data(data):
    """Validate a data-generating process specification"""
    errors = []
    if data.get('kind') not in DGP_KINDS:
        errors.append(f"DGP kind must be one of {', '.join(DGP_KINDS)}")
    target = data.get('target_missing')
    if target is None or not 0.0 <= target < 1.0:
        errors.append("Target missingness must lie in [0, 1)")
    if data.get('bias_direction') not in BIAS_DIRECTIONS:
        errors.append("Bias direction must be positive or negative")
    if not data.get('n', 0) >= 1:
        errors.append("Sample size must be at least 1")
    rho = data.get('rho', 0.0)
    if not -1.0 < rho < 1.0:
        errors.append("Rho must lie in (-1, 1)")
    return errors


def share_global_options(ctx, **values):
    """Publish top-level flags to every subcommand through the shared context meta"""
    ctx.meta[GLOBAL_OPTIONS_KEY] = {k: v for k, v in values.items() if v is not None}


def global_option(name, default=None):
    """Value of a top-level flag, or `default` when it was not given"""
    ctx = click.get_current_context(silent=True)
    if ctx is None:
        return default
    return ctx.meta.get(GLOBAL_OPTIONS_KEY, {}).get(name, default)


def handle_cli_errors(fn):
    """Decorator turning input and configuration errors into CLI failures"""
    @wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except PartialIdError as e:
            current_app.logger.error(f"{fn.__name__} failed: {e}")
            raise click.ClickException(str(e)) from e
        except OSError as e:
            current_app.logger.error(f"{fn.__name__} failed: {e}")
            raise click.ClickException(f"I/O error: {e}") from e
    return wrapper


def jsonable(value):
    """Plain JSON values: numpy scalars unwrapped, non-finite floats as null"""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def write_json(path, payload):
    """Write `payload` with the app's JSON provider, keys sorted"""
    text = current_app.json.dumps(jsonable(payload), indent=2, sort_keys=True)
    with open(path, 'w', encoding='utf-8') as handle:
        handle.write(text + '\n')


def ensure_output_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


def run_manifest(command, seed, config_path=None, **extra):
    """Provenance of a run: command, seed, config hash and package versions"""
    config_hash = None
    if config_path:
        with open(config_path, 'rb') as handle:
            config_hash = hashlib.sha256(handle.read()).hexdigest()
    versions = {}
    for package in ('flask', 'numpy', 'scipy', 'pandas', 'joblib'):
        try:
            versions[package] = metadata.version(package)
        except metadata.PackageNotFoundError:
            versions[package] = None
    return {'command': command, 'seed': seed, 'config_sha256': config_hash, 'versions': versions, **extra}
