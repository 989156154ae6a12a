"""Simulation studies: the selection-model and saturated data-generating
processes, the replicated-experiment harness and acceptance-rate sweeps."""
import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy import optimize, special

from app import rng as streams
from app.datasets import rows_to_counts
from app.evidence import DEFAULT_PRIOR_ATTEMPTS, bayes_factor, prior_acceptance_rate
from app.heckman import heckman_cell_probs
from app.identification import odds_ratio, posbias_floor_array
from app.middleware import GenerationError
from app.models import (
    CELLS,
    CellParams,
    CountsTable,
    DgpSpec,
    HeckmanParams,
    MissingCellParam,
    ModelOutcome,
    ObservedCellParams,
    ReplicationResult,
)
from app.pipeline import fit_model
from app.saturated import DEFAULT_BATCH_SIZE, credible_interval, psi_array

logger = logging.getLogger(__name__)

MAX_REDRAWS = 10 ** 5
STUDY_COLUMNS = ['model', 'ar', 'bf_geomean', 'computed', 'coverage', 'width', 'bf_geomean_censored', 'ar_sd']
TRUE_QZ = 0.5


@dataclass(frozen=True, eq=False)
class SimulatedData:
    rows: pd.DataFrame
    y_full: np.ndarray
    cells: tuple
    psi_true: float
    qz: float = TRUE_QZ

    @property
    def counts(self):
        return rows_to_counts(self.rows)

    @property
    def complete_counts(self):
        """Counts as they were before any outcome went missing"""
        cells = []
        for c in CELLS:
            in_cell = (self.rows['x'].to_numpy() == c.x) & (self.rows['z'].to_numpy() == c.z)
            n11 = int(np.sum(self.y_full[in_cell]))
            cells.append((int(in_cell.sum()) - n11, n11, 0))
        return CountsTable(tuple(cells))


def _frame(x, z, r, y_full):
    y = pd.array(np.where(r == 1, y_full, 0), dtype='Int64')
    y[r == 0] = pd.NA
    return pd.DataFrame({'x': x.astype(int), 'z': z.astype(int), 'r': r.astype(int), 'y': y})


def marginal_missingness(gamma0, gamma1, gamma2, p_x=0.5, p_z=0.5):
    total = 0.0
    for c in CELLS:
        weight = (p_x if c.x else 1 - p_x) * (p_z if c.z else 1 - p_z)
        total += weight * special.ndtr(-(gamma0 + gamma1 * c.x + gamma2 * c.z))
    return float(total)


def solve_gamma0(target_missing, gamma1, gamma2, p_x=0.5, p_z=0.5):
    """Selection intercept giving marginal P(R=0) = target_missing"""
    if target_missing <= 0:
        return math.inf
    return optimize.bisect(
        lambda g0: marginal_missingness(g0, gamma1, gamma2, p_x, p_z) - target_missing,
        -40.0, 40.0, xtol=1e-6,
    )


def heckman_truth(spec):
    """Risk difference implied by the outcome equation with P(Z=1) = 0.5"""
    b0, b1, b2 = spec.beta0, spec.beta1, spec.effective_beta2
    treated = special.ndtr(b0 + b1)
    control = (1 - TRUE_QZ) * special.ndtr(b0) + TRUE_QZ * special.ndtr(b0 + b2)
    return float(treated - control)


def gen_heckman_data(spec, seed):
    """Rows from the selection model with correlated latent errors"""
    gen = streams.stream(seed, streams.DGP, 0)
    n, rho, b2 = spec.n, spec.effective_rho, spec.effective_beta2
    gamma0 = solve_gamma0(spec.target_missing, spec.gamma1, spec.gamma2)

    x = gen.integers(0, 2, n)
    z = gen.integers(0, 2, n)
    eps = gen.standard_normal(n)
    nu = rho * eps + math.sqrt(1 - rho * rho) * gen.standard_normal(n)
    y_full = (spec.beta0 + spec.beta1 * x + b2 * z - b2 * x * z + eps > 0).astype(int)
    r = (gamma0 + spec.gamma1 * x + spec.gamma2 * z + nu > 0).astype(int)

    params = HeckmanParams((gamma0, spec.gamma1, spec.gamma2), (spec.beta0, spec.beta1), rho)
    cells, _ = heckman_cell_probs(params, beta2=b2)
    return SimulatedData(_frame(x, z, r, y_full), y_full, cells, heckman_truth(spec))


def _draw_saturated_cells(spec, gen):
    m = spec.target_missing
    split = gen.random(4)
    q = np.column_stack([(1 - m) * (1 - split), (1 - m) * split, np.full(4, m)])
    omega = gen.random(4)
    if spec.iv_holds:
        for x in (0, 1):
            low, high = 2 * x, 2 * x + 1
            if m == 0:
                q[low] = q[high]
                continue
            omega0 = (q[high, 1] + m * omega[high] - q[low, 1]) / m
            if not 0.0 <= omega0 <= 1.0:
                return None
            omega[low] = omega0
    return q, omega


def _constraints_hold(spec, q, omega):
    m = spec.target_missing
    if m > 0:
        floor = posbias_floor_array(q[:, 1], q[:, 2])
        biased = omega > floor if spec.bias_direction == 'positive' else omega < floor
        if not np.all(biased):
            return False
    if spec.iv_holds:
        return True
    p = q[:, 1] + q[:, 2] * omega
    ratios = odds_ratio(p[[1, 3]], p[[0, 2]])
    with np.errstate(invalid='ignore', divide='ignore'):
        return bool(np.all(np.abs(np.log(ratios)) > spec.iv_margin))


def _saturated_population(spec, gen):
    for _ in range(MAX_REDRAWS):
        drawn = _draw_saturated_cells(spec, gen)
        if drawn is not None and _constraints_hold(spec, *drawn):
            return drawn
    raise GenerationError(f"No cell parameters satisfied the constraints in {MAX_REDRAWS} draws")


def gen_saturated_data(spec, seed):
    """Rows from cell parameters drawn under the DGP's assumption flags.

    Every cell has missingness exactly spec.target_missing.
    """
    gen = streams.stream(seed, streams.DGP, 1)
    q, omega = _saturated_population(spec, gen)
    cells = tuple(
        CellParams(c, ObservedCellParams(q[c.position, 0], q[c.position, 1], 1.0 - q[c.position, 0] - q[c.position, 1]),
                   MissingCellParam(float(omega[c.position])))
        for c in CELLS
    )

    n = spec.n
    x = gen.integers(0, 2, n)
    z = gen.integers(0, 2, n)
    joint = np.array([cell.joint() for cell in cells])
    cumulative = np.cumsum(joint, axis=1)
    u = gen.random(n)
    outcome = np.minimum((u[:, None] >= cumulative[2 * x + z]).sum(axis=1), 3)
    r = (outcome < 2).astype(int)
    y_full = np.isin(outcome, (1, 3)).astype(int)
    truth = float(psi_array(q, omega, TRUE_QZ))
    return SimulatedData(_frame(x, z, r, y_full), y_full, cells, truth)


def generate(spec, seed):
    if spec.kind == 'HeckmanDGP':
        return gen_heckman_data(spec, seed)
    return gen_saturated_data(spec, seed)


def run_replicate(dgp, models, replicate, seed, *, draws=1000, level=0.90, prior_rates=None,
                  prior_attempts=DEFAULT_PRIOR_ATTEMPTS, prior_seed=None, bf_fail_threshold=10.0,
                  batch_size=DEFAULT_BATCH_SIZE):
    """Generate one dataset and fit every model to it; failures are recorded, not raised"""
    data = generate(dgp, seed)
    counts, complete = data.counts, data.complete_counts
    prior_rates = prior_rates or {}
    outcomes = []
    for position, model in enumerate(models):
        fit = fit_model(
            model, counts, streams.child_seed(seed, position), rows=data.rows, complete_counts=complete,
            draws=draws, qz=data.qz, prior_rate=prior_rates.get(model.label), prior_attempts=prior_attempts,
            prior_seed=prior_seed, bf_fail_threshold=bf_fail_threshold, batch_size=batch_size,
        )
        ar = bf = None
        if fit.acceptance is not None:
            ar, bf = fit.acceptance.posterior_ar, fit.acceptance.bayes_factor
        if fit.computed:
            interval = credible_interval(fit.psi, level)
            outcomes.append(ModelOutcome(model.label, True, interval.contains(data.psi_true), interval.width, ar, bf))
        else:
            outcomes.append(ModelOutcome(model.label, False, ar=ar, bf=bf))
    return ReplicationResult(replicate, seed, data.psi_true, tuple(outcomes))


def _geomean(values):
    values = [v for v in values if v is not None and v > 0]
    return math.exp(sum(math.log(v) for v in values) / len(values)) if values else math.nan


def _mean(values):
    values = [float(v) for v in values if v is not None]
    return sum(values) / len(values) if values else math.nan


def summarize_replicates(results, models):
    """Table of per-model averages, in model order, summed in replicate order"""
    records = []
    for model in models:
        outcomes = [o for r in results for o in r.outcomes if o.label == model.label]
        computed = [o for o in outcomes if o.computed]
        ars = [o.ar for o in outcomes if o.ar is not None]
        records.append({
            'model': model.label,
            'ar': _mean(ars),
            'bf_geomean': _geomean([o.bf for o in computed]),
            'computed': len(computed) / len(outcomes) if outcomes else math.nan,
            'coverage': _mean([float(o.covered) for o in computed]),
            'width': _mean([o.width for o in computed]),
            'bf_geomean_censored': _geomean([o.bf for o in outcomes]),
            'ar_sd': float(np.std(ars, ddof=1)) if len(ars) > 1 else (0.0 if ars else math.nan),
        })
    return pd.DataFrame(records, columns=STUDY_COLUMNS)


@dataclass(frozen=True, eq=False)
class StudyResult:
    table: pd.DataFrame
    replicates: tuple

    def replicate_frame(self):
        return pd.DataFrame([rec for r in self.replicates for rec in r.to_records()])


def run_study(dgp, models, replicates, seed, *, draws=1000, level=0.90, n_jobs=1,
              prior_attempts=DEFAULT_PRIOR_ATTEMPTS, bf_fail_threshold=10.0, batch_size=DEFAULT_BATCH_SIZE):
    """Replicate the experiment and aggregate coverage, width, AR and BF per model.

    Prior acceptance rates are computed once, before replicates fan out.
    Replicate r uses the r-th seed spawned from `seed`.
    """
    if replicates < 1:
        raise ValueError("At least one replicate is required")

    prior_rates = {
        m.label: prior_acceptance_rate(m.assumption, prior_attempts, seed, batch_size)
        for m in models if m.uses_rejection
    }
    seeds = streams.spawn_seeds(seed, replicates)
    logger.info(f"Running {replicates} replicates of {dgp.kind} with {len(models)} models on {n_jobs} worker(s)")

    results = Parallel(n_jobs=n_jobs)(
        delayed(run_replicate)(
            dgp, models, r, s, draws=draws, level=level, prior_rates=prior_rates, prior_attempts=prior_attempts,
            prior_seed=seed, bf_fail_threshold=bf_fail_threshold, batch_size=batch_size,
        )
        for r, s in enumerate(seeds)
    )
    logger.info(f"Finished {len(results)} replicates")
    return StudyResult(summarize_replicates(results, models), tuple(results))


def prior_ar_sweep(alpha3_grid, specs, attempts, seed, batch_size=DEFAULT_BATCH_SIZE):
    """Prior acceptance rate of each spec as alpha3 varies"""
    if any(not a > 0 for a in alpha3_grid):
        raise ValueError("alpha3 grid values must be positive")
    records = []
    for spec in specs:
        for alpha3 in alpha3_grid:
            rate = prior_acceptance_rate(spec.with_alpha3(alpha3), attempts, seed, batch_size)
            records.append({'spec': spec.kind, 'alpha3': float(alpha3), 'ar': rate.rate, 'se': rate.se})
    return pd.DataFrame(records, columns=['spec', 'alpha3', 'ar', 'se'])


def posterior_ar_sweep(missing_grid, specs, n, seed, *, draws=1000, prior_attempts=DEFAULT_PRIOR_ATTEMPTS,
                       bf_fail_threshold=10.0, batch_size=DEFAULT_BATCH_SIZE):
    """Posterior acceptance rate per spec on saturated-DGP data (IV and positive bias
    true) as missingness grows"""
    records = []
    for i, missing in enumerate(missing_grid):
        dgp = DgpSpec('SaturatedDGP', target_missing=float(missing), iv_holds=True, bias_direction='positive', n=n)
        counts = gen_saturated_data(dgp, streams.child_seed(seed, i)).counts
        for j, spec in enumerate(specs):
            report = bayes_factor(
                spec, counts, draws, streams.child_seed(seed, i, j), prior_attempts=prior_attempts, prior_seed=seed,
                bf_fail_threshold=bf_fail_threshold, batch_size=batch_size,
            )
            records.append({
                'spec': spec.kind, 'missing': float(missing), 'ar': report.posterior_ar,
                'se': report.posterior_ar_se, 'bf': report.bayes_factor, 'computed': report.computed,
            })
    return pd.DataFrame(records, columns=['spec', 'missing', 'ar', 'se', 'bf', 'computed'])
