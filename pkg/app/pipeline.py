"""Fit any configured model to one dataset and summarize the risk difference."""
import logging
from dataclasses import dataclass

import numpy as np

from app import rng as streams
from app.datasets import counts_to_rows
from app.evidence import DEFAULT_PRIOR_ATTEMPTS, evaluate_assumption
from app.heckman import heckman_fit
from app.middleware import DegenerateDesignError, TruncationError
from app.models import AnalysisReport, ModelReport
from app.saturated import DEFAULT_BATCH_SIZE, credible_intervals, mar_estimate, oracle_estimate, prob_positive

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ModelFit:
    model: object
    psi: np.ndarray = None
    draws: object = None
    chain: object = None
    acceptance: object = None
    error: str = None

    @property
    def computed(self):
        return self.psi is not None

    def export_frame(self):
        if self.draws is not None:
            return self.draws.to_frame()
        if self.chain is not None:
            return self.chain.to_frame()
        return None


def fit_model(model, counts, seed, *, rows=None, complete_counts=None, draws=1000, qz=None, prior_rate=None,
              prior_attempts=DEFAULT_PRIOR_ATTEMPTS, prior_seed=None, bf_fail_threshold=10.0,
              batch_size=DEFAULT_BATCH_SIZE):
    """Fit `model` and return its risk-difference draws.

    Exhausted budgets and degenerate Gibbs designs come back as uncomputed
    fits rather than errors.
    """
    if model.kind == 'MAR':
        fitted = mar_estimate(counts, draws, seed, qz=qz, batch_size=batch_size)
        return ModelFit(model, psi=fitted.psi(), draws=fitted)

    if model.kind == 'Oracle':
        if complete_counts is None:
            raise ValueError("The Oracle model needs the complete (pre-missingness) counts")
        fitted = oracle_estimate(complete_counts, draws, seed, qz=qz, batch_size=batch_size)
        return ModelFit(model, psi=fitted.psi(), draws=fitted)

    if model.kind == 'Heckman':
        unit_rows = rows if rows is not None else counts_to_rows(counts)
        try:
            chain = heckman_fit(unit_rows, model.gibbs, seed)
        except (DegenerateDesignError, TruncationError) as e:
            logger.warning(f"{model.label}: Gibbs sampler failed: {e}")
            return ModelFit(model, error=str(e))
        return ModelFit(model, psi=chain.psi, chain=chain)

    fitted, report = evaluate_assumption(
        model.assumption, counts, draws, seed, prior_rate=prior_rate, prior_attempts=prior_attempts,
        prior_seed=prior_seed, qz=qz, bf_fail_threshold=bf_fail_threshold, batch_size=batch_size,
    )
    if fitted is None:
        return ModelFit(model, acceptance=report, error='budget exhausted')
    return ModelFit(model, psi=fitted.psi(), draws=fitted, acceptance=report)


def summarize_fit(fit, levels):
    if not fit.computed:
        return ModelReport(fit.model.label, fit.model.kind, False, acceptance=fit.acceptance)
    return ModelReport(
        label=fit.model.label,
        kind=fit.model.kind,
        computed=True,
        intervals=credible_intervals(fit.psi, levels),
        mean=float(np.mean(fit.psi)),
        prob_positive=prob_positive(fit.psi),
        acceptance=fit.acceptance,
    )


def run_analysis(config, counts, rows=None, *, prior_attempts=DEFAULT_PRIOR_ATTEMPTS, bf_fail_threshold=10.0,
                 batch_size=DEFAULT_BATCH_SIZE):
    """Fit every configured model; model i uses a seed derived from (seed, i)"""
    fits = []
    for position, model in enumerate(config.models):
        logger.info(f"Fitting {model.label} ({model.kind})")
        fits.append(fit_model(
            model, counts, streams.child_seed(config.seed, position), rows=rows, draws=config.draws, qz=config.qz,
            prior_attempts=prior_attempts, prior_seed=config.seed, bf_fail_threshold=bf_fail_threshold,
            batch_size=batch_size,
        ))
    report = AnalysisReport(tuple(summarize_fit(f, config.levels) for f in fits), counts, config.seed)
    return report, fits
