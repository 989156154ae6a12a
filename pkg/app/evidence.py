"""Acceptance rates, Bayes factors against the saturated model, and
falsifiability checks."""
import functools
import logging
import math

from app import rng as streams
from app.identification import exact_iv_omega_intervals, exact_iv_posbias_intervals, imperfect_iv_omega_bounds
from app.middleware import BudgetExhausted
from app.models import AcceptanceRate, AcceptanceReport, AssumptionSpec, AttemptBudget
from app.samplers import prior_acceptance_counts, sample_restricted
from app.saturated import DEFAULT_BATCH_SIZE

logger = logging.getLogger(__name__)

MIN_PRIOR_ATTEMPTS = 10 ** 4
DEFAULT_PRIOR_ATTEMPTS = 200_000


@functools.lru_cache(maxsize=None)
def _cached_prior_rate(spec, attempts, seed, batch_size):
    accepted, attempted = prior_acceptance_counts(spec, attempts, streams.child_seed(seed, streams.PRIOR), batch_size)
    rate = AcceptanceRate.binomial(accepted, attempted)
    logger.info(f"Prior acceptance rate for {spec.kind}: {rate.rate:.4f} ± {rate.se:.4f} ({attempted} attempts)")
    return rate


def prior_acceptance_rate(spec, attempts=DEFAULT_PRIOR_ATTEMPTS, seed=0, batch_size=DEFAULT_BATCH_SIZE):
    """Fraction of pure-prior proposals accepted under `spec`, with binomial SE.

    Cached per (spec, attempts, seed, batch size).
    """
    if attempts < MIN_PRIOR_ATTEMPTS:
        raise ValueError(f"At least {MIN_PRIOR_ATTEMPTS} attempts are required, got {attempts}")
    if spec.kind == 'None':
        return AcceptanceRate(1.0, 0.0, attempts, attempts)
    return _cached_prior_rate(spec, int(attempts), int(seed), int(batch_size))


def clear_prior_cache():
    _cached_prior_rate.cache_clear()


def posterior_rate(stratum_accepted, stratum_attempted):
    """Joint acceptance rate as the product of stratum rates, with delta-method SE"""
    rate, rel_var = 1.0, 0.0
    for acc, att in zip(stratum_accepted, stratum_attempted):
        r = acc / att if att else 0.0
        rate *= r
        if r > 0:
            rel_var += (1.0 - r) / (r * att)
    return rate, rate * math.sqrt(rel_var)


def _bayes_factor(prior, post_rate, post_se):
    """prior / posterior with its delta-method SE"""
    bf = prior.rate / post_rate
    rel = 0.0
    if prior.rate > 0:
        rel += (prior.se / prior.rate) ** 2
    rel += (post_se / post_rate) ** 2
    return bf, bf * math.sqrt(rel)


def evaluate_assumption(spec, counts, draws_target, seed, *, prior_rate=None, prior_attempts=DEFAULT_PRIOR_ATTEMPTS,
                        prior_seed=None, qz=None, bf_fail_threshold=10.0, batch_size=DEFAULT_BATCH_SIZE):
    """Posterior draws (None when exhausted) and the acceptance report for `spec`"""
    if spec.kind == 'None':
        budget = AttemptBudget(draws_target, draws_target, bf_fail_threshold)
        draws = sample_restricted(spec, counts, budget, seed, qz=qz, batch_size=batch_size)
        return draws, AcceptanceReport(spec, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, True)

    if prior_rate is None:
        prior_rate = prior_acceptance_rate(spec, prior_attempts, seed if prior_seed is None else prior_seed, batch_size)
    budget = AttemptBudget.from_prior_rate(draws_target, prior_rate.rate, bf_fail_threshold)

    try:
        draws = sample_restricted(spec, counts, budget, seed, qz=qz, batch_size=batch_size)
    except BudgetExhausted as e:
        post, post_se = posterior_rate(e.stratum_accepted, e.stratum_attempted)
        bf, bf_se = _bayes_factor(prior_rate, e.rate_upper, post_se)
        logger.warning(f"{spec.kind}: posterior not computed, Bayes factor at least {bf:.3g}")
        return None, AcceptanceReport(spec, prior_rate.rate, prior_rate.se, post, post_se, bf, bf_se, False)

    post, post_se = posterior_rate(draws.stratum_accepted, draws.stratum_attempted)
    bf, bf_se = _bayes_factor(prior_rate, post, post_se)
    return draws, AcceptanceReport(spec, prior_rate.rate, prior_rate.se, post, post_se, bf, bf_se, True)


def bayes_factor(spec, counts, draws_target, seed, **kwargs):
    """Evidence for the saturated model over `spec` as a ratio of acceptance rates.

    Values below 1 favour the restricted model. A posterior that exhausts its
    budget gives computed=False and a lower-bound Bayes factor.
    """
    return evaluate_assumption(spec, counts, draws_target, seed, **kwargs)[1]


def falsifiability_check(q, t_l=2.0 / 3.0, t_h=1.5):
    """Whether each assumption kind is compatible with observed-data parameters `q`"""
    exact, _ = exact_iv_omega_intervals(q)
    posbias = exact_iv_posbias_intervals(q)
    threshold = [*imperfect_iv_omega_bounds(q[0:2], t_l, t_h), *imperfect_iv_omega_bounds(q[2:4], t_l, t_h)]
    return {
        'None': True,
        'ExactIV': all(i.feasible for i in exact),
        'ThresholdIV': all(i.feasible for i in threshold),
        'LognormalIV': True,
        'ExactIVPosBias': all(i.feasible for i in posbias),
        'LognormalBetaBias': True,
    }


DEFAULT_SPECS = (
    AssumptionSpec('ExactIV'),
    AssumptionSpec('ThresholdIV'),
    AssumptionSpec('LognormalIV'),
    AssumptionSpec('ExactIVPosBias'),
    AssumptionSpec('LognormalBetaBias'),
)
