"""Rejection samplers for the restricted priors over the saturated posterior.

Proposals are generated in fixed-size blocks, one counter stream per
(stratum, block), and accepted draws are kept in proposal order. The two
treatment strata have independent parameters and are sampled separately;
a joint draw pairs the i-th accepted draw of each stratum.
"""
import logging
import math
from typing import NamedTuple

import numpy as np
from scipy import stats

from app import rng as streams
from app.identification import (
    dirac_omega0,
    exact_iv_arrays,
    exact_iv_posbias_arrays,
    odds_ratio,
    posbias_floor_array,
)
from app.middleware import BudgetExhausted
from app.models import AssumptionSpec, PosteriorDraws
from app.saturated import (
    DEFAULT_BATCH_SIZE,
    conjugate_update,
    dirichlet_draws,
    qz_draws,
    sample_saturated_posterior,
)

logger = logging.getLogger(__name__)

DIRAC_KINDS = ('ExactIV', 'ExactIVPosBias')


class StratumProposals(NamedTuple):
    """One block of proposals for a stratum's (z=0, z=1) cells"""
    q0: np.ndarray
    q1: np.ndarray
    omega0: np.ndarray
    omega1: np.ndarray
    accept: np.ndarray

    def take(self, idx):
        return StratumProposals(self.q0[idx], self.q1[idx], self.omega0[idx], self.omega1[idx], self.accept[idx])


def lognormal_acceptance(log_or, sigma):
    """phi(log OR; 0, sigma) relative to its mode; 0 where the OR is undefined"""
    prob = np.exp(-np.square(log_or) / (2.0 * sigma ** 2))
    return np.nan_to_num(prob, nan=0.0)


def bias_shift(omega, q11, q0dot):
    """Missing-data bias mapped onto (0, 1): (omega - observed rate + 1) / 2"""
    return (omega - posbias_floor_array(q11, q0dot) + 1.0) / 2.0


def betabias_acceptance(log_or, h0, h1, sigma, a, b):
    """Lognormal OR penalty times the two cells' Beta(a, b) bias densities, relative to their modes"""
    mode = (a - 1.0) / (a + b - 2.0)
    peak = stats.beta.pdf(mode, a, b)
    bias = stats.beta.pdf(h0, a, b) * stats.beta.pdf(h1, a, b) / peak ** 2
    return lognormal_acceptance(log_or, sigma) * np.nan_to_num(bias, nan=0.0)


def propose_stratum(spec, alpha0, alpha1, size, gen):
    """Draw `size` proposals for one stratum and decide acceptance"""
    q0 = dirichlet_draws(alpha0, size, gen)
    q1 = dirichlet_draws(alpha1, size, gen)
    a, m0 = q0[:, 1], q0[:, 2]
    b, m1 = q1[:, 1], q1[:, 2]
    omega1 = gen.random(size)

    if spec.kind in DIRAC_KINDS:
        omega0 = dirac_omega0(a, b, m0, m1, omega1)
        if spec.kind == 'ExactIV':
            lo, hi = exact_iv_arrays(a, b, m0, m1)
            floor_ok = True
        else:
            lo, hi = exact_iv_posbias_arrays(a, b, m0, m1, posbias_floor_array(b, m1))
            floor_ok = omega0 >= posbias_floor_array(a, m0)
        accept = (np.isfinite(omega0) & (omega0 >= 0.0) & (omega0 <= 1.0)
                  & (omega1 >= lo) & (omega1 <= hi) & floor_ok)
        omega0 = np.where(accept, omega0, 0.0)
        return StratumProposals(q0, q1, omega0, omega1, accept)

    omega0 = gen.random(size)
    if spec.kind == 'None':
        return StratumProposals(q0, q1, omega0, omega1, np.ones(size, dtype=bool))

    ratio = odds_ratio(b + m1 * omega1, a + m0 * omega0)
    if spec.kind == 'ThresholdIV':
        with np.errstate(invalid='ignore'):
            accept = (ratio > spec.t_l) & (ratio < spec.t_h)
        return StratumProposals(q0, q1, omega0, omega1, accept)

    with np.errstate(invalid='ignore', divide='ignore'):
        log_or = np.log(ratio)
    u = gen.random(size)
    if spec.kind == 'LognormalIV':
        prob = lognormal_acceptance(log_or, spec.sigma)
    else:
        h0 = bias_shift(omega0, a, m0)
        h1 = bias_shift(omega1, b, m1)
        prob = betabias_acceptance(log_or, h0, h1, spec.sigma, spec.a, spec.b)
    return StratumProposals(q0, q1, omega0, omega1, u < prob)


def prior_acceptance_counts(spec, attempts, seed, batch_size=DEFAULT_BATCH_SIZE):
    """Accepted joint prior proposals out of `attempts`.

    An attempt proposes both strata and is accepted when both accept.
    """
    alpha = spec.hyper.as_array()
    accepted = 0
    for block, start, size in streams.blocks(attempts, batch_size):
        joint = np.ones(size, dtype=bool)
        for x in (0, 1):
            joint &= propose_stratum(spec, alpha, alpha, size, streams.stream(seed, streams.PRIOR, x, block)).accept
        accepted += int(joint.sum())
    return accepted, attempts


def _run_stratum(spec, alpha0, alpha1, budget, seed, x, batch_size):
    parts = []
    accepted = attempted = block = 0
    while accepted < budget.required and attempted < budget.max_attempts:
        size = min(batch_size, budget.max_attempts - attempted)
        proposals = propose_stratum(spec, alpha0, alpha1, size, streams.stream(seed, streams.STRATUM, x, block))
        idx = np.flatnonzero(proposals.accept)
        need = budget.required - accepted
        if len(idx) >= need:
            idx = idx[:need]
            attempted += int(idx[-1]) + 1
        else:
            attempted += size
        parts.append(proposals.take(idx))
        accepted += len(idx)
        block += 1
    return parts, accepted, attempted


def sample_restricted(spec, counts, budget, seed, qz=None, batch_size=DEFAULT_BATCH_SIZE):
    """Accepted posterior draws under `spec`.

    Raises BudgetExhausted when a stratum misses `budget.required` within
    `budget.max_attempts`, or when the implied joint acceptance rate is
    below required / max_attempts.
    """
    hyper = conjugate_update(spec.hyper, counts)
    if spec.kind == 'None':
        return sample_saturated_posterior(hyper, budget.required, seed, counts.zcounts, qz, batch_size)

    alphas = np.array([h.as_tuple() for h in hyper])
    results = [_run_stratum(spec, alphas[2 * x], alphas[2 * x + 1], budget, seed, x, batch_size) for x in (0, 1)]
    stratum_accepted = tuple(r[1] for r in results)
    stratum_attempted = tuple(r[2] for r in results)

    exhausted = any(acc < budget.required for acc in stratum_accepted)
    joint_rate = math.prod(acc / att for acc, att in zip(stratum_accepted, stratum_attempted))
    if exhausted or joint_rate < budget.required / budget.max_attempts:
        error = BudgetExhausted(spec.kind, budget.required, budget.max_attempts, stratum_accepted, stratum_attempted)
        logger.warning(f"Budget exhausted: {error}")
        raise error

    n = budget.required
    q = np.empty((n, 4, 3))
    omega = np.empty((n, 4))
    for x, (parts, _, _) in enumerate(results):
        q[:, 2 * x] = np.concatenate([p.q0 for p in parts])
        q[:, 2 * x + 1] = np.concatenate([p.q1 for p in parts])
        omega[:, 2 * x] = np.concatenate([p.omega0 for p in parts])
        omega[:, 2 * x + 1] = np.concatenate([p.omega1 for p in parts])

    attempted = max(n, math.ceil(n / joint_rate))
    logger.info(f"{spec.kind}: accepted {n} of {stratum_attempted} per stratum (joint rate {joint_rate:.4f})")
    return PosteriorDraws(
        q=q, omega=omega, qz=qz_draws(n, seed, counts.zcounts, qz, batch_size),
        accepted=n, attempted=attempted, seed=seed,
        stratum_accepted=stratum_accepted, stratum_attempted=stratum_attempted,
    )


def sample_exact_iv(hyper, counts, budget, seed, **kwargs):
    return sample_restricted(AssumptionSpec('ExactIV', hyper=hyper), counts, budget, seed, **kwargs)


def sample_threshold_iv(hyper, counts, t_l, t_h, budget, seed, **kwargs):
    spec = AssumptionSpec('ThresholdIV', t_l=t_l, t_h=t_h, hyper=hyper)
    return sample_restricted(spec, counts, budget, seed, **kwargs)


def sample_lognormal_iv(hyper, counts, sigma, budget, seed, **kwargs):
    return sample_restricted(AssumptionSpec('LognormalIV', sigma=sigma, hyper=hyper), counts, budget, seed, **kwargs)


def sample_exact_iv_posbias(hyper, counts, budget, seed, **kwargs):
    return sample_restricted(AssumptionSpec('ExactIVPosBias', hyper=hyper), counts, budget, seed, **kwargs)


def sample_lognormal_betabias(hyper, counts, sigma, a, b, budget, seed, **kwargs):
    spec = AssumptionSpec('LognormalBetaBias', sigma=sigma, a=a, b=b, hyper=hyper)
    return sample_restricted(spec, counts, budget, seed, **kwargs)
