"""Saturated model: conjugate Dirichlet posterior, the risk difference and its
nonparametric bounds, credible intervals and the missing-at-random baseline."""
import logging

import numpy as np

from app import rng as streams
from app.models import (
    CELLS,
    DirichletHyper,
    IntervalSummary,
    PosteriorDraws,
)

logger = logging.getLogger(__name__)

DEFAULT_BATCH_SIZE = 8192


def conjugate_update(prior, counts):
    """Per-cell posterior pseudo-counts (a1+n10, a2+n11, a3+n0dot)"""
    return tuple(
        DirichletHyper(prior.a1 + n10, prior.a2 + n11, prior.a3 + n0dot)
        for n10, n11, n0dot in counts.cells
    )


def dirichlet_draws(alpha, size, rng):
    """Dirichlet draws by normalized Gamma variates.

    A zero pseudo-count gives an identically zero component.
    """
    gammas = rng.standard_gamma(np.asarray(alpha, dtype=float), size=(size, len(alpha)))
    return gammas / gammas.sum(axis=1, keepdims=True)


def qz_draws(ndraws, seed, zcounts=(0, 0), qz=None, batch_size=DEFAULT_BATCH_SIZE):
    """Draws of P(Z=1): fixed when `qz` is given, else Beta(1 + n_z1, 1 + n_z0)"""
    if qz is not None:
        return np.full(ndraws, float(qz))
    out = np.empty(ndraws)
    n_z0, n_z1 = zcounts
    for block, start, size in streams.blocks(ndraws, batch_size):
        out[start:start + size] = streams.stream(seed, streams.QZ, block).beta(1 + n_z1, 1 + n_z0, size)
    return out


def sample_saturated_posterior(hyper, ndraws, seed, zcounts=(0, 0), qz=None,
                               batch_size=DEFAULT_BATCH_SIZE):
    """Independent draws from the saturated posterior.

    q ~ Dirichlet(hyper) and omega ~ Uniform(0, 1) independently per cell.
    """
    if ndraws < 1:
        raise ValueError("ndraws must be at least 1")
    alphas = np.array([h.as_tuple() for h in hyper], dtype=float)

    q = np.empty((ndraws, 4, 3))
    omega = np.empty((ndraws, 4))
    for block, start, size in streams.blocks(ndraws, batch_size):
        for c in CELLS:
            gen = streams.stream(seed, streams.SATURATED, c.position, block)
            q[start:start + size, c.position] = dirichlet_draws(alphas[c.position], size, gen)
            omega[start:start + size, c.position] = gen.random(size)

    draws = PosteriorDraws(
        q=q, omega=omega, qz=qz_draws(ndraws, seed, zcounts, qz, batch_size),
        accepted=ndraws, attempted=ndraws, seed=seed,
        stratum_accepted=(ndraws, ndraws), stratum_attempted=(ndraws, ndraws),
    )
    logger.info(f"Saturated posterior: {ndraws} draws (seed {seed})")
    return draws


def cell_success(q, omega):
    """P(Y=1 | x, z) = q11 + q0dot * omega, elementwise over cells"""
    return q[..., 1] + q[..., 2] * omega


def psi_array(q, omega, qz):
    """Risk difference for arrays of draws, by the law of total probability over Z"""
    p = cell_success(q, omega)
    qz = np.asarray(qz, dtype=float)
    treated = qz * p[..., 3] + (1.0 - qz) * p[..., 2]
    control = qz * p[..., 1] + (1.0 - qz) * p[..., 0]
    return treated - control


def _stack(cells):
    q = np.array([c.q.as_array() for c in sorted(cells, key=lambda c: c.index)])
    omega = np.array([c.omega.omega for c in sorted(cells, key=lambda c: c.index)])
    return q, omega


def psi(draw, qz):
    """Risk difference P(Y=1|X=1) - P(Y=1|X=0) for one draw of four cells"""
    q, omega = _stack(draw)
    return float(psi_array(q, omega, qz.qz))


def psi_bounds(q, qz):
    """Nonparametric bounds on the risk difference given observed-data parameters.

    Treated cells' omega at 1 and control cells' at 0 gives the upper end,
    the reverse pattern the lower.
    """
    q_array = np.array([cell.as_array() for cell in q])
    upper = float(psi_array(q_array, np.array([0.0, 0.0, 1.0, 1.0]), qz.qz))
    lower = float(psi_array(q_array, np.array([1.0, 1.0, 0.0, 0.0]), qz.qz))
    return min(lower, upper), max(lower, upper)


def credible_interval(samples, level):
    """Equal-tailed interval with linear interpolation between order statistics"""
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("Cannot summarize an empty sample")
    if not 0.0 < level < 1.0:
        raise ValueError(f"Level must lie in (0, 1), got {level}")
    tail = (1.0 - level) / 2.0
    lower, upper = np.quantile(samples, [tail, 1.0 - tail], method='linear')
    return IntervalSummary(mean=float(samples.mean()), lower=float(lower), upper=float(upper), level=level)


def credible_intervals(samples, levels):
    return tuple(credible_interval(samples, level) for level in sorted(levels))


def prob_positive(samples):
    """Posterior probability that the risk difference is positive"""
    return float(np.mean(np.asarray(samples) > 0))


def mar_estimate(counts, ndraws, seed, qz=None, batch_size=DEFAULT_BATCH_SIZE):
    """Missing-at-random fit: missing rows share the observed-rows success rate.

    Reports the plug-in contrast of observed-outcome rates, n11 / (n10 + n11)
    per cell, averaged over the Z margin. On the second worked example this
    is about 0.170, not the 0.103 sometimes quoted for it.

    Each cell's P(Y=1|x,z) ~ Beta(1 + n11, 1 + n10); the draw is stored as
    q = (1 - theta, theta, 0) with omega = theta.
    """
    if ndraws < 1:
        raise ValueError("ndraws must be at least 1")
    theta = np.empty((ndraws, 4))
    for block, start, size in streams.blocks(ndraws, batch_size):
        for c in CELLS:
            n10, n11, _ = counts.cells[c.position]
            gen = streams.stream(seed, streams.MAR, c.position, block)
            theta[start:start + size, c.position] = gen.beta(1 + n11, 1 + n10, size)

    q = np.stack([1.0 - theta, theta, np.zeros_like(theta)], axis=-1)
    return PosteriorDraws(
        q=q, omega=theta.copy(), qz=qz_draws(ndraws, seed, counts.zcounts, qz, batch_size),
        accepted=ndraws, attempted=ndraws, seed=seed,
        stratum_accepted=(ndraws, ndraws), stratum_attempted=(ndraws, ndraws),
    )


def oracle_estimate(complete_counts, ndraws, seed, qz=None, batch_size=DEFAULT_BATCH_SIZE):
    """Saturated fit to data observed before any missingness"""
    if any(cell[2] for cell in complete_counts.cells):
        raise ValueError("Oracle counts must not contain missing rows")
    return mar_estimate(complete_counts, ndraws, seed, qz=qz, batch_size=batch_size)
