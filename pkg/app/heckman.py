"""Bayesian selection model for a binary outcome with latent bivariate normal
errors, fitted by data augmentation Gibbs sampling."""
import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import integrate, linalg, special

from app import rng as streams
from app.middleware import DegenerateDesignError, TruncationError
from app.models import (
    CELLS,
    CellParams,
    GibbsConfig,
    HeckmanChain,
    HeckmanParams,
    HeckmanState,
    MissingCellParam,
    ObservedCellParams,
)

logger = logging.getLogger(__name__)

TAIL_CUTOFF = 5.0
MIN_MASS = 1e-300
LOG_MIN_MASS = math.log(MIN_MASS)


def _exponential_tail(a, b, gen):
    """Robert's exponential-proposal rejection for the standard normal on (a, b), a > 0"""
    out = np.empty(a.shape)
    pending = np.arange(a.size)
    lam = (a + np.sqrt(a * a + 4.0)) / 2.0
    while pending.size:
        x = a[pending] + gen.standard_exponential(pending.size) / lam[pending]
        u = gen.random(pending.size)
        ok = (u <= np.exp(-0.5 * (x - lam[pending]) ** 2)) & (x < b[pending])
        out[pending[ok]] = x[ok]
        pending = pending[~ok]
    return out


def truncated_normal(mean, sd, lo, hi, gen):
    """Exact draws from N(mean, sd^2) restricted to (lo, hi), elementwise.

    Inverse CDF in the body of the distribution, exponential rejection once
    the near bound is more than TAIL_CUTOFF standard deviations out.
    """
    mean, sd, lo, hi = (np.asarray(v, dtype=float) for v in np.broadcast_arrays(mean, sd, lo, hi))
    scalar = mean.ndim == 0
    mean, sd, lo, hi = (np.atleast_1d(v) for v in (mean, sd, lo, hi))
    if np.any(sd <= 0):
        raise ValueError("Standard deviation must be positive")
    if np.any(~(lo < hi)):
        raise ValueError("Truncation bounds must satisfy lo < hi")

    alpha = (lo - mean) / sd
    beta = (hi - mean) / sd
    # Reflect so the near bound is on the right of zero
    flip = beta <= 0
    a = np.where(flip, -beta, alpha)
    b = np.where(flip, -alpha, beta)

    z = np.empty(a.shape)
    tail = a > TAIL_CUTOFF
    if np.any(tail):
        log_mass = special.log_ndtr(-a[tail])
        if np.any(log_mass < LOG_MIN_MASS):
            raise TruncationError("Truncation interval carries no numerical mass")
        z[tail] = _exponential_tail(a[tail], b[tail], gen)

    body = ~tail
    if np.any(body):
        a_body, b_body = a[body], b[body]
        u = gen.random(a_body.size)
        right = a_body >= 0
        # Survival-function form keeps precision for intervals right of zero
        s_lo, s_hi = special.ndtr(-a_body), special.ndtr(-b_body)
        c_lo, c_hi = special.ndtr(a_body), special.ndtr(b_body)
        mass = np.where(right, s_lo - s_hi, c_hi - c_lo)
        if np.any(mass < MIN_MASS):
            raise TruncationError("Truncation interval carries no numerical mass")
        z_right = -special.ndtri(s_lo - u * (s_lo - s_hi))
        z_mid = special.ndtri(c_lo + u * (c_hi - c_lo))
        z[body] = np.clip(np.where(right, z_right, z_mid), a_body, b_body)

    draws = mean + sd * np.where(flip, -z, z)
    return float(draws[0]) if scalar else draws


@dataclass(frozen=True, eq=False)
class SelectionData:
    """Design matrices of the selection (1, X, Z) and outcome (1, X) equations"""
    selection: np.ndarray
    outcome: np.ndarray
    observed: np.ndarray
    y: np.ndarray

    @classmethod
    def from_rows(cls, rows):
        x = rows['x'].to_numpy(dtype=float)
        z = rows['z'].to_numpy(dtype=float)
        observed = rows['r'].to_numpy(dtype=int) == 1
        ones = np.ones(len(rows))
        y = pd.to_numeric(rows['y'], errors='coerce').to_numpy(dtype=float, na_value=np.nan)[observed]
        return cls(np.column_stack([ones, x, z]), np.column_stack([ones, x]), observed, y)

    @property
    def n(self):
        return len(self.observed)

    @property
    def observed_outcome(self):
        return self.outcome[self.observed]


def _mvn_from_precision(precision, rhs, gen):
    """Draw from N(P^-1 rhs, P^-1) through a Cholesky factor of the precision"""
    try:
        factor = linalg.cholesky(precision, lower=True)
    except linalg.LinAlgError as e:
        raise DegenerateDesignError(f"Posterior covariance is not positive definite: {e}") from e
    mean = linalg.cho_solve((factor, True), rhs)
    return mean + linalg.solve_triangular(factor.T, gen.standard_normal(len(rhs)), lower=False)


def latent_loglik(rho, selection_resid, outcome_resid):
    """Bivariate normal log-likelihood in rho of the observed units' latent residuals"""
    one_minus = 1.0 - rho * rho
    quad = (np.sum(selection_resid ** 2) - 2.0 * rho * np.sum(selection_resid * outcome_resid)
            + np.sum(outcome_resid ** 2))
    return -0.5 * len(selection_resid) * math.log(one_minus) - quad / (2.0 * one_minus)


def rho_mh_step(rho, loglik, gen, mh_sd):
    """Random-walk Metropolis step for rho under a Uniform(-1, 1) prior.

    Returns (rho, accepted).
    """
    proposal = rho + mh_sd * gen.standard_normal()
    u = gen.random()
    if not -1.0 < proposal < 1.0:
        return rho, False
    if math.log(u) < loglik(proposal) - loglik(rho):
        return proposal, True
    return rho, False


def gibbs_step(state, data, config, gen):
    """One sweep: selection latents, outcome latents, gamma, beta, then rho.

    Returns (state, rho_accepted).
    """
    gamma = np.array(state.params.gamma)
    beta = np.array(state.params.beta)
    rho = state.params.rho
    scale = math.sqrt(1.0 - rho * rho)
    obs = data.observed
    C1, C2o = data.selection, data.observed_outcome

    mu_r = C1 @ gamma
    mu_y = C2o @ beta
    rstar = np.empty(data.n)
    rstar[~obs] = truncated_normal(mu_r[~obs], 1.0, -np.inf, 0.0, gen)
    rstar[obs] = truncated_normal(mu_r[obs] + rho * (state.ystar - mu_y), scale, 0.0, np.inf, gen)

    cond_mean = mu_y + rho * (rstar[obs] - mu_r[obs])
    lo = np.where(data.y == 1, 0.0, -np.inf)
    hi = np.where(data.y == 1, np.inf, 0.0)
    ystar = truncated_normal(cond_mean, scale, lo, hi, gen)

    inv_B1 = np.linalg.inv(np.asarray(config.prior_cov_B1))
    weights = np.where(obs, 1.0 / (1.0 - rho * rho), 1.0)
    target = rstar.copy()
    target[obs] -= rho * (ystar - mu_y)
    weighted = C1 * weights[:, None]
    precision = inv_B1 + weighted.T @ C1
    rhs = inv_B1 @ np.asarray(config.prior_mean_b1) + weighted.T @ target
    gamma = _mvn_from_precision(precision, rhs, gen)

    inv_B2 = np.linalg.inv(np.asarray(config.prior_cov_B2))
    selection_resid = rstar[obs] - C1[obs] @ gamma
    precision = inv_B2 + C2o.T @ C2o / (1.0 - rho * rho)
    rhs = inv_B2 @ np.asarray(config.prior_mean_b2) + C2o.T @ (ystar - rho * selection_resid) / (1.0 - rho * rho)
    beta = _mvn_from_precision(precision, rhs, gen)

    outcome_resid = ystar - C2o @ beta
    rho, accepted = rho_mh_step(rho, lambda r: latent_loglik(r, selection_resid, outcome_resid), gen, config.mh_sd)

    params = HeckmanParams(tuple(gamma), tuple(beta), rho)
    return HeckmanState(params, rstar, ystar), accepted


def latent_signs_consistent(state, data):
    """r* > 0 exactly for observed units and y* > 0 exactly where Y = 1"""
    return bool(np.all((state.rstar > 0) == data.observed) and np.all((state.ystar > 0) == (data.y == 1)))


def initial_state(data, gen):
    """Coefficients and rho at zero, latents from their truncated priors"""
    r_lo = np.where(data.observed, 0.0, -np.inf)
    r_hi = np.where(data.observed, np.inf, 0.0)
    y_lo = np.where(data.y == 1, 0.0, -np.inf)
    y_hi = np.where(data.y == 1, np.inf, 0.0)
    rstar = truncated_normal(np.zeros(data.n), 1.0, r_lo, r_hi, gen)
    ystar = truncated_normal(np.zeros(len(data.y)), 1.0, y_lo, y_hi, gen)
    return HeckmanState(HeckmanParams(), rstar, ystar)


def psi_from_beta(beta):
    """Risk difference implied by the outcome equation"""
    beta = np.atleast_2d(beta)
    return special.ndtr(beta[:, 0] + beta[:, 1]) - special.ndtr(beta[:, 0])


def heckman_fit(rows, config=None, seed=0):
    """Run the Gibbs sampler on unit rows (x, z, r, y) and keep the post-burn-in chain"""
    config = config or GibbsConfig()
    data = SelectionData.from_rows(rows)
    gen = streams.stream(seed, streams.GIBBS)
    state = initial_state(data, gen)

    kept = config.kept
    gamma = np.empty((kept, 3))
    beta = np.empty((kept, 2))
    rho = np.empty(kept)
    accepted = 0
    for it in range(config.iterations):
        state, moved = gibbs_step(state, data, config, gen)
        accepted += moved
        k = it - config.burn_in
        if k >= 0:
            gamma[k] = state.params.gamma
            beta[k] = state.params.beta
            rho[k] = state.params.rho
        if (it + 1) % 1000 == 0:
            logger.debug(f"Gibbs iteration {it + 1}: rho acceptance {accepted / (it + 1):.3f}")

    rate = accepted / config.iterations
    logger.info(f"Heckman fit: {kept} kept draws, rho acceptance {rate:.3f} (seed {seed})")
    return HeckmanChain(gamma, beta, rho, psi_from_beta(beta), rate, seed, config.burn_in)


def bivariate_normal_cdf(h, k, rho):
    """P(U < h, V < k) for standard bivariate normal with correlation rho"""
    if rho == 0.0:
        return float(special.ndtr(h) * special.ndtr(k))
    scale = math.sqrt(1.0 - rho * rho)

    def integrand(u):
        return math.exp(-0.5 * u * u) / math.sqrt(2.0 * math.pi) * special.ndtr((k - rho * u) / scale)

    value, _ = integrate.quad(integrand, -np.inf, h, epsabs=1e-10, epsrel=1e-10, limit=200)
    return float(value)


def heckman_cell_probs(params, beta2=0.0, p_z=0.5, p_x=0.5):
    """Exact cell parameters implied by the selection model.

    Returns the four CellParams and the marginal probability of missingness.
    The outcome index is beta0 + beta1 x + beta2 z - beta2 x z.
    """
    gamma, (beta0, beta1), rho = params.gamma, params.beta, params.rho
    cells = []
    missing = 0.0
    for c in CELLS:
        h = gamma[0] + gamma[1] * c.x + gamma[2] * c.z
        k = beta0 + beta1 * c.x + beta2 * c.z - beta2 * c.x * c.z
        p_r1 = float(special.ndtr(h))
        p_y1 = float(special.ndtr(k))
        both = min(bivariate_normal_cdf(h, k, rho), p_r1, p_y1)
        q0dot = 1.0 - p_r1
        omega = (p_y1 - both) / q0dot if q0dot > 0 else 0.0
        q = ObservedCellParams(p_r1 - both, both, 1.0 - (p_r1 - both) - both)
        cells.append(CellParams(c, q, MissingCellParam(min(max(omega, 0.0), 1.0))))
        weight = (p_x if c.x else 1.0 - p_x) * (p_z if c.z else 1.0 - p_z)
        missing += weight * q0dot
    return tuple(cells), missing
