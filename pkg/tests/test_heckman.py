import math

import numpy as np
import pytest
from scipy import special, stats

from app.heckman import (
    SelectionData,
    bivariate_normal_cdf,
    gibbs_step,
    heckman_cell_probs,
    heckman_fit,
    initial_state,
    latent_signs_consistent,
    psi_from_beta,
    rho_mh_step,
    truncated_normal,
)
from app.middleware import TruncationError
from app.models import DgpSpec, GibbsConfig, HeckmanParams
from app.simulation import gen_heckman_data, marginal_missingness

SHORT = GibbsConfig(iterations=600, burn_in=100)


@pytest.fixture
def small_rows():
    return gen_heckman_data(DgpSpec(n=300, target_missing=0.2), seed=31).rows


def test_truncated_normal_respects_bounds():
    gen = np.random.default_rng(0)
    draws = truncated_normal(np.zeros(5000), 1.0, -0.5, 1.5, gen)
    assert np.all((draws > -0.5) & (draws < 1.5))
    expected = stats.truncnorm.mean(-0.5, 1.5)
    assert draws.mean() == pytest.approx(expected, abs=0.02)


def test_truncated_normal_scalar_returns_float():
    value = truncated_normal(0.0, 2.0, 1.0, np.inf, np.random.default_rng(1))
    assert isinstance(value, float)
    assert value > 1.0


def test_truncated_normal_half_line_mean():
    draws = truncated_normal(np.zeros(200_000), 1.0, 0.0, np.inf, np.random.default_rng(2))
    assert draws.mean() == pytest.approx(math.sqrt(2 / math.pi), abs=0.006)


def test_truncated_normal_far_tail():
    gen = np.random.default_rng(3)
    upper = truncated_normal(np.zeros(20_000), 1.0, 8.0, np.inf, gen)
    lower = truncated_normal(np.zeros(20_000), 1.0, -np.inf, -8.0, gen)
    assert np.all(upper >= 8.0) and np.all(lower <= -8.0)
    assert upper.mean() == pytest.approx(stats.truncnorm.mean(8.0, np.inf), abs=0.01)
    assert lower.mean() == pytest.approx(-upper.mean(), abs=0.01)


def test_truncated_normal_errors():
    gen = np.random.default_rng(4)
    with pytest.raises(ValueError):
        truncated_normal(0.0, 1.0, 1.0, 1.0, gen)
    with pytest.raises(ValueError):
        truncated_normal(0.0, 0.0, 0.0, 1.0, gen)
    with pytest.raises(TruncationError):
        truncated_normal(0.0, 1.0, 40.0, np.inf, gen)


@pytest.mark.parametrize('rho', [-0.7, 0.0, 0.3, 0.9])
def test_orthant_probability_at_origin(rho):
    assert bivariate_normal_cdf(0.0, 0.0, rho) == pytest.approx(0.25 + math.asin(rho) / (2 * math.pi), abs=1e-9)


def test_orthant_probability_matches_scipy():
    expected = stats.multivariate_normal(mean=[0, 0], cov=[[1, 0.5], [0.5, 1]]).cdf([0.3, -0.2])
    assert bivariate_normal_cdf(0.3, -0.2, 0.5) == pytest.approx(expected, abs=1e-6)


def test_cell_probs_are_consistent():
    params = HeckmanParams((0.5, 0.3, 0.7), (-0.5, 0.75), -0.5)
    cells, missing = heckman_cell_probs(params)
    assert missing == pytest.approx(marginal_missingness(0.5, 0.3, 0.7))
    for cell in cells:
        assert sum(cell.joint()) == pytest.approx(1.0)
        expected = special.ndtr(-0.5 + 0.75 * cell.index.x)
        assert cell.p_y1 == pytest.approx(expected, abs=1e-8)
        assert cell.omega.omega > cell.q.observed_rate


def test_independent_errors_mean_missing_at_random():
    cells, _ = heckman_cell_probs(HeckmanParams((0.2, 0.3, 0.7), (-0.5, 0.75), 0.0))
    for cell in cells:
        assert cell.omega.omega == pytest.approx(cell.q.observed_rate)


def test_rho_step_stays_inside_unit_interval():
    gen = np.random.default_rng(5)
    rho = 0.95
    for _ in range(200):
        rho, _ = rho_mh_step(rho, lambda r: 0.0, gen, 0.2)
        assert -1.0 < rho < 1.0


def test_gibbs_step_keeps_latent_signs(small_rows):
    data = SelectionData.from_rows(small_rows)
    gen = np.random.default_rng(6)
    state = initial_state(data, gen)
    assert latent_signs_consistent(state, data)
    for _ in range(20):
        state, _ = gibbs_step(state, data, SHORT, gen)
        assert latent_signs_consistent(state, data)
        assert -1.0 < state.params.rho < 1.0


def test_heckman_fit_chain(small_rows):
    chain = heckman_fit(small_rows, SHORT, seed=8)
    assert len(chain) == 500
    assert np.all(np.abs(chain.rho) < 1)
    assert np.all(np.abs(chain.psi) <= 1)
    assert 0.0 <= chain.rho_acceptance <= 1.0
    frame = chain.to_frame()
    assert list(frame.columns) == ['iter', 'gamma0', 'gamma1', 'gamma2', 'beta0', 'beta1', 'rho', 'psi']
    assert frame['iter'].iloc[0] == 100


def test_heckman_fit_is_reproducible(small_rows):
    first = heckman_fit(small_rows, SHORT, seed=9)
    second = heckman_fit(small_rows, SHORT, seed=9)
    assert np.array_equal(first.beta, second.beta)


def test_psi_from_beta():
    assert psi_from_beta([0.0, 0.0])[0] == 0.0
    assert psi_from_beta(np.array([[-0.5, 0.75]]))[0] == pytest.approx(special.ndtr(0.25) - special.ndtr(-0.5))


@pytest.mark.slow
def test_complete_data_matches_probit():
    import statsmodels.api as sm

    spec = DgpSpec(n=5000, target_missing=0.0, rho=0.0)
    rows = gen_heckman_data(spec, seed=77).rows
    chain = heckman_fit(rows, GibbsConfig(iterations=2500, burn_in=500), seed=77)

    design = sm.add_constant(rows['x'].to_numpy(dtype=float))
    probit = sm.Probit(rows['y'].to_numpy(dtype=float), design).fit(disp=0)
    for k in range(2):
        sd = chain.beta[:, k].std()
        assert abs(chain.beta[:, k].mean() - probit.params[k]) < 2 * sd
