import numpy as np
import pytest

from app.models import CELLS, CellParams, CountsTable, DirichletHyper, MissingCellParam, ZMarginParam
from app.saturated import (
    conjugate_update,
    credible_interval,
    credible_intervals,
    mar_estimate,
    oracle_estimate,
    prob_positive,
    psi,
    psi_array,
    psi_bounds,
    qz_draws,
    sample_saturated_posterior,
)
from tests.conftest import EXAMPLE1_OMEGA


def test_conjugate_update_adds_counts_per_cell():
    counts = CountsTable(((3, 4, 5), (0, 0, 0), (1, 2, 3), (7, 0, 1)))
    posterior = conjugate_update(DirichletHyper(), counts)
    assert posterior[0].as_tuple() == (4.0, 5.0, 6.0)
    assert posterior[1].as_tuple() == (1.0, 1.0, 1.0)
    assert posterior[3].as_tuple() == (8.0, 1.0, 2.0)


def test_saturated_posterior_shapes_and_support():
    hyper = conjugate_update(DirichletHyper(), CountsTable(((5, 5, 2),) * 4))
    draws = sample_saturated_posterior(hyper, 500, seed=7, zcounts=(24, 24))
    assert draws.q.shape == (500, 4, 3)
    assert np.allclose(draws.q.sum(axis=2), 1.0)
    assert np.all((draws.omega >= 0) & (draws.omega <= 1))
    assert np.all((draws.qz > 0) & (draws.qz < 1))
    assert draws.accepted == draws.attempted == 500


def test_saturated_posterior_is_reproducible():
    hyper = (DirichletHyper(),) * 4
    first = sample_saturated_posterior(hyper, 300, seed=99, batch_size=128)
    second = sample_saturated_posterior(hyper, 300, seed=99, batch_size=128)
    other = sample_saturated_posterior(hyper, 300, seed=100, batch_size=128)
    assert np.array_equal(first.q, second.q)
    assert np.array_equal(first.omega, second.omega)
    assert not np.array_equal(first.q, other.q)


def test_saturated_posterior_mean_tracks_counts():
    counts = CountsTable(((200, 600, 200),) * 4)
    hyper = conjugate_update(DirichletHyper(), counts)
    draws = sample_saturated_posterior(hyper, 4000, seed=3)
    expected = np.array([201, 601, 201]) / 1003
    assert np.allclose(draws.q.mean(axis=0), expected, atol=0.005)
    assert draws.omega.mean() == pytest.approx(0.5, abs=0.02)


def test_fixed_qz_is_constant():
    assert np.all(qz_draws(10, seed=1, qz=0.3) == 0.3)


def test_psi_at_worked_example_truth(example1, half):
    draw = tuple(CellParams(c, q, MissingCellParam(w)) for c, q, w in zip(CELLS, example1, EXAMPLE1_OMEGA))
    assert psi(draw, half) == pytest.approx(0.145, abs=1e-9)


def test_psi_ignores_cell_order(example1, half):
    draw = [CellParams(c, q, MissingCellParam(w)) for c, q, w in zip(CELLS, example1, EXAMPLE1_OMEGA)]
    assert psi(tuple(reversed(draw)), half) == pytest.approx(psi(tuple(draw), half))


def test_psi_bounds_worked_example(example1, half):
    lower, upper = psi_bounds(example1, half)
    assert lower == pytest.approx(-0.11, abs=1e-9)
    assert upper == pytest.approx(0.485, abs=1e-9)


def test_psi_bounds_contain_every_omega(example1):
    gen = np.random.default_rng(2024)
    q = np.array([cell.as_array() for cell in example1])
    for qz in (0.0, 0.3, 1.0):
        lower, upper = psi_bounds(example1, ZMarginParam(qz))
        values = psi_array(np.broadcast_to(q, (5000, 4, 3)), gen.random((5000, 4)), qz)
        assert np.all(values >= lower - 1e-12)
        assert np.all(values <= upper + 1e-12)


def test_psi_bounds_collapse_without_missingness(half):
    from tests.conftest import observed
    q = observed(((0.2, 0.0), (0.4, 0.0), (0.5, 0.0), (0.7, 0.0)))
    lower, upper = psi_bounds(q, half)
    assert lower == pytest.approx(upper)
    assert lower == pytest.approx(0.3)


def test_credible_interval_interpolates():
    interval = credible_interval(np.arange(101), 0.90)
    assert interval.lower == pytest.approx(5.0)
    assert interval.upper == pytest.approx(95.0)
    assert interval.mean == pytest.approx(50.0)


def test_credible_intervals_are_nested():
    samples = np.random.default_rng(5).normal(size=2000)
    narrow, wide = credible_intervals(samples, [0.95, 0.80])
    assert narrow.level == 0.80
    assert wide.lower <= narrow.lower <= narrow.upper <= wide.upper


def test_credible_interval_rejects_bad_input():
    with pytest.raises(ValueError):
        credible_interval([], 0.9)
    with pytest.raises(ValueError):
        credible_interval([0.1, 0.2], 1.0)


def test_prob_positive():
    assert prob_positive([-1.0, 0.0, 2.0, 3.0]) == 0.5


def test_mar_estimate_centres_on_observed_rates():
    counts = CountsTable(((600, 400, 100), (500, 500, 300), (300, 700, 50), (200, 800, 0)))
    draws = mar_estimate(counts, 3000, seed=11, qz=0.5)
    expected = 0.5 * (701 / 1002 + 801 / 1002) - 0.5 * (401 / 1002 + 501 / 1002)
    assert draws.psi().mean() == pytest.approx(expected, abs=0.005)
    assert np.array_equal(draws.omega, draws.q[..., 1])
    assert np.all(draws.q[..., 2] == 0)


def test_mar_estimate_on_second_worked_example():
    # q = (q10, q11, q0dot) per cell scaled to 1000 rows
    counts = CountsTable(((500, 140, 360), (490, 230, 280), (320, 220, 460), (270, 240, 490)))
    psi_draws = mar_estimate(counts, 4000, seed=5, qz=0.5).psi()
    assert psi_draws.mean() == pytest.approx(0.170, abs=0.005)


def test_mar_and_saturated_agree_without_missingness():
    counts = CountsTable(((300, 200, 0), (250, 250, 0), (150, 350, 0), (100, 400, 0)))
    mar = mar_estimate(counts, 4000, seed=1, qz=0.5).psi()
    hyper = conjugate_update(DirichletHyper(1.0, 1.0, 1.0), counts)
    sat = sample_saturated_posterior(hyper, 4000, seed=2, qz=0.5).psi()
    assert mar.mean() == pytest.approx(sat.mean(), abs=0.01)


def test_oracle_rejects_missing_rows():
    with pytest.raises(ValueError):
        oracle_estimate(CountsTable(((1, 1, 1),) * 4), 10, seed=0)


def test_draw_export_columns():
    draws = sample_saturated_posterior((DirichletHyper(),) * 4, 5, seed=0, qz=0.5)
    frame = draws.to_frame()
    assert list(frame.columns[:3]) == ['draw', 'psi', 'q00_10']
    assert 'omega_11' in frame.columns
    assert len(frame) == 5
