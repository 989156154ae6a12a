import json

import pandas as pd
import pytest

from run import cli
from tests.conftest import DATA_DIR

TINY_STUDY = """[study]
replicates = 2
seed = 5
draws = 100

[dgp]
kind = SaturatedDGP
target_missing = 0.2
n = 150

[model:Sat]
kind = None

[model:MAR]
kind = MAR

[model:Oracle]
kind = Oracle
"""


def test_commands_are_registered(app):
    assert {'analyze', 'heckman', 'simulate', 'prior-ar', 'bounds'} <= set(app.cli.list_commands(None))


def test_analyze_counts_with_default_models(runner, tmp_path):
    out = tmp_path / 'run'
    result = runner.invoke(cli, args=['--out', str(out), 'analyze', '--input', str(DATA_DIR / 'synthetic_nlp_counts.csv')])
    assert result.exit_code == 0, result.output
    assert '✅ MAR' in result.output
    report = json.loads((out / 'report.json').read_text())
    assert [m['model'] for m in report['models']] == ['MAR', 'Sat']
    assert all(m['prob_positive'] is not None for m in report['models'])
    intervals = pd.read_csv(out / 'intervals.csv')
    assert len(intervals) == 4
    assert (out / 'draws_Sat.csv').exists()
    manifest = json.loads((out / 'manifest.json').read_text())
    assert manifest['counts']['cells']['00'] == [15, 8, 9]


def test_analyze_with_config(runner, tmp_path):
    config = tmp_path / 'analysis.ini'
    config.write_text(
        f"[analysis]\ninput = {DATA_DIR / 'synthetic_nlp_rows.csv'}\ndraws = 200\nlevels = 0.80,0.95\n\n"
        "[model:MAR]\nkind = MAR\n\n[model:Sat]\nkind = None\n\n"
        "[model:Heckman]\nkind = Heckman\niterations = 600\nburn_in = 100\n\n"
        "[model:BetaBias]\nkind = LognormalBetaBias\nsigma = 0.4\na = 5\nb = 2\n"
    )
    out = tmp_path / 'run'
    result = runner.invoke(cli, args=['--config', str(config), '--out', str(out), 'analyze'])
    assert result.exit_code == 0, result.output
    intervals = pd.read_csv(out / 'intervals.csv')
    assert sorted(intervals['model'].unique()) == ['BetaBias', 'Heckman', 'MAR', 'Sat']
    for _, group in intervals.groupby('model'):
        narrow, wide = group.sort_values('level').to_dict('records')
        assert wide['lo'] <= narrow['lo'] <= narrow['hi'] <= wide['hi']
    assert (out / 'draws_Heckman.csv').exists()


def test_analyze_is_byte_reproducible(runner, tmp_path):
    source = str(DATA_DIR / 'synthetic_nlp_counts.csv')
    for name in ('a', 'b'):
        result = runner.invoke(cli, args=['--seed', '7', '--out', str(tmp_path / name), 'analyze', '--input', source])
        assert result.exit_code == 0, result.output
    for name in ('report.json', 'intervals.csv', 'draws_Sat.csv'):
        assert (tmp_path / 'a' / name).read_bytes() == (tmp_path / 'b' / name).read_bytes()


def test_analyze_falsified_assumption_exits_cleanly(runner, tmp_path):
    counts = tmp_path / 'counts.csv'
    counts.write_text('x,z,n_y0_r1,n_y1_r1,n_r0\n0,0,10,85,5\n0,1,85,10,5\n1,0,40,40,20\n1,1,40,40,20\n')
    config = tmp_path / 'or1.ini'
    config.write_text(f"[analysis]\ninput = {counts}\n\n[model:OR1]\nkind = ExactIV\n")
    result = runner.invoke(cli, args=['--config', str(config), '--out', str(tmp_path / 'run'), 'analyze'])
    assert result.exit_code == 0, result.output
    assert '⚠️' in result.output
    report = json.loads((tmp_path / 'run' / 'report.json').read_text())
    assert report['models'][0]['computed'] is False
    assert report['models'][0]['acceptance']['bf'] >= 10


def test_analyze_malformed_input_fails_with_line(runner, tmp_path):
    bad = tmp_path / 'bad.csv'
    bad.write_text('x,z,n_y0_r1,n_y1_r1,n_r0\n0,0,1,2,3\n0,1,x,2,3\n1,0,1,2,3\n1,1,1,2,3\n')
    result = runner.invoke(cli, args=['--out', str(tmp_path / 'run'), 'analyze', '--input', str(bad)])
    assert result.exit_code == 1
    assert 'line 3' in result.output


def test_analyze_needs_input(runner):
    result = runner.invoke(cli, args=['analyze'])
    assert result.exit_code == 2


def test_global_seed_reaches_the_manifest(runner, tmp_path):
    out = tmp_path / 'run'
    result = runner.invoke(cli, args=['--seed', '7', '--draws', '150', '--out', str(out),
                                      'analyze', '--input', str(DATA_DIR / 'synthetic_nlp_counts.csv')])
    assert result.exit_code == 0, result.output
    assert json.loads((out / 'manifest.json').read_text())['seed'] == 7
    assert len(pd.read_csv(out / 'draws_Sat.csv')) == 150


def test_run_flags_belong_before_the_command(runner):
    result = runner.invoke(cli, args=['analyze', '--input', str(DATA_DIR / 'synthetic_nlp_counts.csv'),
                                      '--seed', '7'])
    assert result.exit_code == 2
    assert 'No such option' in result.output


def test_heckman_command_writes_chain(runner, tmp_path):
    out = tmp_path / 'run'
    result = runner.invoke(cli, args=['--out', str(out), 'heckman', '--input', str(DATA_DIR / 'synthetic_nlp_rows.csv'),
                                      '--iterations', '600', '--burn-in', '100'])
    assert result.exit_code == 0, result.output
    chain = pd.read_csv(out / 'chain.csv')
    assert len(chain) == 500
    assert 'rho acceptance' in result.output


def test_heckman_command_rejects_short_chain(runner):
    result = runner.invoke(cli, args=['heckman', '--input', str(DATA_DIR / 'synthetic_nlp_rows.csv'),
                                      '--iterations', '200', '--burn-in', '100'])
    assert result.exit_code == 1
    assert 'burn-in' in result.output


def test_simulate_writes_results(runner, tmp_path):
    config = tmp_path / 'study.ini'
    config.write_text(TINY_STUDY)
    out = tmp_path / 'run'
    result = runner.invoke(cli, args=['--config', str(config), '--out', str(out), 'simulate'])
    assert result.exit_code == 0, result.output
    table = pd.read_csv(out / 'results.csv')
    assert list(table['model']) == ['Sat', 'MAR', 'Oracle']
    assert list(table.columns[:6]) == ['model', 'ar', 'bf_geomean', 'computed', 'coverage', 'width']
    assert len(pd.read_csv(out / 'replicates.csv')) == 6
    manifest = json.loads((out / 'manifest.json').read_text())
    assert manifest['replicates'] == 2
    assert len(manifest['config_sha256']) == 64


def test_simulate_single_replicate(runner, tmp_path):
    config = tmp_path / 'study.ini'
    config.write_text(TINY_STUDY)
    out = tmp_path / 'run'
    result = runner.invoke(cli, args=['--config', str(config), '--out', str(out), 'simulate', '--replicates', '1'])
    assert result.exit_code == 0, result.output
    table = pd.read_csv(out / 'results.csv')
    assert set(table['coverage']) <= {0.0, 1.0}


def test_simulate_bad_config(runner, tmp_path):
    config = tmp_path / 'study.ini'
    config.write_text(TINY_STUDY.replace('SaturatedDGP', 'MysteryDGP'))
    result = runner.invoke(cli, args=['--config', str(config), 'simulate'])
    assert result.exit_code == 1
    assert 'DGP kind' in result.output


def test_simulate_needs_config(runner):
    result = runner.invoke(cli, args=['simulate'])
    assert result.exit_code == 2
    assert '--config' in result.output


def test_prior_ar_writes_rates(runner, tmp_path):
    out = tmp_path / 'run'
    result = runner.invoke(cli, args=['--out', str(out), 'prior-ar', '--kind', 'ExactIV', '--kind', 'ThresholdIV',
                                      '--attempts', '10000', '--alpha3', '1', '--alpha3', '2'])
    assert result.exit_code == 0, result.output
    table = pd.read_csv(out / 'prior_ar.csv')
    assert list(table.columns) == ['spec', 'alpha3', 'ar', 'se']
    assert len(table) == 4


def test_prior_ar_rejects_too_few_attempts(runner):
    result = runner.invoke(cli, args=['prior-ar', '--attempts', '0'])
    assert result.exit_code == 2


def test_posterior_sweep(runner, tmp_path):
    out = tmp_path / 'run'
    result = runner.invoke(cli, args=['--out', str(out), 'prior-ar', '--posterior-sweep', '--kind', 'LognormalIV',
                                      '--missing', '0.2', '--n', '200', '--attempts', '10000'])
    assert result.exit_code == 0, result.output
    assert list(pd.read_csv(out / 'posterior_ar.csv')['missing']) == [0.2]


def test_bounds_exact_iv(runner, tmp_path):
    out = tmp_path / 'run'
    result = runner.invoke(cli, args=['--out', str(out), 'bounds', '--input', str(DATA_DIR / 'worked_example1.csv'),
                                      '--kind', 'ExactIV', '--qz', '0.5'])
    assert result.exit_code == 0, result.output
    assert 'omega_00: [0.4792, 0.8125]' in result.output
    assert '[-0.1100, 0.4850]' in result.output
    report = json.loads((out / 'bounds.json').read_text())
    assert report['falsifiability']['ExactIV'] is True
    assert report['assumption_psi_bounds'] == pytest.approx([0.04, 0.32])


def test_bounds_without_assumptions(runner):
    result = runner.invoke(cli, args=['bounds', '--input', str(DATA_DIR / 'worked_example1.csv')])
    assert result.exit_code == 0, result.output
    assert result.output.count('[0.0000, 1.0000]') == 4


def test_bounds_reports_infeasible(runner, tmp_path):
    q = tmp_path / 'q.csv'
    q.write_text('x,z,q10,q11,q0dot\n0,0,0.35,0.6,0.05\n0,1,0.85,0.1,0.05\n1,0,0.5,0.3,0.2\n1,1,0.5,0.3,0.2\n')
    result = runner.invoke(cli, args=['bounds', '--input', str(q), '--kind', 'ExactIV'])
    assert result.exit_code == 0, result.output
    assert 'Infeasible' in result.output
    assert '❌ ExactIV' in result.output


def test_bounds_from_counts(runner):
    result = runner.invoke(cli, args=['bounds', '--input', str(DATA_DIR / 'synthetic_nlp_counts.csv'),
                                      '--kind', 'ThresholdIV'])
    assert result.exit_code == 0, result.output
    assert 'psi bounds (ThresholdIV)' in result.output
