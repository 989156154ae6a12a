import pytest

from app.datasets import counts_to_rows, read_counts_csv, read_input, read_qtable_csv, read_rows_csv, rows_to_counts
from app.middleware import DataParseError, ValidationError
from app.models import CountsTable
from app.settings import parse_levels, read_analysis_config, read_study_config
from tests.conftest import CONFIG_DIR, DATA_DIR, EXAMPLE1

NLP_COUNTS = ((15, 8, 9), (16, 10, 7), (7, 9, 8), (8, 12, 6))


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_synthetic_rows_aggregate_to_counts():
    counts, rows = read_input(DATA_DIR / 'synthetic_nlp_rows.csv')
    assert counts.cells == NLP_COUNTS
    assert counts.n == 115
    assert len(rows) == 115
    assert int((rows['x'] == 1).sum()) == 50
    assert int(rows['y'].isna().sum()) == 30


def test_counts_file_matches_rows_file():
    counts, rows = read_input(DATA_DIR / 'synthetic_nlp_counts.csv')
    assert rows is None
    assert counts == read_input(DATA_DIR / 'synthetic_nlp_rows.csv')[0]


def test_counts_expand_to_equivalent_rows():
    counts = CountsTable(NLP_COUNTS)
    rows = counts_to_rows(counts)
    assert len(rows) == counts.n
    assert rows_to_counts(rows) == counts


def test_qtable_reads_worked_example():
    q = read_qtable_csv(DATA_DIR / 'worked_example1.csv')
    assert [v for c in q for v in (c.q11, c.q0dot)] == pytest.approx([v for row in EXAMPLE1 for v in row])


def test_counts_error_names_the_line(tmp_path):
    path = write(tmp_path, 'bad.csv', 'x,z,n_y0_r1,n_y1_r1,n_r0\n0,0,1,2,3\n0,1,1,two,3\n1,0,1,2,3\n1,1,1,2,3\n')
    with pytest.raises(DataParseError, match='line 3'):
        read_counts_csv(path)


def test_counts_reject_negative_and_misordered_cells(tmp_path):
    path = write(tmp_path, 'neg.csv', 'x,z,n_y0_r1,n_y1_r1,n_r0\n0,0,1,2,3\n0,1,1,-2,3\n1,0,1,2,3\n1,1,1,2,3\n')
    with pytest.raises(DataParseError, match='non-negative'):
        read_counts_csv(path)
    path = write(tmp_path, 'order.csv', 'x,z,n_y0_r1,n_y1_r1,n_r0\n0,1,1,2,3\n0,0,1,2,3\n1,0,1,2,3\n1,1,1,2,3\n')
    with pytest.raises(DataParseError, match='line 2'):
        read_counts_csv(path)


def test_rows_need_outcome_exactly_when_observed(tmp_path):
    path = write(tmp_path, 'rows.csv', 'x,z,r,y\n0,0,1,1\n1,1,0,1\n')
    with pytest.raises(DataParseError, match='line 3: y must be empty'):
        read_rows_csv(path)
    path = write(tmp_path, 'rows2.csv', 'x,z,r,y\n0,0,1,\n')
    with pytest.raises(DataParseError, match='line 2'):
        read_rows_csv(path)


def test_unknown_header_is_rejected(tmp_path):
    with pytest.raises(DataParseError, match='line 1'):
        read_input(write(tmp_path, 'other.csv', 'a,b\n1,2\n'))
    with pytest.raises(DataParseError):
        read_input(write(tmp_path, 'empty.csv', ''))


def test_qtable_rows_must_sum_to_one(tmp_path):
    path = write(tmp_path, 'q.csv', 'x,z,q10,q11,q0dot\n0,0,0.5,0.5,0.5\n0,1,0.2,0.3,0.5\n1,0,0.2,0.3,0.5\n1,1,0.2,0.3,0.5\n')
    with pytest.raises(DataParseError, match='line 2'):
        read_qtable_csv(path)


def test_analysis_example_config():
    config = read_analysis_config(CONFIG_DIR / 'analysis_example.ini',
                                  {'draws': 10, 'seed': 1, 'levels': (0.8, 0.95), 'output_dir': 'out'})
    assert [m.label for m in config.models] == ['MAR', 'Sat', 'Heckman', 'BetaBias']
    beta_bias = config.models[3].assumption
    assert (beta_bias.sigma, beta_bias.a, beta_bias.b) == (0.4, 5.0, 2.0)
    assert config.levels == (0.8, 0.95)
    assert config.models[2].gibbs.iterations == 5000


def test_study_config_reads_dgp():
    study = read_study_config(CONFIG_DIR / 'sim2_sat_p02_orviol_posbias.ini', {'seed': 1, 'draws': 10, 'level': 0.9})
    assert study.dgp.kind == 'SaturatedDGP'
    assert not study.dgp.iv_holds
    assert study.replicates == 50
    assert [m.kind for m in study.models] == ['None', 'ExactIV', 'ExactIVPosBias', 'Heckman', 'Oracle']


def test_bad_configs_raise_validation_errors(tmp_path):
    defaults = {'draws': 10, 'seed': 1, 'levels': (0.8,), 'output_dir': 'out'}
    with pytest.raises(ValidationError, match='kind must be one of'):
        read_analysis_config(write(tmp_path, 'a.ini', '[model:X]\nkind = Magic\n'), defaults)
    with pytest.raises(ValidationError, match='Oracle'):
        read_analysis_config(write(tmp_path, 'b.ini', '[model:O]\nkind = Oracle\n'), defaults)
    with pytest.raises(ValidationError, match='Thresholds'):
        read_analysis_config(write(tmp_path, 'c.ini', '[model:T]\nkind = ThresholdIV\nt_l = 2\nt_h = 1\n'), defaults)
    with pytest.raises(ValidationError, match='no \\[model'):
        read_analysis_config(write(tmp_path, 'd.ini', '[analysis]\ndraws = 5\n'), defaults)
    with pytest.raises(ValidationError, match='dgp'):
        read_study_config(write(tmp_path, 'e.ini', '[model:S]\nkind = None\n'), {'seed': 1, 'draws': 1, 'level': 0.9})


def test_parse_levels():
    assert parse_levels('0.8, 0.95') == (0.8, 0.95)
    with pytest.raises(ValidationError):
        parse_levels('high')
