import io

import numpy as np
import pandas as pd
import pytest

from cli import EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, run_cli
from services.datagen import SyntheticSpec, generate, save_synthetic
from services.risk import REPORT_COLUMNS

SMALL_FIGURE1 = """
# two reps on a tiny design
n = 40
p = 20
reps = 2
lambda_grid = 0.5, 2
"""


@pytest.fixture
def dataset(tmp_path):
    data, beta_star, _ = generate(SyntheticSpec(n=60, p=30, seed=3))
    data_path, beta_path = save_synthetic(data, beta_star, tmp_path / 'data')
    return data_path, beta_path, data


def _frame(text):
    return pd.read_csv(io.StringIO(text), comment='#')


def test_help(capsys):
    assert run_cli(['--help']) == EXIT_OK
    out = capsys.readouterr().out
    for command in ('fit', 'risk', 'amp', 'experiment', 'diagnose'):
        assert command in out


def test_fit_prints_beta_hat(dataset, capsys):
    data_path, _, data = dataset
    assert run_cli(['fit', '--data', str(data_path), '--lambda', '1']) == EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith('# fit: loss=squared reg=ridge lambda=1')
    beta = _frame(out)['beta_hat'].to_numpy()
    expected = np.linalg.solve(data.X.T @ data.X + np.eye(30), data.X.T @ data.y)
    np.testing.assert_allclose(beta, expected, atol=1e-9)


def test_fit_writes_to_file(dataset, tmp_path, capsys):
    data_path, _, _ = dataset
    out_path = tmp_path / 'beta.csv'
    assert run_cli(['fit', '--data', str(data_path), '--out', str(out_path)]) == EXIT_OK
    assert capsys.readouterr().out == ''
    assert len(pd.read_csv(out_path, comment='#')) == 30


def test_risk_prints_one_row(dataset, capsys):
    data_path, beta_path, _ = dataset
    code = run_cli(['risk', '--data', str(data_path), '--beta-star', str(beta_path),
                    '--seed', '2', '--n-jobs', '1'])
    assert code == EXIT_OK
    row = _frame(capsys.readouterr().out)
    assert row.columns.tolist() == REPORT_COLUMNS
    assert len(row) == 1
    assert row.loc[0, 'lo'] == pytest.approx(row.loc[0, 'alo'], rel=1e-9)
    assert row.loc[0, 'oracle'] > 0


def test_risk_without_lo_or_folds(dataset, capsys):
    data_path, _, _ = dataset
    code = run_cli(['risk', '--data', str(data_path), '--loss', 'pseudo_huber:mu=1',
                    '--no-lo', '--folds', 'none'])
    assert code == EXIT_OK
    row = _frame(capsys.readouterr().out)
    assert np.isnan(row.loc[0, 'lo']) and np.isnan(row.loc[0, 'kfold2'])
    assert row.loc[0, 'amp'] > 0


@pytest.mark.parametrize('argv', [
    ['fit', '--bogus'],
    ['nonsense'],
    ['fit'],
])
def test_usage_errors(argv, capsys):
    assert run_cli(argv) == EXIT_USAGE
    captured = capsys.readouterr()
    assert captured.out == ''
    assert captured.err


def test_bad_inputs_are_usage_errors(dataset, tmp_path, capsys):
    data_path, _, _ = dataset
    assert run_cli(['fit', '--data', str(data_path), '--loss', 'lasso']) == EXIT_USAGE
    assert run_cli(['fit', '--data', str(data_path), '--lambda', '0']) == EXIT_USAGE
    assert run_cli(['risk', '--data', str(data_path), '--folds', 'x']) == EXIT_USAGE
    assert run_cli(['risk', '--data', str(data_path), '--folds', '2,61']) == EXIT_USAGE
    assert run_cli(['fit', '--data', str(tmp_path / 'missing.csv')]) == EXIT_USAGE
    assert 'usage: risk-toolkit' in capsys.readouterr().err


def test_numerical_failure_exit_code(dataset, capsys):
    data_path, _, _ = dataset
    code = run_cli(['fit', '--data', str(data_path), '--loss', 'pseudo_huber:mu=1',
                    '--max-iter', '1'])
    assert code == EXIT_NUMERICAL
    captured = capsys.readouterr()
    assert captured.out == ''
    assert 'MaxIterExceeded' in captured.err


def test_amp_prints_trace(dataset, capsys):
    data_path, _, _ = dataset
    assert run_cli(['amp', '--data', str(data_path), '--tol', '1e9']) == EXIT_OK
    out = capsys.readouterr().out
    assert 'converged=true' in out.splitlines()[0]
    assert _frame(out).columns.tolist() == ['t', 'delta_beta_inf', 'theta_t', 'tau_t', 'train_risk']


def test_amp_non_convergence_keeps_partial_trace(dataset, capsys):
    data_path, _, _ = dataset
    code = run_cli(['amp', '--data', str(data_path), '--max-iter', '2', '--tol', '1e-300'])
    assert code == EXIT_NUMERICAL
    out = capsys.readouterr().out
    assert 'converged=false' in out.splitlines()[0]
    assert len(_frame(out)) == 2


def test_diagnose(tmp_path, capsys):
    per_seed = tmp_path / 'seeds.csv'
    code = run_cli(['diagnose', '--n', '40', '--delta', '2', '--seeds', '2', '--out', str(per_seed)])
    assert code == EXIT_OK
    summary = _frame(capsys.readouterr().out)
    assert summary.loc[0, 'p'] == 20 and summary.loc[0, 'seeds'] == 2
    assert len(pd.read_csv(per_seed, comment='#')) == 2


def test_experiment_is_reproducible(tmp_path, capsys):
    config_path = tmp_path / 'fig1.cfg'
    config_path.write_text(SMALL_FIGURE1)
    runs = []
    for name in ('a', 'b'):
        out_dir = tmp_path / name
        code = run_cli(['experiment', 'figure1', '--config', str(config_path), '--seed', '7',
                        '--out', str(out_dir), '--n-jobs', '1'])
        assert code == EXIT_OK
        listed = capsys.readouterr().out.split()
        assert sorted(p.rsplit('/', 1)[-1] for p in listed) == ['fig1.svg', 'fig1_means.csv',
                                                                 'fig1_reps.csv']
        runs.append(out_dir)
    for filename in ('fig1_reps.csv', 'fig1_means.csv', 'fig1.svg'):
        first, second = (run / filename for run in runs)
        if filename.endswith('.csv'):
            # the header records the output directory, which differs between runs
            first_lines = first.read_text().splitlines()
            second_lines = second.read_text().splitlines()
            assert first_lines[0].startswith('# config: ')
            assert first_lines[1:] == second_lines[1:]
        else:
            assert first.read_bytes() == second.read_bytes()


def test_experiment_rejects_bad_config(tmp_path, capsys):
    config_path = tmp_path / 'bad.cfg'
    config_path.write_text('no_such_key = 1\n')
    assert run_cli(['experiment', 'figure1', '--config', str(config_path)]) == EXIT_USAGE
    assert run_cli(['experiment', 'unknown']) == EXIT_USAGE
