"""Full-scale checks; run with `pytest --runslow`."""
import numpy as np
import pytest

from config import ExperimentConfig
from services.amp import amp_run, check_fixed_point
from services.datagen import SyntheticSpec, derive_seed, generate
from services.diagnostics import (concentration_suite, discrepancy_sweep, linearization_sweep,
                                  summarize_sweep)
from services.experiments import run_figure1
from services.risk import alo_risk, calibrate, loocv_risk
from services.solver import fit

pytestmark = pytest.mark.slow


def test_kfold_bias_ordering_at_desk_scale(tmp_path):
    cfg = ExperimentConfig(n=500, p=400, reps=20, lambda_grid=tuple(np.logspace(-1, 1, 15)),
                           seed=0, n_jobs=-1, output_dir=tmp_path)
    means = run_figure1(cfg).tables['means']
    assert len(means) == 15
    assert (means['kfold2'] > means['kfold3']).all()
    assert (means['kfold3'] > means['kfold5']).all()
    assert (means['kfold5'] > means['oracle'] - 0.02).all()
    assert ((means['lo'] - means['oracle']).abs() <= 0.05 * means['oracle']).all()


@pytest.mark.parametrize('seed', range(10))
def test_alo_is_exact_for_ridge(ridge_model, seed):
    data, _, _ = generate(SyntheticSpec(n=200, p=100, seed=seed))
    full = fit(ridge_model, data)
    lo, _ = loocv_risk(ridge_model, data, fit_result=full)
    alo, _ = alo_risk(ridge_model, data, full)
    assert abs(lo - alo) <= 1e-9 * (1 + lo)


def test_amp_fixed_point_is_the_huber_estimator(huber_model):
    data, _, _ = generate(SyntheticSpec(n=200, p=100, seed=17))
    full = fit(huber_model, data)
    tau_hat, _ = calibrate(full, huber_model, 2.0)
    state, _ = amp_run(huber_model, data, tau_hat, tol=1e-10)
    assert np.max(np.abs(state.beta - full.beta_hat)) <= 1e-6
    assert check_fixed_point(state, huber_model, data).max() <= 1e-6


def test_discrepancies_shrink_with_n(huber_model):
    seeds = [derive_seed(0, 'acceptance', i) for i in range(10)]
    rows = discrepancy_sweep(huber_model, SyntheticSpec(n=200, p=100), [200, 400, 800], seeds,
                             n_jobs=-1)
    assert all(row.error is None for row in rows)
    summary = summarize_sweep(rows)
    assert summary['d_lo_amp'].is_monotonic_decreasing
    assert summary['sup_resid_gap'].is_monotonic_decreasing
    assert summary['d_lo_amp'].nunique() == 3
    last = summary.iloc[-1]
    assert last['d_lo_amp'] <= 1e-2 * (1 + last['lo'])


def test_linearization_error(ridge_model, huber_model):
    seeds = [derive_seed(0, 'acceptance', i) for i in range(5)]
    gen = SyntheticSpec(n=200, p=100)
    exact = linearization_sweep(ridge_model, gen, [200], seeds[:2], n_jobs=-1)
    assert (exact['sup_eps'] <= 1e-10).all()
    frame = linearization_sweep(huber_model, gen, [200, 400], seeds, n_jobs=-1)
    medians = frame.groupby('n')['sup_eps'].median()
    assert medians.loc[400] < medians.loc[200]


def test_concentration_suite_at_scale():
    seeds = [derive_seed(0, 'acceptance', i) for i in range(20)]
    frame = concentration_suite(1000, 2.0, seeds, n_jobs=-1)
    assert frame['min_ok'].all()
    assert frame['max_ok'].all()
    assert frame['tail_ok'].sum() >= 19
