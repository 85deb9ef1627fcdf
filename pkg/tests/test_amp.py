from dataclasses import replace

import numpy as np
import pytest

from errors import InvalidInputError, NonConvergence, ThetaBracketFailure
from models import Dataset
from services.amp import (TRACE_COLUMNS, AmpState, amp_run, amp_step, check_fixed_point,
                          geometric_schedule, solve_theta_t, trace_frame)
from services.datagen import SyntheticSpec, generate
from services.families import psi
from services.risk import calibrate
from services.solver import fit


@pytest.fixture
def medium_data():
    data, _, _ = generate(SyntheticSpec(n=200, p=100, seed=0))
    return data


def test_first_step_for_ridge(ridge_model, small_data):
    state = amp_step(ridge_model, small_data, AmpState.initial(small_data, tau=1.0))
    np.testing.assert_allclose(state.beta, small_data.X.T @ small_data.y / 2.0, atol=1e-12)
    assert state.theta == pytest.approx(1.0 / 3.0, rel=1e-10)
    assert state.t == 1
    lo, hi = state.theta_bracket
    assert lo < state.theta <= hi


def test_theta_has_no_root_when_shrinkage_is_too_weak(ridge_model, tiny_data):
    with pytest.raises(ThetaBracketFailure):
        solve_theta_t(tiny_data.y, np.zeros(5), 0.1, ridge_model, tiny_data, delta=0.5)


def test_theta_rejects_nonpositive_tau(ridge_model, tiny_data):
    with pytest.raises(InvalidInputError):
        solve_theta_t(tiny_data.y, np.zeros(5), 0.0, ridge_model, tiny_data)


def test_state_at_the_estimator_is_fixed(huber_model, medium_data):
    full = fit(huber_model, medium_data)
    tau_hat, theta_hat = calibrate(full, huber_model, medium_data.aspect_ratio())
    state = AmpState.from_fit(full, huber_model, tau_hat, theta_hat)
    assert check_fixed_point(state, huber_model, medium_data).max() <= 1e-8
    stepped = amp_step(huber_model, medium_data, state)
    np.testing.assert_allclose(stepped.beta, full.beta_hat, rtol=0, atol=1e-9)
    assert stepped.theta == pytest.approx(theta_hat, rel=1e-9)


@pytest.mark.parametrize('model_name', ['ridge_model', 'huber_model'])
def test_amp_converges_to_the_estimator(model_name, medium_data, request):
    model = request.getfixturevalue(model_name)
    full = fit(model, medium_data)
    tau_hat, _ = calibrate(full, model, medium_data.aspect_ratio())
    state, trace = amp_run(model, medium_data, tau_hat, max_iter=500, tol=1e-10)
    assert np.max(np.abs(state.beta - full.beta_hat)) <= 1e-6
    assert check_fixed_point(state, model, medium_data).max() <= 1e-6
    assert trace[-1].delta_beta_inf <= 1e-10
    assert [rec.t for rec in trace] == list(range(len(trace)))


def test_geometric_schedule():
    schedule = geometric_schedule(2.0, 0.5)
    assert schedule(0) == pytest.approx(3.0)
    assert schedule(1) == pytest.approx(2.0 * 1.45)
    assert schedule(500) == pytest.approx(2.0)


def test_amp_run_accepts_a_schedule_list(ridge_model, small_data):
    state, trace = amp_run(ridge_model, small_data, [1.0, 2.0], max_iter=3, tol=np.inf)
    assert len(trace) == 1 and trace[0].tau_t == 1.0
    with pytest.raises(InvalidInputError):
        amp_run(ridge_model, small_data, [], max_iter=3)


def test_non_convergence_keeps_the_trace(huber_model, small_data):
    with pytest.raises(NonConvergence) as info:
        amp_run(huber_model, small_data, 1.0, max_iter=2, tol=0.0)
    assert len(info.value.trace) == 2
    assert info.value.state.t == 2


def test_bad_damping(ridge_model, small_data):
    with pytest.raises(InvalidInputError):
        amp_run(ridge_model, small_data, 1.0, damping=1.0)


def test_check_fixed_point_needs_theta(ridge_model, small_data):
    with pytest.raises(InvalidInputError):
        check_fixed_point(AmpState.initial(small_data, 1.0), ridge_model, small_data)


def test_trace_frame(ridge_model, small_data):
    _, trace = amp_run(ridge_model, small_data, 1.0, max_iter=5, tol=np.inf)
    frame = trace_frame(trace)
    assert frame.columns.tolist() == TRACE_COLUMNS
    assert frame.loc[0, 'theta_t'] == pytest.approx(1.0 / 3.0)


def test_every_step_keeps_the_onsager_identities(huber_model, medium_data):
    full = fit(huber_model, medium_data)
    tau_hat, _ = calibrate(full, huber_model, medium_data.aspect_ratio())
    state = AmpState.initial(medium_data, tau_hat)
    for _ in range(8):
        state = amp_step(huber_model, medium_data, state)
        _, psi_d1 = psi(huber_model.loss, state.z, state.theta)
        assert 0.0 <= np.mean(psi_d1) <= 1.0 / medium_data.aspect_ratio() + 1e-12
        np.testing.assert_allclose(state.z - state.psi_prev,
                                   huber_model.loss.prox(state.z, state.theta), rtol=0, atol=1e-10)


def test_reported_convergence_solves_the_stationarity_system(huber_model, medium_data):
    full = fit(huber_model, medium_data)
    tau_hat, _ = calibrate(full, huber_model, medium_data.aspect_ratio())
    state, _ = amp_run(huber_model, medium_data, tau_hat, tol=1e-9)
    assert check_fixed_point(state, huber_model, medium_data).max() <= 1e-8


def test_zero_design_is_a_pure_prox_iteration(ridge_model):
    y = np.random.default_rng(2).standard_normal(20)
    data = Dataset(np.zeros((20, 10)), y)
    state, trace = amp_run(ridge_model, data, 1.0)
    assert len(trace) <= 2
    np.testing.assert_array_equal(state.beta, np.zeros(10))
    assert state.theta == pytest.approx(1.0 / 3.0, rel=1e-10)


def test_fixed_point_residuals_detect_a_perturbed_beta(huber_model, medium_data):
    full = fit(huber_model, medium_data)
    tau_hat, theta_hat = calibrate(full, huber_model, medium_data.aspect_ratio())
    state = AmpState.from_fit(full, huber_model, tau_hat, theta_hat)
    moved = replace(state, beta=state.beta + 1e-3)
    assert check_fixed_point(moved, huber_model, medium_data).stationarity > 1e-6


def test_fixed_point_residuals_ignore_row_order(huber_model, medium_data):
    full = fit(huber_model, medium_data)
    tau_hat, theta_hat = calibrate(full, huber_model, medium_data.aspect_ratio())
    state = AmpState.from_fit(full, huber_model, tau_hat, theta_hat)
    order = np.random.default_rng(6).permutation(medium_data.n)
    shuffled = replace(state, z=state.z[order], psi_prev=state.psi_prev[order])
    before = check_fixed_point(state, huber_model, medium_data)
    after = check_fixed_point(shuffled, huber_model, medium_data.permuted(order))
    for name in ('stationarity', 'tau_eq', 'theta_eq', 'z_eq'):
        assert getattr(after, name) == pytest.approx(getattr(before, name), abs=1e-12)
