import numpy as np
import pytest

from errors import InvalidInputError, MaxIterExceeded, SingularHessian
from models import Dataset, gradient
from services.datagen import SyntheticSpec, generate
from services.solver import SolverConfig, fit, fit_arrays, fit_loo, hessian, one_step_loo


def _ridge_closed_form(X, y, lam):
    return np.linalg.solve(X.T @ X + lam * np.eye(X.shape[1]), X.T @ y)


def test_ridge_matches_closed_form(ridge_model, small_data):
    result = fit(ridge_model, small_data)
    expected = _ridge_closed_form(small_data.X, small_data.y, 1.0)
    np.testing.assert_allclose(result.beta_hat, expected, rtol=0, atol=1e-9)
    assert result.converged
    assert result.grad_inf_norm <= 1e-10


def test_huber_fit_is_stationary(huber_model, small_data):
    result = fit(huber_model, small_data)
    assert np.max(np.abs(gradient(huber_model, small_data, result.beta_hat))) <= 1e-10
    assert list(result.objective_trace) == sorted(result.objective_trace, reverse=True)


def test_warm_start_at_solution_takes_no_steps(huber_model, small_data):
    first = fit(huber_model, small_data)
    again = fit(huber_model, small_data, init=first.beta_hat)
    assert again.iterations == 0
    np.testing.assert_array_equal(again.beta_hat, first.beta_hat)


def test_max_iter_exceeded_carries_best_iterate(huber_model, small_data):
    with pytest.raises(MaxIterExceeded) as info:
        fit(huber_model, small_data, cfg=SolverConfig(max_iter=1))
    best = info.value.best
    assert not best.converged
    assert best.objective <= fit(huber_model, small_data).objective + 1e3
    assert best.beta_hat.shape == (small_data.p,)


def test_dimension_cap(ridge_model, small_data):
    with pytest.raises(InvalidInputError):
        fit(ridge_model, small_data, cfg=SolverConfig(max_dim=10))


def test_bad_init_shape(ridge_model, small_data):
    with pytest.raises(InvalidInputError):
        fit(ridge_model, small_data, init=np.zeros(3))


def test_hessian_for_ridge(ridge_model, tiny_data):
    H = hessian(ridge_model, tiny_data, np.ones(5))
    np.testing.assert_allclose(H, tiny_data.X.T @ tiny_data.X + np.eye(5), atol=1e-14)
    np.testing.assert_array_equal(H, H.T)


def test_fit_loo_matches_fit_on_reduced_data(huber_model, small_data):
    full = fit(huber_model, small_data)
    loo = fit_loo(huber_model, small_data, 7, warm=full)
    X, y = small_data.without_row(7)
    direct = fit(huber_model, Dataset(X, y))
    np.testing.assert_allclose(loo.beta_hat, direct.beta_hat, rtol=0, atol=1e-9)


def test_custom_newton_solve_is_used(ridge_model, tiny_data):
    calls = []
    H = tiny_data.X.T @ tiny_data.X + np.eye(5)

    def solve(beta, grad):
        calls.append(1)
        return np.linalg.solve(H, grad)

    result = fit_arrays(ridge_model, tiny_data.X, tiny_data.y, newton_solve=solve)
    assert calls
    np.testing.assert_allclose(result.beta_hat, _ridge_closed_form(tiny_data.X, tiny_data.y, 1.0),
                               atol=1e-10)


def test_non_finite_newton_direction(ridge_model, tiny_data):
    with pytest.raises(SingularHessian):
        fit_arrays(ridge_model, tiny_data.X, tiny_data.y,
                   newton_solve=lambda beta, grad: np.full_like(grad, np.nan))


def test_one_step_loo_is_exact_for_ridge(ridge_model, small_data):
    full = fit(ridge_model, small_data)
    X, y = small_data.without_row(3)
    step = one_step_loo(ridge_model, small_data, full, 3)
    np.testing.assert_allclose(step, _ridge_closed_form(X, y, 1.0), rtol=0, atol=1e-9)


def test_solver_config_is_validated():
    with pytest.raises(ValueError):
        SolverConfig(grad_tol=0.0)
    with pytest.raises(ValueError):
        SolverConfig(ls_shrink=1.5)


def test_fit_loo_scalar_closed_form(ridge_model):
    x = np.array([0.5, -1.0, 2.0])
    y = np.array([1.0, 0.3, -2.0])
    data = Dataset(x[:, None], y)
    full = fit(ridge_model, data)
    for i in range(3):
        keep = np.arange(3) != i
        expected = x[keep] @ y[keep] / (x[keep] @ x[keep] + 1.0)
        assert fit_loo(ridge_model, data, i, full).beta_hat[0] == pytest.approx(expected, abs=1e-12)


def test_warm_start_needs_no_more_iterations_than_cold(huber_model):
    data, _, _ = generate(SyntheticSpec(n=200, p=100, seed=4))
    full = fit(huber_model, data)
    for i in (0, 57, 199):
        warm = fit_loo(huber_model, data, i, full)
        cold = fit_loo(huber_model, data, i)
        assert warm.iterations <= cold.iterations
        np.testing.assert_allclose(warm.beta_hat, cold.beta_hat, rtol=0, atol=1e-9)


def test_hessian_curvature_lower_bound(huber_model, small_data):
    full = fit(huber_model, small_data)
    assert np.max(np.abs(full.residuals)) < huber_model.loss.working_radius
    kappa = huber_model.loss.curvature_lower
    gram_min = np.linalg.eigvalsh(small_data.X.T @ small_data.X)[0]
    H = hessian(huber_model, small_data, full.beta_hat)
    assert np.linalg.eigvalsh(H)[0] >= kappa * gram_min - 1e-12
