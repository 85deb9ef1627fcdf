"""
Newton Solver
Damped Newton minimization of the penalized objective for full data,
leave-one-out data and training folds
"""

from typing import Callable, Optional

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from config import get_config
from errors import InvalidInputError, MaxIterExceeded, SingularHessian
from models import Dataset, FitResult, PenalizedModel

logger = structlog.get_logger(__name__)


class SolverConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    grad_tol: float = Field(default=1e-10, gt=0)
    max_iter: int = Field(default=200, ge=1)
    ls_shrink: float = Field(default=0.5, gt=0, lt=1)
    ls_sufficient_decrease: float = Field(default=1e-4, gt=0, lt=0.5)
    ls_max_steps: int = Field(default=60, ge=1)
    max_dim: int = Field(default_factory=lambda: get_config().MAX_DIM, ge=1)


DEFAULT_SOLVER = SolverConfig()


def hessian_arrays(model: PenalizedModel, X, y, beta) -> np.ndarray:
    d_loss = model.loss.d2(y - X @ beta)
    H = X.T @ (d_loss[:, None] * X)
    H[np.diag_indices_from(H)] += model.lam * model.regularizer.d2(beta)
    return H


def hessian(model: PenalizedModel, data: Dataset, beta) -> np.ndarray:
    """X^T diag(l''(y - X beta)) X + lambda diag(R''(beta))"""
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (data.p,):
        raise InvalidInputError(f"beta has shape {beta.shape}, expected ({data.p},)")
    H = hessian_arrays(model, data.X, data.y, beta)
    # exact symmetry; the product above is symmetric only up to rounding
    return 0.5 * (H + H.T)


def _objective_arrays(model, X, y, beta) -> float:
    return float(np.sum(model.loss.value(y - X @ beta))
                 + model.lam * np.sum(model.regularizer.value(beta)))


def _gradient_arrays(model, X, y, beta) -> np.ndarray:
    return -X.T @ model.loss.d1(y - X @ beta) + model.lam * model.regularizer.d1(beta)


NewtonSolve = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _newton_direction(model, X, y, beta, grad, newton_solve) -> np.ndarray:
    if newton_solve is not None:
        direction = newton_solve(beta, grad)
        if not np.all(np.isfinite(direction)):
            raise SingularHessian("Newton system produced a non-finite direction")
        return direction
    try:
        factor = cho_factor(hessian_arrays(model, X, y, beta), lower=True, check_finite=True)
    except (LinAlgError, ValueError) as e:
        raise SingularHessian(f"Hessian is not positive definite: {e}") from e
    return cho_solve(factor, grad)


def fit_arrays(model: PenalizedModel, X, y, init=None,
               cfg: SolverConfig = DEFAULT_SOLVER,
               newton_solve: Optional[NewtonSolve] = None) -> FitResult:
    """Newton core on raw arrays; see `fit`.

    `newton_solve(beta, grad)` may supply H(beta)^{-1} grad when the caller
    can do better than a fresh Cholesky factorization.
    """
    n, p = X.shape
    if n < 1:
        raise InvalidInputError("cannot fit on an empty dataset")
    if p > cfg.max_dim:
        raise InvalidInputError(f"p={p} exceeds the dense solver cap {cfg.max_dim}")
    beta = np.zeros(p) if init is None else np.array(init, dtype=float, copy=True)
    if beta.shape != (p,):
        raise InvalidInputError(f"init has shape {beta.shape}, expected ({p},)")

    f = _objective_arrays(model, X, y, beta)
    trace = [f]
    best = (f, beta.copy())
    for iteration in range(cfg.max_iter + 1):
        grad = _gradient_arrays(model, X, y, beta)
        grad_norm = float(np.max(np.abs(grad), initial=0.0))
        if grad_norm <= cfg.grad_tol:
            logger.debug("fit_converged", iterations=iteration, grad=grad_norm)
            return FitResult.build(model, X, y, beta, iteration, True, trace)
        if iteration == cfg.max_iter:
            break

        step = -_newton_direction(model, X, y, beta, grad, newton_solve)
        slope = float(grad @ step)

        # Backtracking with a rounding allowance so that steps taken at
        # machine precision near the optimum are not rejected.
        slack = 64.0 * np.finfo(float).eps * (1.0 + abs(f))
        t = 1.0
        for _ in range(cfg.ls_max_steps):
            candidate = beta + t * step
            f_new = _objective_arrays(model, X, y, candidate)
            if np.isfinite(f_new) and f_new <= f + cfg.ls_sufficient_decrease * t * slope + slack:
                break
            t *= cfg.ls_shrink
        else:
            logger.warning("line_search_stalled", iteration=iteration, grad=grad_norm)
            break

        beta, f = candidate, f_new
        trace.append(f)
        if f < best[0]:
            best = (f, beta.copy())

    result = FitResult.build(model, X, y, best[1], len(trace) - 1, False, trace)
    logger.error("fit_not_converged", iterations=result.iterations, grad=result.grad_inf_norm)
    raise MaxIterExceeded(
        f"Newton did not reach grad_tol={cfg.grad_tol:g} "
        f"(best gradient {result.grad_inf_norm:.3g})", best=result)


def fit(model: PenalizedModel, data: Dataset, init=None,
        cfg: SolverConfig = DEFAULT_SOLVER) -> FitResult:
    """Minimize the penalized objective on the full dataset"""
    return fit_arrays(model, data.X, data.y, init, cfg)


def fit_loo(model: PenalizedModel, data: Dataset, i: int, warm: Optional[FitResult] = None,
            cfg: SolverConfig = DEFAULT_SOLVER,
            newton_solve: Optional[NewtonSolve] = None) -> FitResult:
    """Refit with observation i deleted, warm-started at the full-data fit"""
    if data.n - 1 < 1:
        raise InvalidInputError("leave-one-out needs at least two observations")
    X, y = data.without_row(i)
    init = None if warm is None else warm.beta_hat
    return fit_arrays(model, X, y, init, cfg, newton_solve)


def one_step_loo(model: PenalizedModel, data: Dataset, fit_result: FitResult, i: int) -> np.ndarray:
    """One Newton step from beta_hat on the data without row i.

    beta_hat - l'(r_i) (sum_{j != i} l''(r_j) x_j x_j^T + lambda diag R''(beta_hat))^{-1} x_i
    """
    X, y = data.without_row(i)
    beta = fit_result.beta_hat
    H = hessian_arrays(model, X, y, beta)
    x_i = data.X[i]
    r_i = fit_result.residuals[i]
    try:
        factor = cho_factor(H, lower=True)
    except LinAlgError as e:
        raise SingularHessian(f"reduced Hessian for row {i} is singular") from e
    return beta - model.loss.d1(r_i) * cho_solve(factor, x_i)
