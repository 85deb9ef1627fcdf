"""
Diagnostics
Runnable checks of the supporting results behind the risk estimates:
leave-one-out linearization error, quadratic-form concentration, extreme
eigenvalues of X^T X and discrepancy sweeps over n.
"""

import math
from dataclasses import asdict, dataclass
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import structlog
from scipy.linalg import LinAlgError, cho_factor, cho_solve, eigh

from errors import InvalidInputError, NumericalError, SingularHessian
from models import Dataset, FitResult, PenalizedModel
from services.datagen import SyntheticSpec, generate
from services.pool import run_parallel
from services.risk import alo_risk, amp_risk, calibrate, g_function, loocv_risk
from services.solver import (DEFAULT_SOLVER, SolverConfig, fit, fit_loo, hessian, hessian_arrays,
                             one_step_loo)

logger = structlog.get_logger(__name__)

SWEEP_COLUMNS = ['n', 'p', 'seed', 'lo', 'alo', 'amp', 'd_lo_alo', 'd_lo_amp', 'sup_resid_gap']


@dataclass(frozen=True)
class SweepRow:
    n: int
    p: int
    seed: int
    lo: float
    alo: float
    amp: float
    d_lo_alo: float
    d_lo_amp: float
    sup_resid_gap: float
    error: Optional[str] = None

    @classmethod
    def measured(cls, n, p, seed, lo, alo, amp, sup_resid_gap) -> "SweepRow":
        return cls(n, p, seed, lo, alo, amp, abs(lo - alo), abs(lo - amp), sup_resid_gap)

    @classmethod
    def failed(cls, n, p, seed, error: str) -> "SweepRow":
        nan = float('nan')
        return cls(n, p, seed, nan, nan, nan, nan, nan, nan, error)


# ---- leave-one-out linearization ---------------------------------------------

def loo_linearization_error(model: PenalizedModel, data: Dataset, i: int, fit_result: FitResult,
                            fit_i: FitResult) -> Tuple[float, np.ndarray]:
    """eps_i = beta_i - beta_hat + l'(y_i - x_i^T beta_hat) A_i^{-1} x_i.

    A_i is the Hessian of the reduced problem at the leave-one-out
    solution beta_i.
    """
    X_red, y_red = data.without_row(i)
    A = hessian_arrays(model, X_red, y_red, fit_i.beta_hat)
    x_i = data.X[i]
    try:
        correction = cho_solve(cho_factor(A, lower=True), x_i)
    except LinAlgError as e:
        raise SingularHessian(f"reduced Hessian for row {i} is singular") from e
    eps = fit_i.beta_hat - fit_result.beta_hat + model.loss.d1(fit_result.residuals[i]) * correction
    return float(np.linalg.norm(eps)), eps


def _loo_errors(model: PenalizedModel, data: Dataset, cfg: SolverConfig,
                n_jobs: Optional[int]) -> Tuple[float, float]:
    """(max_i ||eps_i||, max_i ||beta_i - one Newton step||)"""
    full = fit(model, data, cfg=cfg)

    def one(i):
        fit_i = fit_loo(model, data, i, full, cfg)
        eps = loo_linearization_error(model, data, i, full, fit_i)[0]
        step = one_step_loo(model, data, full, i)
        return eps, float(np.linalg.norm(fit_i.beta_hat - step))

    errors = np.array(run_parallel(one, range(data.n), n_jobs))
    return float(errors[:, 0].max()), float(errors[:, 1].max())


def sup_linearization_error(model: PenalizedModel, data: Dataset,
                            cfg: SolverConfig = DEFAULT_SOLVER,
                            n_jobs: Optional[int] = None) -> float:
    """max_i ||eps_i|| over all observations"""
    return _loo_errors(model, data, cfg, n_jobs)[0]


# ---- concentration of quadratic forms -----------------------------------------

MatrixProvider = Union[Callable[[int], np.ndarray], Sequence[np.ndarray]]


def trace_concentration(data: Dataset, matrices: MatrixProvider) -> float:
    """sup_i |x_i^T G_i x_i - Tr(G_i) / n|.

    Each G_i must be independent of its own row x_i; that is the caller's
    responsibility.
    """
    get = matrices if callable(matrices) else (lambda i: matrices[i])
    worst = 0.0
    for i in range(data.n):
        G = np.asarray(get(i), dtype=float)
        if G.shape != (data.p, data.p):
            raise InvalidInputError(f"matrix {i} has shape {G.shape}, expected ({data.p}, {data.p})")
        x = data.X[i]
        worst = max(worst, abs(float(x @ G @ x) - float(np.trace(G)) / data.n))
    return worst


def loo_resolvent_provider(data: Dataset, lam: float = 1.0) -> Callable[[int], np.ndarray]:
    """i -> (X_{-i}^T X_{-i} + lam I)^{-1}, by Sherman-Morrison from one inverse"""
    A_inv = np.linalg.inv(data.X.T @ data.X + lam * np.eye(data.p))

    def provider(i):
        u = A_inv @ data.X[i]
        return A_inv + np.outer(u, u) / (1.0 - data.X[i] @ u)

    return provider


def tail_bound(n: int, c_n: float) -> float:
    """4 c_n ln n / sqrt n"""
    return 4.0 * c_n * math.log(n) / math.sqrt(n)


# ---- spectrum -----------------------------------------------------------------

class SpectrumCheck(NamedTuple):
    sigma_min: float
    sigma_max: float
    sigma_delta_bound: float


def sigma_delta(delta: float) -> float:
    """1/2 min{(1 - sqrt(1/delta))^2, 1/delta}"""
    return 0.5 * min((1.0 - math.sqrt(1.0 / delta)) ** 2, 1.0 / delta)


def spectrum_check(X) -> SpectrumCheck:
    """Extreme eigenvalues of X^T X and the lower bound sigma_delta"""
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if n <= p:
        raise InvalidInputError(f"spectrum check needs n > p, got n={n}, p={p}")
    eigenvalues = eigh(X.T @ X, eigvals_only=True)
    return SpectrumCheck(float(eigenvalues[0]), float(eigenvalues[-1]), sigma_delta(n / p))


def concentration_suite(n: int, delta: float, seeds: Sequence[int], lam: float = 1.0,
                        n_jobs: Optional[int] = None) -> pd.DataFrame:
    """Spectrum and quadratic-form tail checks on fresh Gaussian designs, one row per seed"""
    p = int(round(n / delta))
    if p < 1 or p >= n:
        raise InvalidInputError(f"need 1 <= n/delta < n, got n={n}, delta={delta}")

    def one(seed):
        data, _, _ = generate(SyntheticSpec(n=n, p=p, noise_sd=1.0, seed=seed))
        spectrum = spectrum_check(data.X)
        deviation = trace_concentration(data, loo_resolvent_provider(data, lam))
        bound = tail_bound(n, 1.0 / lam)
        return {
            'seed': seed, 'n': n, 'p': p,
            'sigma_min': spectrum.sigma_min, 'sigma_max': spectrum.sigma_max,
            'sigma_delta': spectrum.sigma_delta_bound, 'sigma_max_bound': 9.0 * (n / p) ** 2,
            'min_ok': spectrum.sigma_min >= spectrum.sigma_delta_bound,
            'max_ok': spectrum.sigma_max <= 9.0 * (n / p) ** 2,
            'tail_deviation': deviation, 'tail_bound': bound, 'tail_ok': deviation <= bound,
        }

    return pd.DataFrame(run_parallel(one, list(seeds), n_jobs))


# ---- theta_hat vs the trace of the inverse Hessian ----------------------------

class ThetaTraceGap(NamedTuple):
    theta_hat: float
    trace_over_n: float
    g_at_trace: float


def theta_trace_gap(model: PenalizedModel, data: Dataset, fit_result: FitResult,
                    delta: Optional[float] = None) -> ThetaTraceGap:
    """theta_hat next to (1/n) Tr(H^{-1}) and G evaluated there (G(theta_hat) = 1)"""
    delta = data.aspect_ratio() if delta is None else delta
    _, theta_hat = calibrate(fit_result, model, delta)
    H = hessian(model, data, fit_result.beta_hat)
    trace = float(np.trace(cho_solve(cho_factor(H, lower=True), np.eye(data.p)))) / data.n
    return ThetaTraceGap(theta_hat, trace, g_function(trace, fit_result, model, delta))


# ---- sweeps -------------------------------------------------------------------

def _sweep_cell(model: PenalizedModel, gen: SyntheticSpec, n: int, p: int, seed: int,
                cfg: SolverConfig) -> SweepRow:
    try:
        data, _, _ = generate(gen.resized(n, p, seed))
        full = fit(model, data, cfg=cfg)
        lo, loo_residuals = loocv_risk(model, data, cfg, full)
        alo, _ = alo_risk(model, data, full)
        amp = amp_risk(model, data, full)
        gap = float(np.max(np.abs(amp.corrected_residuals - loo_residuals)))
        return SweepRow.measured(n, p, seed, lo, alo, amp.amp, gap)
    except NumericalError as e:
        logger.error("sweep_cell_failed", n=n, p=p, seed=seed, error=str(e))
        return SweepRow.failed(n, p, seed, f"{type(e).__name__}: {e}")


def _grid_dims(gen: SyntheticSpec, n_grid: Sequence[int]) -> List[Tuple[int, int]]:
    dims = []
    for n in n_grid:
        p = n / gen.delta
        if abs(p - round(p)) > 1e-9 or round(p) < 1:
            raise InvalidInputError(f"n={n} gives non-integral p=n/delta={p:g}")
        dims.append((int(n), int(round(p))))
    return dims


def discrepancy_sweep(model: PenalizedModel, gen: SyntheticSpec, n_grid: Sequence[int],
                      seeds: Sequence[int], cfg: SolverConfig = DEFAULT_SOLVER,
                      n_jobs: Optional[int] = None) -> List[SweepRow]:
    """LO, ALO and AMP on fresh data for every (n, seed); delta is taken from gen.

    Failed cells are recorded with NaN values and the error text.
    """
    cells = [(n, p, seed) for n, p in _grid_dims(gen, n_grid) for seed in seeds]
    return run_parallel(lambda cell: _sweep_cell(model, gen, *cell, cfg), cells, n_jobs)


def sweep_frame(rows: Sequence[SweepRow]) -> pd.DataFrame:
    frame = pd.DataFrame([asdict(row) for row in rows])
    if frame.empty:
        return pd.DataFrame(columns=SWEEP_COLUMNS)
    return frame[SWEEP_COLUMNS]


def summarize_sweep(rows: Sequence[SweepRow]) -> pd.DataFrame:
    """Per-n medians of the discrepancies over successful cells"""
    frame = sweep_frame(rows).dropna()
    return (frame.groupby('n')[['d_lo_alo', 'd_lo_amp', 'sup_resid_gap', 'lo']]
            .median().reset_index())


def linearization_sweep(model: PenalizedModel, gen: SyntheticSpec, n_grid: Sequence[int],
                        seeds: Sequence[int], cfg: SolverConfig = DEFAULT_SOLVER,
                        n_jobs: Optional[int] = None) -> pd.DataFrame:
    """sup_i ||eps_i|| and the one-step refit gap for every (n, seed)"""
    cells = [(n, p, seed) for n, p in _grid_dims(gen, n_grid) for seed in seeds]

    def one(cell):
        n, p, seed = cell
        data, _, _ = generate(gen.resized(n, p, seed))
        sup_eps, sup_one_step = _loo_errors(model, data, cfg, n_jobs=1)
        return {'n': n, 'p': p, 'seed': seed, 'sup_eps': sup_eps, 'sup_one_step': sup_one_step}

    return pd.DataFrame(run_parallel(one, cells, n_jobs))
