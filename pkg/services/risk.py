"""
Risk Estimators
Leave-one-out (LO), approximate leave-one-out (ALO), the AMP-based
estimate, K-fold cross validation and oracle out-of-sample risks
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import structlog
from scipy.linalg import LinAlgError, cho_factor, cho_solve, cholesky, solve_triangular
from scipy.optimize import brentq

from errors import (BracketFailure, CalibrationMismatch, InvalidInputError, LeverageOutOfRange,
                    LooFitError, NumericalError, SingularHessian, ZeroCurvature)
from models import Dataset, FitResult, PenalizedModel
from services.datagen import SyntheticSpec, generate_test, stream
from services.families import FamilyKind
from services.pool import run_parallel
from services.solver import DEFAULT_SOLVER, SolverConfig, fit, fit_arrays, fit_loo, hessian

logger = structlog.get_logger(__name__)

LEVERAGE_CEILING = 1.0 - 1e-8
MIN_CURVATURE = 1e-12
CALIBRATION_AGREEMENT = 1e-9

REPORT_COLUMNS = ['lambda', 'lo', 'alo', 'amp', 'kfold2', 'kfold3', 'kfold5',
                  'oracle', 'tau_hat', 'theta_hat']


@dataclass
class RiskReport:
    lam: float
    lo: Optional[float] = None
    alo: Optional[float] = None
    amp: Optional[float] = None
    kfold: Dict[int, float] = field(default_factory=dict)
    oracle: Optional[float] = None
    tau_hat: Optional[float] = None
    theta_hat: Optional[float] = None
    leverages: Optional[np.ndarray] = None

    def to_row(self) -> Dict[str, float]:
        """Flat CSV row; missing values become NaN"""
        def val(v):
            return float('nan') if v is None else float(v)

        row = {'lambda': self.lam, 'lo': val(self.lo), 'alo': val(self.alo), 'amp': val(self.amp)}
        for k in sorted({2, 3, 5} | set(self.kfold)):
            row[f'kfold{k}'] = val(self.kfold.get(k))
        row.update(oracle=val(self.oracle), tau_hat=val(self.tau_hat), theta_hat=val(self.theta_hat))
        return row


# ---- leave-one-out ------------------------------------------------------------

def loocv_risk(model: PenalizedModel, data: Dataset, cfg: SolverConfig = DEFAULT_SOLVER,
               fit_result: Optional[FitResult] = None,
               n_jobs: Optional[int] = None) -> Tuple[float, np.ndarray]:
    """Exact leave-one-out risk and the n leave-one-out residuals"""
    if data.n < 2:
        raise InvalidInputError("leave-one-out needs n >= 2")
    full = fit_result if fit_result is not None else fit(model, data, cfg=cfg)
    downdate = _rank_one_downdate(model, data, full)

    def refit(i):
        try:
            solve = None if downdate is None else downdate(i)
            beta_i = fit_loo(model, data, i, full, cfg, solve).beta_hat
        except NumericalError as e:
            logger.error("loo_refit_failed", index=i, error=str(e))
            raise LooFitError(f"leave-one-out refit failed at index {i}: {e}", index=i, cause=e) from e
        return data.y[i] - data.X[i] @ beta_i

    loo_residuals = np.array(run_parallel(refit, range(data.n), n_jobs))
    return float(np.mean(model.loss.value(loo_residuals))), loo_residuals


def _rank_one_downdate(model: PenalizedModel, data: Dataset, full: FitResult):
    """Newton systems of the leave-one-out problems when both curvatures are constant.

    The reduced Hessian is then H - c x_i x_i^T for the fixed full-data
    Hessian H, so one factorization serves every refit (Sherman-Morrison).
    """
    if not (model.loss.has_constant_curvature and model.regularizer.has_constant_curvature):
        return None
    try:
        factor = cho_factor(hessian(model, data, full.beta_hat), lower=True)
    except LinAlgError as e:
        raise SingularHessian(f"Hessian at beta_hat is not positive definite: {e}") from e
    c = float(model.loss.d2(0.0))

    def for_row(i):
        x = data.X[i]
        u = cho_solve(factor, x)
        denom = 1.0 - c * float(x @ u)
        if denom <= 0:
            raise SingularHessian(f"reduced Hessian for row {i} is singular")

        def solve(beta, grad):
            w = cho_solve(factor, grad)
            return w + u * (c * float(x @ w) / denom)

        return solve

    return for_row


def alo_leverages(model: PenalizedModel, data: Dataset, fit_result: FitResult) -> np.ndarray:
    """Diagonal of X (X^T D_l X + lambda D_R)^{-1} X^T D_l, from one Cholesky factor"""
    A = hessian(model, data, fit_result.beta_hat)
    try:
        L = cholesky(A, lower=True, check_finite=False)
    except LinAlgError as e:
        raise SingularHessian(f"Hessian at beta_hat is not positive definite: {e}") from e
    V = solve_triangular(L, data.X.T, lower=True, check_finite=False)
    h = model.loss.d2(fit_result.residuals) * np.sum(V ** 2, axis=0)
    worst = int(np.argmax(h))
    if h[worst] >= LEVERAGE_CEILING:
        raise LeverageOutOfRange(f"leverage H[{worst}]={h[worst]:.12g} is too close to 1",
                                 index=worst, value=float(h[worst]))
    return h


def alo_risk(model: PenalizedModel, data: Dataset, fit_result: FitResult,
             leverages: Optional[np.ndarray] = None) -> Tuple[float, np.ndarray]:
    """ALO risk and the corrected residuals r_i + (l'/l'') H_ii / (1 - H_ii)"""
    h = alo_leverages(model, data, fit_result) if leverages is None else np.asarray(leverages)
    if np.any(h >= LEVERAGE_CEILING):
        worst = int(np.argmax(h))
        raise LeverageOutOfRange(f"leverage H[{worst}] is too close to 1", index=worst,
                                 value=float(h[worst]))
    r = fit_result.residuals
    curv = model.loss.d2(r)
    flat = np.flatnonzero(curv < MIN_CURVATURE)
    if flat.size:
        raise ZeroCurvature(f"loss curvature vanishes at residual {flat[0]}", index=int(flat[0]))
    corrected = r + model.loss.d1(r) / curv * h / (1.0 - h)
    return float(np.mean(model.loss.value(corrected))), corrected


def kfold_risk(model: PenalizedModel, data: Dataset, K: int, seed: int,
               cfg: SolverConfig = DEFAULT_SOLVER, warm: Optional[FitResult] = None,
               n_jobs: Optional[int] = None) -> float:
    """Average held-out loss over a seeded K-fold partition.

    Folds are contiguous blocks of a uniform permutation; the remainder is
    spread one extra point per leading fold. Training folds are warm-started
    at the full-data fit.
    """
    if not 2 <= K <= data.n:
        raise InvalidInputError(f"K must satisfy 2 <= K <= n={data.n}, got {K}")
    full = warm if warm is not None else fit(model, data, cfg=cfg)
    order = stream(seed, 'kfold', K).permutation(data.n)
    folds = np.array_split(order, K)

    def held_out_loss(fold):
        mask = np.ones(data.n, dtype=bool)
        mask[fold] = False
        try:
            beta = fit_arrays(model, data.X[mask], data.y[mask], full.beta_hat, cfg).beta_hat
        except NumericalError as e:
            logger.error("fold_refit_failed", fold_size=len(fold), error=str(e))
            raise LooFitError(f"training fold refit failed: {e}", cause=e) from e
        return float(np.sum(model.loss.value(data.y[fold] - data.X[fold] @ beta)))

    return float(sum(run_parallel(held_out_loss, folds, n_jobs)) / data.n)


# ---- AMP calibration ----------------------------------------------------------

def _curvatures(fit_result: FitResult, model: PenalizedModel):
    return model.loss.d2(fit_result.residuals), model.regularizer.d2(fit_result.beta_hat)


def tau_residual(tau: float, fit_result: FitResult, model: PenalizedModel, delta: float) -> float:
    """<l'' / (1/tau + (1/(delta lambda)) <1/(1 + tau R'')> l'')> - lambda"""
    l2, r2 = _curvatures(fit_result, model)
    c = np.mean(1.0 / (1.0 + tau * r2)) / (delta * model.lam)
    return float(np.mean(l2 / (1.0 / tau + c * l2)) - model.lam)


def g_function(theta: float, fit_result: FitResult, model: PenalizedModel, delta: float) -> float:
    """G(theta); the calibrated theta_hat solves G = 1"""
    l2, r2 = _curvatures(fit_result, model)
    avg = np.mean(l2 / (1.0 + theta * l2))
    return float(np.mean(1.0 / (1.0 + theta * l2))
                 + np.mean(1.0 / (1.0 + model.lam / avg * r2)) / delta)


def theta_from_tau(tau: float, fit_result: FitResult, model: PenalizedModel, delta: float) -> float:
    _, r2 = _curvatures(fit_result, model)
    return float(np.mean(tau / (1.0 + tau * r2)) / (delta * model.lam))


def tau_from_theta(theta: float, fit_result: FitResult, model: PenalizedModel) -> float:
    l2, _ = _curvatures(fit_result, model)
    return float(model.lam / np.mean(l2 / (1.0 + theta * l2)))


def _check_delta(delta):
    if not (delta > 0 and math.isfinite(delta)):
        raise InvalidInputError(f"delta must be positive and finite, got {delta}")


def solve_tau_hat(fit_result: FitResult, model: PenalizedModel, delta: float) -> float:
    """Unique root of the tau equation by bracketing"""
    _check_delta(delta)

    def f(tau):
        return tau_residual(tau, fit_result, model, delta)

    for lo in (1e-8, 1e-9, 1e-10, 1e-11, 1e-12):
        if f(lo) <= 0:
            break
    else:
        raise BracketFailure("tau residual is positive at 1e-12")
    hi = 1.0
    for _ in range(200):
        if f(hi) > 0:
            break
        hi *= 2.0
        if hi > 1e12:
            raise BracketFailure("no sign change of the tau residual below 1e12")
    else:
        raise BracketFailure("no sign change of the tau residual after 200 doublings")
    tau = brentq(f, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    if abs(f(tau)) > 1e-12 * model.lam:
        logger.warning("tau_residual_above_tolerance", tau=tau, residual=f(tau))
    return float(tau)


def solve_theta_hat(fit_result: FitResult, model: PenalizedModel, delta: float) -> float:
    """Root of G(theta) = 1; G is strictly decreasing with G(0) > 1"""
    _check_delta(delta)

    def f(theta):
        return g_function(theta, fit_result, model, delta) - 1.0

    hi = 1.0
    while f(hi) >= 0:
        hi *= 2.0
        if hi > 1e12:
            raise BracketFailure("G stays above 1 up to theta=1e12")
    return float(brentq(f, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500))


def calibrate(fit_result: FitResult, model: PenalizedModel, delta: float) -> Tuple[float, float]:
    """(tau_hat, theta_hat) via G(theta) = 1, cross-checked against the tau equation"""
    theta_hat = solve_theta_hat(fit_result, model, delta)
    tau_hat = tau_from_theta(theta_hat, fit_result, model)
    tau_direct = solve_tau_hat(fit_result, model, delta)
    if abs(tau_hat - tau_direct) > CALIBRATION_AGREEMENT * max(1.0, tau_direct):
        raise CalibrationMismatch(
            f"calibration routes disagree: tau={tau_hat!r} via G, {tau_direct!r} direct")
    return tau_hat, theta_hat


class AmpRisk(NamedTuple):
    amp: float
    tau_hat: float
    theta_hat: float
    corrected_residuals: np.ndarray


def amp_risk(model: PenalizedModel, data: Dataset, fit_result: FitResult,
             delta: Optional[float] = None, theta: Optional[float] = None) -> AmpRisk:
    """AMP risk (1/n) sum l(r_i + theta_hat l'(r_i)).

    Passing `theta` skips calibration and uses that correction directly.
    """
    delta = data.aspect_ratio() if delta is None else delta
    if theta is None:
        tau_hat, theta_hat = calibrate(fit_result, model, delta)
    else:
        theta_hat = float(theta)
        tau_hat = tau_from_theta(theta_hat, fit_result, model)
    r = fit_result.residuals
    corrected = r + theta_hat * model.loss.d1(r)
    return AmpRisk(float(np.mean(model.loss.value(corrected))), tau_hat, theta_hat, corrected)


# ---- oracles ------------------------------------------------------------------

def oracle_risk_gaussian(fit_result: FitResult, beta_star, noise_sd: float, n: int) -> float:
    """E[(y_new - x_new^T beta_hat)^2] = sigma^2 + ||beta_hat - beta*||^2 / n for x_new ~ N(0, I/n)"""
    diff = fit_result.beta_hat - np.asarray(beta_star, dtype=float)
    return float(noise_sd ** 2 + diff @ diff / n)


def oracle_risk_mc(fit_result: FitResult, model: PenalizedModel, gen: SyntheticSpec, beta_star,
                   m: int, seed: int, batch_entries: int = 20_000_000) -> Tuple[float, float]:
    """Monte Carlo estimate of E l(y_new - x_new^T beta_hat) and its standard error"""
    if m < 100:
        raise InvalidInputError("Monte Carlo oracle needs m >= 100")
    batch = max(1, min(m, batch_entries // gen.p))
    total, total_sq, done, index = 0.0, 0.0, 0, 0
    while done < m:
        size = min(batch, m - done)
        X_new, y_new = generate_test(gen, beta_star, size, seed, index)
        losses = model.loss.value(y_new - X_new @ fit_result.beta_hat)
        total += float(np.sum(losses))
        total_sq += float(np.sum(losses ** 2))
        done += size
        index += 1
    mean = total / m
    var = max(total_sq / m - mean ** 2, 0.0) * m / (m - 1)
    return mean, math.sqrt(var / m)


def oracle_risk(fit_result: FitResult, model: PenalizedModel, beta_star, noise_sd: float, n: int,
                gen: Optional[SyntheticSpec] = None, m: int = 100_000, seed: int = 0) -> float:
    """Oracle out-of-sample risk in loss units.

    Closed form for l(u) = c u^2 / 2 with Gaussian test draws, Monte Carlo otherwise.
    """
    if model.loss.kind is FamilyKind.SQUARED:
        return 0.5 * model.loss.scale * oracle_risk_gaussian(fit_result, beta_star, noise_sd, n)
    if gen is None:
        raise InvalidInputError("a SyntheticSpec is required for the Monte Carlo oracle")
    return oracle_risk_mc(fit_result, model, gen, beta_star, m, seed)[0]


# ---- reports --------------------------------------------------------------------

def risk_report(model: PenalizedModel, data: Dataset, cfg: SolverConfig = DEFAULT_SOLVER,
                folds: Sequence[int] = (2, 3, 5), seed: int = 0, include_lo: bool = True,
                beta_star=None, noise_sd: Optional[float] = None,
                gen: Optional[SyntheticSpec] = None,
                n_jobs: Optional[int] = None) -> RiskReport:
    """Every estimate for one model/dataset pair"""
    too_many = [k for k in folds if not 2 <= k <= data.n]
    if too_many:
        raise InvalidInputError(f"fold counts {too_many} are outside 2..n={data.n}")
    full = fit(model, data, cfg=cfg)
    report = RiskReport(lam=model.lam)
    if include_lo:
        report.lo, _ = loocv_risk(model, data, cfg, full, n_jobs)
    report.leverages = alo_leverages(model, data, full)
    report.alo, _ = alo_risk(model, data, full, report.leverages)
    amp = amp_risk(model, data, full)
    report.amp, report.tau_hat, report.theta_hat = amp.amp, amp.tau_hat, amp.theta_hat
    for k in folds:
        report.kfold[k] = kfold_risk(model, data, k, seed, cfg, full, n_jobs)
    if beta_star is not None and noise_sd is not None:
        report.oracle = oracle_risk(full, model, beta_star, noise_sd, data.n, gen, seed=seed)
    return report


def select_lambda(table: pd.DataFrame,
                  estimators: Iterable[str] = ('lo', 'alo', 'amp', 'kfold2', 'kfold3',
                                               'kfold5', 'oracle')) -> Dict[str, float]:
    """lambda minimizing each estimate over a grid (NaN entries ignored)"""
    chosen = {}
    for name in estimators:
        if name in table and table[name].notna().any():
            chosen[name] = float(table.loc[table[name].idxmin(), 'lambda'])
    return chosen
