"""
AMP Engine
Approximate message passing for the penalized estimator and a checker for
its stationarity system. With the schedule held at the calibrated tau_hat
the fixed point of the iteration is the penalized estimator itself.
"""

from dataclasses import dataclass, replace
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import structlog
from scipy.optimize import brentq

from errors import DegenerateOnsager, InvalidInputError, NonConvergence, ThetaBracketFailure
from models import Dataset, FitResult, PenalizedModel, training_risk
from services.families import psi

logger = structlog.get_logger(__name__)

ONSAGER_FLOOR = 1e-12
THETA_START = 1e-12
THETA_CEILING = 1e12

TRACE_COLUMNS = ['t', 'delta_beta_inf', 'theta_t', 'tau_t', 'train_risk']


@dataclass(frozen=True)
class AmpState:
    """AMP iterate after t steps: beta^t, the last z, theta and tau used,
    and the Onsager memory psi(z^{t-1}, theta^{t-1})."""
    t: int
    beta: np.ndarray
    z: np.ndarray
    theta: Optional[float]
    tau: float
    psi_prev: np.ndarray
    theta_bracket: Optional[Tuple[float, float]] = None

    @classmethod
    def initial(cls, data: Dataset, tau: float, beta0=None) -> "AmpState":
        """beta^0 (zero by default) with no Onsager memory"""
        beta = np.zeros(data.p) if beta0 is None else np.asarray(beta0, dtype=float).copy()
        if beta.shape != (data.p,):
            raise InvalidInputError(f"beta0 has shape {beta.shape}, expected ({data.p},)")
        return cls(0, beta, data.y - data.X @ beta, None, float(tau), np.zeros(data.n))

    @classmethod
    def from_fit(cls, fit_result: FitResult, model: PenalizedModel, tau_hat: float,
                 theta_hat: float) -> "AmpState":
        """State sitting at the penalized estimator with z = r + theta_hat l'(r)"""
        memory = theta_hat * model.loss.d1(fit_result.residuals)
        return cls(0, np.array(fit_result.beta_hat), fit_result.residuals + memory,
                   float(theta_hat), float(tau_hat), memory)


class ThetaSolution(NamedTuple):
    theta: float
    bracket: Tuple[float, float]
    gap: float


class TraceRecord(NamedTuple):
    t: int
    delta_beta_inf: float
    theta_t: float
    tau_t: float
    train_risk: float
    theta_bracket: Tuple[float, float]


@dataclass(frozen=True)
class FixedPointResidual:
    stationarity: float
    tau_eq: float
    theta_eq: float
    z_eq: float

    def max(self) -> float:
        return max(self.stationarity, self.tau_eq, self.theta_eq, self.z_eq)


def _theta_gap(theta, z, beta, tau, model, data, delta):
    psi_val, psi_d1 = psi(model.loss, z, theta)
    onsager = float(np.mean(psi_d1))
    arg = beta + data.X.T @ psi_val / onsager
    rhs = float(np.mean(model.regularizer.prox_derivative(arg, tau))) / delta
    return onsager - rhs


def solve_theta_t(z, current_beta_arg, tau: float, model: PenalizedModel, data: Dataset,
                  delta: Optional[float] = None) -> ThetaSolution:
    """Smallest theta > 0 with <psi'(z, theta)> = (1/delta) <eta'(beta + X^T psi / <psi'>, tau)>.

    Scans theta upward geometrically from 1e-12 (where the left side is
    ~0) to the first sign change, then refines inside that bracket.
    """
    if not tau > 0:
        raise InvalidInputError(f"tau must be positive, got {tau}")
    delta = data.aspect_ratio() if delta is None else delta
    z = np.asarray(z, dtype=float)
    beta = np.asarray(current_beta_arg, dtype=float)

    def gap(theta):
        return _theta_gap(theta, z, beta, tau, model, data, delta)

    lo = THETA_START
    g_lo = gap(lo)
    if g_lo >= 0:
        raise ThetaBracketFailure(f"theta equation has no sign change above {lo:g} (gap={g_lo:.3g})")
    while True:
        hi = 2.0 * lo
        g_hi = gap(hi)
        if g_hi >= 0:
            break
        if hi > THETA_CEILING:
            raise ThetaBracketFailure(f"theta equation has no root below {THETA_CEILING:g}")
        lo = hi
    if g_hi == 0:
        theta = hi
    else:
        theta = brentq(gap, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    residual = gap(theta)
    if abs(residual) > 1e-12:
        logger.warning("theta_gap_above_tolerance", theta=theta, gap=residual)
    return ThetaSolution(float(theta), (lo, hi), float(residual))


def amp_step(model: PenalizedModel, data: Dataset, state: AmpState,
             delta: Optional[float] = None, damping: float = 0.0) -> AmpState:
    """z^t = y - X beta^t + psi(z^{t-1}, theta^{t-1});
    beta^{t+1} = eta(beta^t + X^T psi(z^t, theta^t) / <psi'(z^t, theta^t)>, tau_t)"""
    delta = data.aspect_ratio() if delta is None else delta
    z = data.y - data.X @ state.beta + state.psi_prev
    solution = solve_theta_t(z, state.beta, state.tau, model, data, delta)
    psi_val, psi_d1 = psi(model.loss, z, solution.theta)
    onsager = float(np.mean(psi_d1))
    if onsager <= ONSAGER_FLOOR:
        raise DegenerateOnsager(f"<psi'> = {onsager:.3g} at t={state.t}")
    beta_next = model.regularizer.prox(state.beta + data.X.T @ psi_val / onsager, state.tau)
    if damping:
        beta_next = (1.0 - damping) * beta_next + damping * state.beta
    return AmpState(state.t + 1, beta_next, z, solution.theta, state.tau, psi_val,
                    solution.bracket)


TauSchedule = Union[float, Sequence[float], Callable[[int], float]]


def _schedule_fn(tau_schedule: TauSchedule) -> Callable[[int], float]:
    if callable(tau_schedule):
        return tau_schedule
    if np.isscalar(tau_schedule):
        value = float(tau_schedule)
        return lambda t: value
    values = [float(v) for v in tau_schedule]
    if not values:
        raise InvalidInputError("tau schedule is empty")
    return lambda t: values[min(t, len(values) - 1)]


def geometric_schedule(tau_hat: float, c: float) -> Callable[[int], float]:
    """tau_t = tau_hat (1 + c 0.9^t)"""
    return lambda t: tau_hat * (1.0 + c * 0.9 ** t)


def amp_run(model: PenalizedModel, data: Dataset, tau_schedule: TauSchedule,
            init=None, max_iter: int = 500, tol: float = 1e-9,
            damping: float = 0.0, delta: Optional[float] = None) -> Tuple[AmpState, List[TraceRecord]]:
    """Iterate amp_step until ||beta^{t+1} - beta^t||_inf <= tol.

    `init` may be an AmpState or a starting beta (zero by default).
    """
    if not 0.0 <= damping < 1.0:
        raise InvalidInputError("damping must lie in [0, 1)")
    schedule = _schedule_fn(tau_schedule)
    delta = data.aspect_ratio() if delta is None else delta
    state = init if isinstance(init, AmpState) else AmpState.initial(data, schedule(0), init)
    trace: List[TraceRecord] = []
    for _ in range(max_iter):
        tau_t = schedule(state.t)
        if not tau_t > 0:
            raise InvalidInputError(f"tau schedule produced {tau_t} at t={state.t}")
        current = replace(state, tau=tau_t)
        state = amp_step(model, data, current, delta, damping)
        if not np.all(np.isfinite(state.beta)):
            raise NonConvergence(f"AMP diverged at t={state.t}", trace, state)
        change = float(np.max(np.abs(state.beta - current.beta), initial=0.0))
        trace.append(TraceRecord(current.t, change, state.theta, tau_t,
                                 training_risk(model, data, state.beta), state.theta_bracket))
        if change <= tol:
            logger.info("amp_converged", iterations=state.t, delta_beta=change)
            return state, trace
    logger.error("amp_not_converged", iterations=max_iter, delta_beta=trace[-1].delta_beta_inf)
    raise NonConvergence(f"AMP did not converge in {max_iter} iterations", trace, state)


def check_fixed_point(state: AmpState, model: PenalizedModel, data: Dataset,
                      delta: Optional[float] = None) -> FixedPointResidual:
    """Residuals of the stationarity system with gamma = lambda"""
    if state.theta is None:
        raise InvalidInputError("state has no theta yet; run at least one AMP step")
    delta = data.aspect_ratio() if delta is None else delta
    lam, tau, theta = model.lam, state.tau, state.theta
    r = data.y - data.X @ state.beta
    l1, l2 = model.loss.d1(r), model.loss.d2(r)
    r2 = model.regularizer.d2(state.beta)
    stationarity = -data.X.T @ l1 + lam * model.regularizer.d1(state.beta)
    shrink = np.mean(1.0 / (1.0 + tau * r2))
    tau_eq = np.mean(l2 / (1.0 / tau + shrink * l2 / (delta * lam))) - lam
    theta_eq = theta - np.mean(tau / (1.0 + tau * r2)) / (delta * lam)
    z_eq = state.z - (r + theta * l1)
    return FixedPointResidual(float(np.max(np.abs(stationarity), initial=0.0)), float(abs(tau_eq)),
                              float(abs(theta_eq)), float(np.max(np.abs(z_eq), initial=0.0)))


def trace_frame(trace: Sequence[TraceRecord]) -> pd.DataFrame:
    return pd.DataFrame([rec[:5] for rec in trace], columns=TRACE_COLUMNS)
