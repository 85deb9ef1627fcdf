import click
import numpy as np
import structlog

from commands.common import emit_frame, load_inputs, model_options
from errors import NonConvergence
from services.amp import amp_run, check_fixed_point, geometric_schedule, trace_frame
from services.risk import calibrate
from services.solver import fit

logger = structlog.get_logger(__name__)


@click.command('amp')
@model_options
@click.option('--tau', type=click.FloatRange(min=0, min_open=True), default=None,
              help='constant tau_t; defaults to the calibrated tau_hat')
@click.option('--schedule-c', type=float, default=None,
              help='use tau_t = tau (1 + c 0.9^t) instead of a constant')
@click.option('--max-iter', type=click.IntRange(min=1), default=500, show_default=True)
@click.option('--tol', type=click.FloatRange(min=0, min_open=True), default=1e-9, show_default=True)
@click.option('--damping', type=click.FloatRange(min=0, max=1, max_open=True), default=0.0,
              show_default=True)
@click.option('--out', type=click.Path(dir_okay=False), default=None)
def amp_cmd(data_path, loss_spec, reg_spec, lam, tau, schedule_c, max_iter, tol, damping, out):
    """Run AMP from beta = 0 and print the per-iteration trace"""
    data, model = load_inputs(data_path, loss_spec, reg_spec, lam)
    full = fit(model, data)
    tau_hat, theta_hat = calibrate(full, model, data.aspect_ratio())
    tau = tau_hat if tau is None else tau
    schedule = tau if schedule_c is None else geometric_schedule(tau, schedule_c)
    comment = f"# amp: {model.describe()} tau={tau!r} tau_hat={tau_hat!r} theta_hat={theta_hat!r}"
    try:
        state, trace = amp_run(model, data, schedule, max_iter=max_iter, tol=tol, damping=damping)
    except NonConvergence as e:
        if e.trace:
            emit_frame(trace_frame(e.trace), out, comment + " converged=false")
        raise
    residual = check_fixed_point(state, model, data)
    logger.info("amp_finished", iterations=state.t,
                beta_gap=float(np.max(np.abs(state.beta - full.beta_hat))),
                fixed_point_residual=residual.max())
    emit_frame(trace_frame(trace), out, comment + " converged=true")
