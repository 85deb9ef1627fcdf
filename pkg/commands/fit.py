import click
import pandas as pd
import structlog

from commands.common import emit_frame, load_inputs, model_options
from models import load_vector_csv
from services.solver import SolverConfig, fit

logger = structlog.get_logger(__name__)


@click.command('fit')
@model_options
@click.option('--init', 'init_path', type=click.Path(dir_okay=False), default=None,
              help='starting beta as a one-column CSV')
@click.option('--grad-tol', type=click.FloatRange(min=0, min_open=True), default=1e-10, show_default=True)
@click.option('--max-iter', type=click.IntRange(min=1), default=200, show_default=True)
@click.option('--out', type=click.Path(dir_okay=False), default=None,
              help='write beta_hat here instead of stdout')
def fit_cmd(data_path, loss_spec, reg_spec, lam, init_path, grad_tol, max_iter, out):
    """Fit the penalized estimator and print beta_hat as CSV"""
    data, model = load_inputs(data_path, loss_spec, reg_spec, lam)
    init = load_vector_csv(init_path) if init_path else None
    result = fit(model, data, init, SolverConfig(grad_tol=grad_tol, max_iter=max_iter))
    logger.info("fit_finished", iterations=result.iterations, grad=result.grad_inf_norm,
                objective=result.objective)
    emit_frame(pd.DataFrame({'beta_hat': result.beta_hat}), out,
               f"# fit: {model.describe()} iterations={result.iterations} "
               f"grad_inf={result.grad_inf_norm:.3g}")
