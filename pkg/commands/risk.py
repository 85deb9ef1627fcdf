import click
import pandas as pd
import structlog

from commands.common import emit_frame, load_inputs, model_options
from config import get_config
from errors import InvalidInputError
from models import load_vector_csv
from services.datagen import SyntheticSpec
from services.risk import risk_report

logger = structlog.get_logger(__name__)


def parse_folds(text: str):
    if text.strip().lower() in ('', 'none'):
        return ()
    try:
        folds = tuple(int(item) for item in text.split(',') if item.strip())
    except ValueError:
        raise InvalidInputError(f"--folds expects comma-separated integers, got {text!r}")
    if any(k < 2 for k in folds):
        raise InvalidInputError("every fold count must be >= 2")
    return folds


@click.command('risk')
@model_options
@click.option('--folds', default='2,3,5', show_default=True,
              help="K-fold counts, comma separated; 'none' to skip")
@click.option('--seed', type=click.IntRange(min=0), default=None, help='seed of the fold split')
@click.option('--lo/--no-lo', 'include_lo', default=True, show_default=True,
              help='run the n exact leave-one-out refits')
@click.option('--beta-star', 'beta_star_path', type=click.Path(dir_okay=False), default=None,
              help='true coefficients, enables the oracle column')
@click.option('--noise-sd', type=click.FloatRange(min=0), default=1.0, show_default=True)
@click.option('--n-jobs', type=int, default=None)
@click.option('--out', type=click.Path(dir_okay=False), default=None)
def risk_cmd(data_path, loss_spec, reg_spec, lam, folds, seed, include_lo, beta_star_path,
             noise_sd, n_jobs, out):
    """Print LO, ALO, AMP, K-fold (and oracle) risk estimates as one CSV row"""
    data, model = load_inputs(data_path, loss_spec, reg_spec, lam)
    seed = get_config().SEED if seed is None else seed
    beta_star = load_vector_csv(beta_star_path) if beta_star_path else None
    gen = None
    if beta_star is not None:
        if beta_star.shape != (data.p,):
            raise InvalidInputError(f"beta_star has {beta_star.shape[0]} entries, expected {data.p}")
        gen = SyntheticSpec(n=data.n, p=data.p, noise_sd=noise_sd, seed=seed)
    report = risk_report(model, data, folds=parse_folds(folds), seed=seed, include_lo=include_lo,
                         beta_star=beta_star, noise_sd=noise_sd if beta_star is not None else None,
                         gen=gen, n_jobs=n_jobs)
    logger.info("risk_finished", lam=lam, alo=report.alo, amp=report.amp)
    emit_frame(pd.DataFrame([report.to_row()]), out, f"# risk: {model.describe()} seed={seed}")
