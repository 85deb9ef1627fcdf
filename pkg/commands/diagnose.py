import click
import pandas as pd

from commands.common import emit_frame
from services.datagen import derive_seed
from services.diagnostics import concentration_suite


def summarize_concentration(frame: pd.DataFrame) -> pd.DataFrame:
    return pd.DataFrame([{
        'n': int(frame['n'].iloc[0]),
        'p': int(frame['p'].iloc[0]),
        'seeds': len(frame),
        'min_ok': int(frame['min_ok'].sum()),
        'max_ok': int(frame['max_ok'].sum()),
        'tail_ok': int(frame['tail_ok'].sum()),
        'sigma_min_lowest': float(frame['sigma_min'].min()),
        'sigma_delta': float(frame['sigma_delta'].iloc[0]),
        'sigma_max_highest': float(frame['sigma_max'].max()),
        'tail_deviation_median': float(frame['tail_deviation'].median()),
        'tail_bound': float(frame['tail_bound'].iloc[0]),
    }])


@click.command('diagnose')
@click.option('--n', type=click.IntRange(min=3), default=1000, show_default=True)
@click.option('--delta', type=click.FloatRange(min=1, min_open=True), default=2.0, show_default=True)
@click.option('--seeds', type=click.IntRange(min=1), default=20, show_default=True,
              help='number of independent designs')
@click.option('--seed', type=click.IntRange(min=0), default=0, show_default=True)
@click.option('--lambda', 'lam', type=click.FloatRange(min=0, min_open=True), default=1.0,
              show_default=True, help='ridge of the leave-one-out resolvents')
@click.option('--n-jobs', type=int, default=None)
@click.option('--out', type=click.Path(dir_okay=False), default=None,
              help='also write the per-seed table here')
def diagnose_cmd(n, delta, seeds, seed, lam, n_jobs, out):
    """Spectrum and quadratic-form concentration checks; prints a summary CSV"""
    seed_list = [derive_seed(seed, 'diagnose', index) for index in range(seeds)]
    frame = concentration_suite(n, delta, seed_list, lam=lam, n_jobs=n_jobs)
    comment = f"# diagnose: n={n} delta={delta:g} lambda={lam:g} seed={seed}"
    if out is not None:
        emit_frame(frame, out, comment)
    emit_frame(summarize_concentration(frame), None, comment)
