import click
import structlog

from config import load_experiment_config
from services.experiments import EXPERIMENTS, run_experiment

logger = structlog.get_logger(__name__)


@click.command('experiment')
@click.argument('name', type=click.Choice(sorted(EXPERIMENTS)))
@click.option('--config', 'config_path', type=click.Path(exists=True, dir_okay=False), default=None,
              help='plain-text `key = value` experiment config')
@click.option('--seed', type=click.IntRange(min=0), default=None, help='overrides the config seed')
@click.option('--out', 'output_dir', type=click.Path(file_okay=False), default=None,
              help='overrides the config output_dir')
@click.option('--reps', type=click.IntRange(min=1), default=None)
@click.option('--n-jobs', type=int, default=None)
def experiment_cmd(name, config_path, seed, output_dir, reps, n_jobs):
    """Run a named experiment and list the files it wrote"""
    cfg = load_experiment_config(config_path, experiment=name, seed=seed, output_dir=output_dir,
                                 reps=reps, n_jobs=n_jobs)
    logger.info("experiment_started", experiment=name, seed=cfg.seed, output_dir=str(cfg.output_dir))
    output = run_experiment(cfg)
    for path in output.files.values():
        click.echo(str(path))
