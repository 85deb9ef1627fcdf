"""Options and output helpers shared by the single-dataset commands."""
from pathlib import Path
from typing import Optional, Tuple

import click
import pandas as pd

from models import Dataset, PenalizedModel, write_frame
from services.families import parse_family


_MODEL_OPTIONS = [
    click.option("--data", "data_path", required=True, type=click.Path(dir_okay=False),
                 help="CSV with columns y, x1..xp"),
    click.option("--loss", "loss_spec", default="squared", show_default=True,
                 help="loss family, e.g. pseudo_huber:mu=1"),
    click.option("--reg", "reg_spec", default="ridge", show_default=True,
                 help="regularizer family, e.g. smoothed_absolute:mu=0.1"),
    click.option("--lambda", "lam", default=1.0, show_default=True, type=float),
]


def model_options(func):
    """--data, --loss, --reg and --lambda"""
    for option in reversed(_MODEL_OPTIONS):
        func = option(func)
    return func


def load_inputs(data_path, loss_spec: str, reg_spec: str, lam: float) -> Tuple[Dataset, PenalizedModel]:
    model = PenalizedModel(parse_family(loss_spec), parse_family(reg_spec), lam)
    return Dataset.from_csv(data_path), model


def emit_frame(frame: pd.DataFrame, out: Optional[Path], comment: Optional[str] = None) -> None:
    """Write a CSV to `out`, or to stdout when no path is given"""
    if out is not None:
        write_frame(frame, out, comment)
        return
    if comment:
        click.echo(comment if comment.startswith('#') else '# ' + comment)
    click.echo(frame.to_csv(index=False, float_format="%.17g"), nl=False)
