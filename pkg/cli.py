"""
Command-line entry point: a click group with one command per module in
commands/, structured logging on stderr and error-to-exit-code mapping.
"""
import logging
import sys

import click
import structlog

from commands import amp_cmd, diagnose_cmd, experiment_cmd, fit_cmd, risk_cmd
from config import get_config
from errors import InvalidInputError, NumericalError

logger = structlog.get_logger(__name__)

SYNOPSIS = ("usage: risk-toolkit [--log-level LEVEL] [--log-json] "
            "{fit,risk,amp,experiment,diagnose} [OPTIONS]  (see --help)")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2


def configure_logging(level=None, json_logs=None):
    """Route stdlib logging and structlog to stderr; stdout carries CSV only"""
    settings = get_config()
    level = (level or settings.LOG_LEVEL).upper()
    json_logs = settings.LOG_JSON if json_logs is None else json_logs
    logging.basicConfig(level=getattr(logging, level, logging.INFO), stream=sys.stderr,
                        format='%(message)s', force=True)
    renderer = structlog.processors.JSONRenderer() if json_logs else structlog.dev.ConsoleRenderer(colors=False)
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.processors.TimeStamper(fmt='iso'),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            renderer,
        ],
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
    )


@click.group()
@click.option('--log-level', default=None, help='DEBUG, INFO, WARNING or ERROR')
@click.option('--log-json/--no-log-json', default=None, help='render logs as JSON lines')
def cli(log_level, log_json):
    """Out-of-sample risk estimation for penalized regression"""
    configure_logging(log_level, log_json)


# Register commands
cli.add_command(fit_cmd)
cli.add_command(risk_cmd)
cli.add_command(amp_cmd)
cli.add_command(experiment_cmd)
cli.add_command(diagnose_cmd)


def _usage_error(message: str) -> int:
    click.echo(f"error: {message}", err=True)
    click.echo(SYNOPSIS, err=True)
    return EXIT_USAGE


def run_cli(argv=None) -> int:
    """Run the CLI in-process and return its exit code"""
    args = sys.argv[1:] if argv is None else list(argv)
    try:
        rv = cli.main(args=args, prog_name="risk-toolkit", standalone_mode=False)
    except click.ClickException as e:
        return _usage_error(e.format_message())
    except click.Abort:
        return _usage_error("aborted")
    except InvalidInputError as e:
        return _usage_error(str(e))
    except NumericalError as e:
        logger.error("numerical_failure", error_type=type(e).__name__, error=str(e))
        click.echo(f"numerical failure: {type(e).__name__}: {e}", err=True)
        return EXIT_NUMERICAL
    # click returns the exit code of --help and similar early exits
    return rv if isinstance(rv, int) else EXIT_OK


if __name__ == '__main__':
    sys.exit(run_cli())
