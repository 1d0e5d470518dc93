from __future__ import annotations

import logging

import click
from pydantic import ValidationError

from app.commands import correct, evaluate, fit, infer_neg, simulate
from app.core.config import get_settings
from app.core.errors import InputError, NormgamError
from app.core.logging import setup_logging

logger = logging.getLogger(__name__)


def _validation_message(e: ValidationError) -> str:
    parts = []
    for err in e.errors():
        where = ".".join(str(loc) for loc in err["loc"])
        parts.append(f"{where}: {err['msg']}" if where else err["msg"])
    return "; ".join(parts)


class NormgamGroup(click.Group):
    """Maps library errors onto exit codes: 2 bad input, 1 numerical trouble."""

    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except ValidationError as e:
            err = InputError(_validation_message(e))
            click.echo(f"error: {err}", err=True)
            ctx.exit(err.exit_code)
        except NormgamError as e:
            click.echo(f"error: {e}", err=True)
            ctx.exit(e.exit_code)


@click.group(cls=NormgamGroup)
@click.option(
    "--log-level",
    type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
    default=None,
    help="Default: NORMGAM_LOG_LEVEL or INFO.",
)
def cli(log_level: str | None) -> None:
    """Normal-gamma background correction for microarray intensities."""
    setup_logging(log_level or get_settings().log_level)


# -----------------------------
# Commands
# -----------------------------
cli.add_command(fit.command)
cli.add_command(correct.command)
cli.add_command(simulate.command)
cli.add_command(evaluate.command)
cli.add_command(infer_neg.command)
