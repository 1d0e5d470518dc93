from __future__ import annotations

import logging
from pathlib import Path

import click

from app.commands.options import parse_methods, parse_offsets, threads_option
from app.schemas.manifest import RunManifest
from app.services.pipeline import evaluate_batch
from app.services.tsv_io import read_batch, write_profile, write_report

logger = logging.getLogger(__name__)


def profile_path(report: Path, name: str) -> Path:
    """report.tsv -> report.<name>.tsv next to it."""
    return report.with_name(f"{report.stem}.{name}{report.suffix or '.tsv'}")


@click.command("evaluate")
@click.argument("batch_dir", type=click.Path(file_okay=False, path_type=Path))
@click.option("--methods", default=None, help="Comma-separated correction tags (default: all six).")
@click.option("--offsets", default=None, help="Comma-separated offsets for the AUC rows (default: 0).")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
@threads_option
def command(batch_dir: Path, methods: str | None, offsets: str | None, out: Path, threads: int | None) -> None:
    """Fit, correct and score every array of a simulated batch."""
    manifest = RunManifest(
        command="evaluate",
        inputs=(batch_dir,),
        methods=parse_methods(methods),
        offsets=parse_offsets(offsets),
        out=out,
    )
    batch, fields = read_batch(batch_dir)
    result = evaluate_batch(batch, manifest.methods, manifest.offsets, threads=threads)

    comments = manifest.echo() + [f"batch_{k}={v}" for k, v in fields.items() if k != "groups"]
    write_report(out, result.report, comments=comments)
    for name, rows in result.profiles.items():
        write_profile(profile_path(out, name), rows)

    if result.not_converged:
        logger.warning("%d fits did not converge; report written anyway", result.not_converged)
        click.get_current_context().exit(1)
