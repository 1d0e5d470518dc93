from __future__ import annotations

import logging
from pathlib import Path

import click

from app.commands.options import negatives_option, out_option
from app.models.probe_array import FitResult, ProbeArray
from app.schemas.manifest import RunManifest
from app.schemas.params import MODEL_TAGS, NormexpParams
from app.services.convolution import build_density_grid
from app.services.estimation import loglik_normexp, normexp_mle, normexp_np, normexp_rma, normgam_mle
from app.services.tsv_io import read_array, write_density_grid, write_params

logger = logging.getLogger(__name__)


def _closed_form(arr: ProbeArray, params: NormexpParams) -> FitResult:
    return FitResult(params=params, loglik=loglik_normexp(params, arr), iterations=0, converged=True)


def run_fit(arr: ProbeArray, model: str) -> FitResult:
    if model == "normgam":
        return normgam_mle(arr)
    if model == "normexp-mle":
        return normexp_mle(arr)
    if model == "normexp-np":
        return _closed_form(arr, normexp_np(arr))
    # RMA reads regular probes only
    arr.require_sizes(negative=0)
    return _closed_form(arr, normexp_rma(arr.regular))


@click.command("fit")
@click.argument("array_file", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--model", type=click.Choice(list(MODEL_TAGS)), required=True)
@negatives_option
@out_option
@click.option(
    "--dump-grid",
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help="Also write the fitted density on its FFT grid.",
)
def command(array_file: Path, model: str, negatives: Path | None, out: Path | None, dump_grid: Path | None) -> None:
    """Estimate background-correction parameters for one array."""
    manifest = RunManifest(
        command="fit",
        inputs=tuple(p for p in (array_file, negatives) if p is not None),
        overrides={"model": model},
        out=out,
    )
    arr = read_array(array_file, negatives)
    fit = run_fit(arr, model)

    write_params(out, model, fit, comments=manifest.echo())
    if dump_grid is not None:
        p = fit.params.as_normal_gamma() if isinstance(fit.params, NormexpParams) else fit.params
        write_density_grid(dump_grid, build_density_grid(p))

    for note in fit.notes:
        logger.warning(note)
    if not fit.converged:
        logger.warning("%s fit did not converge after %d iterations", model, fit.iterations)
        click.get_current_context().exit(1)
