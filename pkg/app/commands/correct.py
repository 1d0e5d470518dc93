from __future__ import annotations

from pathlib import Path

import click

from app.commands.options import negatives_option, out_option
from app.core.errors import InputError
from app.schemas.manifest import RunManifest
from app.schemas.params import MODEL_TAGS, CorrectionTag
from app.services.correction import correct, make_method
from app.services.tsv_io import read_array, read_params, write_vector


@click.command("correct")
@click.argument("array_file", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--params", "params_file", type=click.Path(dir_okay=False, path_type=Path), default=None)
@click.option("--subtract", is_flag=True, help="Subtract the negative-control median instead.")
@negatives_option
@out_option
def command(
    array_file: Path,
    params_file: Path | None,
    subtract: bool,
    negatives: Path | None,
    out: Path | None,
) -> None:
    """Background-correct the regular probes of one array."""
    if subtract == (params_file is not None):
        raise InputError("give exactly one of --params or --subtract")

    manifest = RunManifest(
        command="correct",
        inputs=tuple(p for p in (array_file, params_file, negatives) if p is not None),
        overrides={"method": "subtract"} if subtract else {},
        out=out,
    )
    arr = read_array(array_file, negatives)

    if subtract:
        method = make_method(CorrectionTag.SUBTRACT, negative=arr.negative)
    else:
        model, params = read_params(params_file)
        method = make_method(MODEL_TAGS[model], params=params)

    corrected = correct(arr.regular, method)
    ids = arr.probe_ids or tuple(f"probe_{j + 1}" for j in range(arr.n_reg))
    write_vector(out, corrected, "corrected", ids=ids, comments=manifest.echo())
