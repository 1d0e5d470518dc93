from __future__ import annotations

from pathlib import Path

import click

from app.commands.options import out_option
from app.schemas.manifest import RunManifest
from app.services.negctrl_inference import infer_negatives
from app.services.tsv_io import read_detection_table, write_vector


@click.command("infer-neg")
@click.argument("table_file", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--n-neg", type=int, required=True, help="Number of negative controls on the array.")
@out_option
def command(table_file: Path, n_neg: int, out: Path | None) -> None:
    """Rebuild negative-control intensities from detection p-values."""
    manifest = RunManifest(
        command="infer-neg",
        inputs=(table_file,),
        overrides={"n_neg": str(n_neg)},
        out=out,
    )
    table = read_detection_table(table_file, n_neg)
    write_vector(out, infer_negatives(table), "negative", comments=manifest.echo())
