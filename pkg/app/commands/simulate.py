from __future__ import annotations

from pathlib import Path

import click

from app.commands.options import threads_option
from app.schemas.manifest import RunManifest
from app.schemas.simulation import Scenario, SimulationSpec
from app.services.simulation import simulate
from app.services.tsv_io import read_vector, write_batch


@click.command("simulate")
@click.option("--scenario", type=click.Choice([s.value for s in Scenario]), required=True)
@click.option("--set", "parameter_set", type=int, default=1, show_default=True, help="Parameter set 1-9.")
@click.option("--n", "n_arrays", type=int, default=100, show_default=True, help="Number of arrays.")
@click.option("--n-reg", type=int, default=25000, show_default=True)
@click.option("--n-neg", type=int, default=1000, show_default=True)
@click.option("--p", "mixture_p", type=float, default=None, help="Mixture-noise weight (s2 only).")
@click.option(
    "--pool",
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help="Empirical noise pool, one value per line (s4 only).",
)
@click.option("--de-fraction", type=float, default=0.0, show_default=True)
@click.option("--fold-change", type=float, default=2.0, show_default=True)
@click.option("--seed", type=int, required=True)
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), required=True)
@threads_option
def command(
    scenario: str,
    parameter_set: int,
    n_arrays: int,
    n_reg: int,
    n_neg: int,
    mixture_p: float | None,
    pool: Path | None,
    de_fraction: float,
    fold_change: float,
    seed: int,
    out: Path,
    threads: int | None,
) -> None:
    """Draw a batch of simulated arrays into a directory."""
    manifest = RunManifest(
        command="simulate",
        inputs=(pool,) if pool is not None else (),
        seed=seed,
        out=out,
    )
    spec = SimulationSpec(
        scenario=scenario,
        parameter_set=parameter_set,
        n_reg=n_reg,
        n_neg=n_neg,
        n_arrays=n_arrays,
        p=mixture_p,
        pool=tuple(read_vector(pool).tolist()) if pool is not None else None,
        de_fraction=de_fraction,
        fold_change=fold_change,
        seed=seed,
    )

    batch = simulate(spec, threads=threads)
    fields = {"command": manifest.command, **spec.manifest_fields()}
    write_batch(out, batch, fields, threads=threads)
