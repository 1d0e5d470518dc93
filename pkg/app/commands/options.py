from __future__ import annotations

from pathlib import Path

import click

from app.core.errors import InputError
from app.schemas.params import CorrectionTag

# -----------------------------
# Shared options
# -----------------------------
out_option = click.option(
    "--out",
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help="Output file (stdout when omitted).",
)

threads_option = click.option(
    "--threads",
    type=click.IntRange(min=1),
    default=None,
    help="Worker threads (default: NORMGAM_THREADS).",
)

negatives_option = click.option(
    "--negatives",
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help="Negative-control intensities, one per line.",
)


# -----------------------------
# Small helpers
# -----------------------------
def split_list(value: str | None) -> list[str]:
    return [item.strip() for item in (value or "").split(",") if item.strip()]


def parse_methods(value: str | None) -> tuple[CorrectionTag, ...]:
    names = split_list(value)
    if not names:
        return tuple(CorrectionTag)
    try:
        return tuple(CorrectionTag(name.upper()) for name in names)
    except ValueError:
        known = ", ".join(t.value for t in CorrectionTag)
        raise InputError(f"unknown method in {value!r}; choose from {known}") from None


def parse_offsets(value: str | None) -> tuple[float, ...]:
    names = split_list(value)
    try:
        return tuple(float(v) for v in names) or (0.0,)
    except ValueError:
        raise InputError(f"offsets must be numbers, got {value!r}") from None
