"""
Plain-text file formats.

  array file    '#' comments, optional header, `probe_id <TAB> intensity
                [<TAB> detection_pvalue]` rows, then an optional `>negative`
                line followed by negative-control rows
  vector file   one value per row (optionally `id <TAB> value`)
  params file   key=value lines
  batch dir     array_<l>.tsv, negative_<l>.tsv, signal[_<l>].tsv,
                [de_labels.tsv], manifest.txt (written last)
  report        metric, method, set, scale, value
  profile       x, method, value

Tables are parsed and written with pandas. Every numeric value is written
with the configured number of significant digits (17 by default), so a file
read back reproduces the float exactly.
"""

from __future__ import annotations

import csv
import logging
import sys
from collections.abc import Iterable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import TextIO

import numpy as np
import pandas as pd

from app.core.config import get_settings
from app.core.errors import InputError
from app.models.batch import SimulatedBatch
from app.models.density_grid import DensityGrid
from app.models.detection import DetectionTable
from app.models.probe_array import FitResult, ProbeArray
from app.schemas.params import MODEL_TAGS, NormalGammaParams, NormexpParams
from app.schemas.report import EvalReport

logger = logging.getLogger(__name__)

NEGATIVE_SENTINEL = ">negative"
MANIFEST = "manifest.txt"

# one table block: a frame and whether its column names are written
Block = str | tuple[pd.DataFrame, bool]


def fmt(value: float) -> str:
    return f"{float(value):.{get_settings().output_digits}g}"


def _float_format() -> str:
    return f"%.{get_settings().output_digits}g"


def _is_float(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


# -----------------------------
# Reading tables
# -----------------------------
@dataclass(frozen=True)
class _Section:
    ids: tuple[str, ...]
    values: np.ndarray
    pvalues: np.ndarray | None


def _lines(path: Path) -> list[str]:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise InputError(f"cannot read {path}: {e.strerror}") from e
    return [line.rstrip("\r") for line in text.split("\n")]


def _layout(path: Path) -> tuple[list[int], list[int] | None]:
    """0-based indices of the data lines before and after the `>negative` line."""
    regular: list[int] = []
    negative: list[int] | None = None
    current = regular
    for i, line in enumerate(_lines(path)):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped == NEGATIVE_SENTINEL:
            if negative is not None:
                raise InputError(f"{path}:{i + 1}: second {NEGATIVE_SENTINEL} section")
            negative = []
            current = negative
            continue
        current.append(i)
    return regular, negative


def _frame(path: Path, rows: list[int]) -> pd.DataFrame:
    """The given physical lines as a string frame; row labels are 1-based line numbers."""
    keep = set(rows)
    try:
        frame = pd.read_csv(
            path,
            sep="\t",
            header=None,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=False,
            quoting=csv.QUOTE_NONE,
            skiprows=lambda i: i not in keep,
        )
    except pd.errors.ParserError as e:
        raise InputError(f"{path}: {e}") from None
    frame = frame.fillna("")
    frame.index = [i + 1 for i in rows]
    return frame


def _numbers(path: Path, raw: pd.Series, what: str) -> np.ndarray:
    # astype parses with float(), which rounds correctly; to_numeric only locates failures
    try:
        values = raw.astype(float).to_numpy()
    except ValueError:
        values = pd.to_numeric(raw, errors="coerce").to_numpy(dtype=float)
    bad = ~np.isfinite(values)
    if np.any(bad):
        j = int(np.argmax(bad))
        text = raw.iloc[j]
        kind = "non-finite" if _is_float(text) else "cannot parse"
        raise InputError(f"{path}:{raw.index[j]}: {kind} {what} {text!r}")
    return values


def _section(path: Path, rows: list[int]) -> _Section:
    if not rows:
        return _Section(ids=(), values=np.empty(0), pvalues=None)

    frame = _frame(path, rows)
    if frame.shape[1] > 3:
        raise InputError(f"{path}:{frame.index[0]}: expected at most 3 columns, got {frame.shape[1]}")

    # a header is a first row with no numeric field at all
    first = [f for f in frame.iloc[0] if f != ""]
    if not any(_is_float(f) for f in first):
        frame = frame.iloc[1:]
    if frame.empty:
        return _Section(ids=(), values=np.empty(0), pvalues=None)

    if frame.shape[1] == 1:
        return _Section(
            ids=tuple(f"row{j + 1}" for j in range(len(frame))),
            values=_numbers(path, frame[0], "value"),
            pvalues=None,
        )

    values = _numbers(path, frame[1], "intensity")
    pvalues = None
    if frame.shape[1] == 3:
        given = frame[2] != ""
        if given.any() and not given.all():
            raise InputError(f"{path}: detection p-values present on some rows only")
        if given.all():
            pvalues = _numbers(path, frame[2], "detection p-value")
    return _Section(ids=tuple(frame[0]), values=values, pvalues=pvalues)


def _read_sections(path: Path) -> tuple[_Section, _Section | None]:
    regular, negative = _layout(path)
    return _section(path, regular), (None if negative is None else _section(path, negative))


# -----------------------------
# Writing tables
# -----------------------------
def _emit(handle: TextIO, blocks: Iterable[Block], comments: Iterable[str]) -> None:
    for c in comments:
        handle.write(f"# {c}\n")
    for block in blocks:
        if isinstance(block, str):
            handle.write(block + "\n")
            continue
        frame, header = block
        frame.to_csv(handle, sep="\t", index=False, header=header, float_format=_float_format(), lineterminator="\n")


def _write(path: Path | None, blocks: Iterable[Block], comments: Iterable[str] = ()) -> None:
    """Write to path, or to stdout when path is None."""
    if path is None:
        _emit(sys.stdout, blocks, comments)
        sys.stdout.flush()
        return

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        _emit(handle, blocks, comments)


def _column(values, column: str | None, ids: Iterable[str] | None) -> tuple[pd.DataFrame, bool]:
    values = np.asarray(values, dtype=float)
    if ids is None:
        return pd.DataFrame({column or "value": values}), column is not None
    return pd.DataFrame({"probe_id": list(ids), column or "value": values}), column is not None


# -----------------------------
# Arrays and vectors
# -----------------------------
def read_vector(path: Path) -> np.ndarray:
    path = Path(path)
    section, extra = _read_sections(path)
    if extra is not None:
        raise InputError(f"{path}: unexpected {NEGATIVE_SENTINEL} section in a vector file")
    return section.values


def read_array(path: Path, negatives: Path | None = None) -> ProbeArray:
    path = Path(path)
    regular, negative = _read_sections(path)
    if not regular.values.size:
        raise InputError(f"{path}: no regular intensities")

    neg_values = negative.values if negative is not None else np.empty(0)
    if negatives is not None:
        if negative is not None:
            raise InputError(f"{path} already has a {NEGATIVE_SENTINEL} section; drop --negatives")
        neg_values = read_vector(negatives)

    return ProbeArray(
        regular=regular.values,
        negative=neg_values,
        detection_pvalues=regular.pvalues,
        probe_ids=regular.ids,
    )


def write_vector(
    path: Path | None,
    values,
    column: str | None = None,
    ids: Iterable[str] | None = None,
    comments: Iterable[str] = (),
) -> None:
    """One value per row, with a probe_id column when ids are given; no header when column is None."""
    _write(path, [_column(values, column, ids)], comments)


def write_array(path: Path | None, arr: ProbeArray, comments: Iterable[str] = ()) -> None:
    ids = arr.probe_ids or tuple(f"probe_{j + 1}" for j in range(arr.n_reg))

    regular = pd.DataFrame({"probe_id": list(ids), "regular": arr.regular})
    if arr.detection_pvalues is not None:
        regular["detection_pvalue"] = arr.detection_pvalues
    blocks: list[Block] = [(regular, True)]
    if arr.n_neg:
        negative = pd.DataFrame({"probe_id": [f"neg_{j + 1}" for j in range(arr.n_neg)], "negative": arr.negative})
        blocks += [NEGATIVE_SENTINEL, (negative, True)]

    _write(path, blocks, comments)


def read_detection_table(path: Path, n_neg: int) -> DetectionTable:
    path = Path(path)
    regular, negative = _read_sections(path)
    if negative is not None:
        raise InputError(f"{path}: unexpected {NEGATIVE_SENTINEL} section in a detection table")
    if not regular.values.size:
        raise InputError(f"{path}: no rows")
    if regular.pvalues is None:
        raise InputError(f"{path}: expected probe_id, intensity and detection_pvalue columns")
    return DetectionTable(regular=regular.values, pvalues=regular.pvalues, n_neg=n_neg)


# -----------------------------
# key=value files
# -----------------------------
def read_key_values(path: Path) -> dict[str, str]:
    path = Path(path)
    out: dict[str, str] = {}
    for lineno, line in enumerate(_lines(path), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise InputError(f"{path}:{lineno}: expected key=value, got {line!r}")
        out[key.strip()] = value.strip()
    return out


def write_key_values(path: Path | None, values: dict[str, str], comments: Iterable[str] = ()) -> None:
    _write(path, [f"{k}={v}" for k, v in values.items()], comments)


def write_params(path: Path | None, model: str, fit: FitResult | NormexpParams, comments: Iterable[str] = ()) -> None:
    params = fit.params if isinstance(fit, FitResult) else fit
    values = {"model": model}
    values.update({k: fmt(v) for k, v in params.model_dump().items()})
    if isinstance(fit, FitResult):
        values["loglik"] = fmt(fit.loglik)
        values["converged"] = str(fit.converged).lower()
        values["iterations"] = str(fit.iterations)
        if fit.init_fallback:
            values["init_fallback"] = "true"
    write_key_values(path, values, comments)


def read_params(path: Path) -> tuple[str, NormalGammaParams | NormexpParams]:
    path = Path(path)
    values = read_key_values(path)
    model = values.get("model")
    if model not in MODEL_TAGS:
        raise InputError(f"{path}: unknown model {model!r}; expected one of {', '.join(MODEL_TAGS)}")

    want = ("mu", "sigma", "k", "theta") if model == "normgam" else ("mu", "sigma", "alpha")
    wrong = {"alpha"} if model == "normgam" else {"k", "theta"}
    if wrong & values.keys():
        raise InputError(f"{path}: model {model} does not take {', '.join(sorted(wrong & values.keys()))}")
    missing = [k for k in want if k not in values]
    if missing:
        raise InputError(f"{path}: missing {', '.join(missing)} for model {model}")

    try:
        numbers = {k: float(values[k]) for k in want}
    except ValueError as e:
        raise InputError(f"{path}: {e}") from None

    cls = NormalGammaParams if model == "normgam" else NormexpParams
    return model, cls(**numbers)


# -----------------------------
# Batches
# -----------------------------
def write_batch(directory: Path, batch: SimulatedBatch, manifest: dict[str, str], threads: int | None = None) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    probe_ids = [f"probe_{j + 1}" for j in range(batch.arrays[0].n_reg)]

    def write_one(i: int) -> None:
        arr = batch.arrays[i]
        write_vector(directory / f"array_{i + 1}.tsv", arr.regular, "regular", probe_ids)
        write_vector(
            directory / f"negative_{i + 1}.tsv",
            arr.negative,
            "negative",
            (f"neg_{j + 1}" for j in range(arr.n_neg)),
        )
        if not batch.shared_signal:
            write_vector(directory / f"signal_{i + 1}.tsv", batch.signal_for(i), "signal", probe_ids)

    with ThreadPoolExecutor(max_workers=threads or get_settings().threads) as pool:
        list(pool.map(write_one, range(batch.n_arrays)))

    if batch.shared_signal:
        write_vector(directory / "signal.tsv", batch.signals[0], "signal", probe_ids)
    if batch.de_labels is not None:
        labels = pd.DataFrame({"probe_id": probe_ids, "de": np.asarray(batch.de_labels, dtype=int)})
        _write(directory / "de_labels.tsv", [(labels, True)])

    fields = dict(manifest)
    fields.update({f"true_{k}": fmt(v) for k, v in batch.truth.model_dump().items()})
    fields["label"] = batch.label
    fields["arrays"] = str(batch.n_arrays)
    fields["shared_signal"] = str(batch.shared_signal).lower()
    if batch.groups is not None:
        fields["groups"] = ",".join(str(g) for g in batch.groups)
    write_key_values(directory / MANIFEST, fields)
    logger.info("wrote %d arrays to %s", batch.n_arrays, directory)


def _require(path: Path) -> Path:
    if not path.exists():
        raise InputError(f"missing batch file: {path}")
    return path


def read_batch(directory: Path) -> tuple[SimulatedBatch, dict[str, str]]:
    directory = Path(directory)
    manifest = read_key_values(_require(directory / MANIFEST))

    try:
        n_arrays = int(manifest["arrays"])
        truth = NormalGammaParams(**{k: float(manifest[f"true_{k}"]) for k in ("mu", "sigma", "k", "theta")})
    except KeyError as e:
        raise InputError(f"{directory / MANIFEST}: missing key {e.args[0]}") from None
    except ValueError as e:
        raise InputError(f"{directory / MANIFEST}: {e}") from None

    arrays = tuple(
        ProbeArray(
            regular=read_vector(_require(directory / f"array_{i + 1}.tsv")),
            negative=read_vector(_require(directory / f"negative_{i + 1}.tsv")),
        )
        for i in range(n_arrays)
    )

    if manifest.get("shared_signal") == "true":
        signals = (read_vector(_require(directory / "signal.tsv")),)
    else:
        signals = tuple(read_vector(_require(directory / f"signal_{i + 1}.tsv")) for i in range(n_arrays))

    groups = None
    if manifest.get("groups"):
        groups = tuple(int(g) for g in manifest["groups"].split(","))
        if len(groups) != n_arrays:
            raise InputError(f"{directory / MANIFEST}: {len(groups)} groups for {n_arrays} arrays")

    de_labels = None
    if (directory / "de_labels.tsv").exists():
        de_labels = read_vector(directory / "de_labels.tsv").astype(int)

    batch = SimulatedBatch(
        arrays=arrays,
        signals=signals,
        truth=truth,
        label=manifest.get("label", ""),
        groups=groups,
        de_labels=de_labels,
    )
    return batch, manifest


# -----------------------------
# Reports
# -----------------------------
def write_report(path: Path | None, report: EvalReport, comments: Iterable[str] = ()) -> None:
    frame = pd.DataFrame(
        [(r.metric, r.method, r.dataset, r.scale, r.value) for r in report.rows],
        columns=["metric", "method", "set", "scale", "value"],
    )
    frame["value"] = frame["value"].astype(float)
    _write(path, [(frame, True)], comments)


def write_profile(path: Path, rows: Iterable[tuple[float, str, float]]) -> None:
    frame = pd.DataFrame(list(rows), columns=["x", "method", "value"]).astype({"x": float, "value": float})
    _write(path, [(frame, True)])


def write_density_grid(path: Path, grid: DensityGrid) -> None:
    frame = pd.DataFrame({"x": grid.abscissae, "density": grid.values})
    _write(path, [(frame, True)])
