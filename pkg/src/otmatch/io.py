"""Data ingestion, atomic output, and run manifests for the CLI."""

import json
import os
import platform
import tempfile
import time
from contextlib import contextmanager

import numpy as np

from .errors import DataError
from .estimators import MatchedSample

_HEADER = "wage,x_C,x_M,y_C,y_M"
_COLUMNS = _HEADER.split(",")


def parse_matched_csv(path) -> MatchedSample:
    """Read a matched sample; header must be exactly `wage,x_C,x_M,y_C,y_M`.

    Errors report 1-based row numbers (header is row 1) and column names.
    """
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        raise DataError(f"{path}: empty file")
    if lines[0].strip() != _HEADER:
        raise DataError(f"{path}: header must be exactly {_HEADER!r}, got {lines[0]!r}")
    rows = []
    for k, ln in enumerate(lines[1:], start=2):
        cells = ln.split(",")
        if len(cells) != 5:
            raise DataError(f"{path}: row {k} has {len(cells)} fields, expected 5")
        vals = []
        for col, cell in zip(_COLUMNS, cells):
            try:
                v = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: non-numeric value {cell.strip()!r} in row {k}, column {col}"
                ) from None
            if not np.isfinite(v):
                raise DataError(f"{path}: non-finite value in row {k}, column {col}")
            vals.append(v)
        rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    arr = np.array(rows)
    return MatchedSample(w=arr[:, 0], X=arr[:, 1:3], Y=arr[:, 3:5])


def write_matched_csv(path, sample: MatchedSample) -> None:
    """Inverse of parse_matched_csv, with repr-exact floats."""
    with atomic_write(path) as fh:
        fh.write(_HEADER + "\n")
        for i in range(sample.n):
            cells = (
                sample.w[i],
                sample.X[i, 0],
                sample.X[i, 1],
                sample.Y[i, 0],
                sample.Y[i, 1],
            )
            fh.write(",".join(f"{float(v)!r}" for v in cells) + "\n")


@contextmanager
def atomic_write(path, mode="w"):
    """Write to a temp file in the target directory, then rename into place."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, mode) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_manifest(path, command: str, config: dict, started: float) -> None:
    """Run manifest: config echo, versions, and wall time."""
    import scipy

    from . import __version__
    from .assignment import BACKEND

    manifest = {
        "command": command,
        "config": config,
        "versions": {
            "otmatch": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
            "assignment_backend": BACKEND,
        },
        "wall_time_seconds": round(time.time() - started, 3),
    }
    with atomic_write(path) as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
