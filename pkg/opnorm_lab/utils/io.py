"""
CSV and JSON input/output helpers.

Matrix CSV layout: a "rows,cols" header line, a line with the two sizes,
then one line per row. Numbers use '.' decimals and full round-trip
precision; files are UTF-8 with LF line endings.
"""

import json
import logging
from pathlib import Path
from typing import Any, Iterable, List, Union

import numpy as np
import pandas as pd

from opnorm_lab.utils.errors import DataError, InputValidationError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
FLOAT_FORMAT = "%.17g"


def _open_text(path: PathLike, mode: str):
    return open(path, mode, encoding="utf-8", newline="\n")


def write_matrix_csv(array: np.ndarray, path: PathLike) -> Path:
    """Write a 2-D array in the matrix CSV layout."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows, cols = array.shape
    with _open_text(path, "w") as handle:
        handle.write("rows,cols\n")
        handle.write(f"{rows},{cols}\n")
        np.savetxt(handle, array, delimiter=",", fmt=FLOAT_FORMAT)
    return path


def read_matrix_csv(path: PathLike) -> np.ndarray:
    """
    Read a matrix written by write_matrix_csv.

    Raises:
        DataError: Missing file, bad header or size mismatch.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"matrix file not found: {path}")
    with _open_text(path, "r") as handle:
        header = handle.readline().strip()
        sizes = handle.readline().strip()
        if header != "rows,cols":
            raise DataError(f"{path}: expected header 'rows,cols', got {header!r}")
        try:
            rows, cols = (int(v) for v in sizes.split(","))
            array = np.loadtxt(handle, delimiter=",", ndmin=2)
        except ValueError as exc:
            raise DataError(f"{path}: {exc}") from exc
    if array.shape != (rows, cols):
        raise DataError(f"{path}: header says {rows}x{cols}, body is {array.shape[0]}x{array.shape[1]}")
    return array


def read_numeric_csv(path: PathLike) -> np.ndarray:
    """
    Read a headerless or single-header numeric CSV as a 2-D array.

    Raises:
        DataError: Missing file or non-numeric content.
        InputValidationError: Empty file or rows of differing length.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"file not found: {path}")
    try:
        frame = pd.read_csv(path, header=None)
    except pd.errors.EmptyDataError as exc:
        raise InputValidationError(f"{path}: empty file") from exc
    except pd.errors.ParserError as exc:
        raise InputValidationError(f"{path}: malformed CSV ({exc})") from exc
    try:
        values = frame.to_numpy(dtype=np.float64)
    except ValueError:
        # first line is a header
        try:
            values = frame.iloc[1:].to_numpy(dtype=np.float64)
        except ValueError as exc:
            raise DataError(f"{path}: non-numeric content") from exc
    if values.size == 0:
        raise DataError(f"{path}: no data rows")
    return values


def write_json(payload: Any, path: PathLike) -> Path:
    """Write JSON with sorted keys and a trailing newline."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with _open_text(path, "w") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")
    return path


def read_json(path: PathLike) -> Any:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"file not found: {path}")
    with _open_text(path, "r") as handle:
        try:
            return json.load(handle)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON ({exc})") from exc


def write_frame_csv(frame: pd.DataFrame, path: PathLike, index: bool = False) -> Path:
    """Write a DataFrame as CSV with deterministic float formatting."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=index, float_format=FLOAT_FORMAT, lineterminator="\n", encoding="utf-8")
    return path


def frame_to_csv_text(frame: pd.DataFrame, index: bool = False) -> str:
    return frame.to_csv(index=index, float_format=FLOAT_FORMAT, lineterminator="\n")


def write_manifest(directory: PathLike, betas: Iterable[List[float]], files: Iterable[str],
                   label: str = "family", metric: str = "euclidean") -> Path:
    """Write the grid manifest that accompanies per-beta matrix files."""
    entries = [{"beta": list(b), "file": f} for b, f in zip(betas, files)]
    return write_json({"label": label, "metric": metric, "points": entries},
                      Path(directory) / "manifest.json")
