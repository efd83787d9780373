"""
Numeric CSV ingestion and output.

The reader is strict: every data cell must be a finite decimal literal and
every row must have as many cells as the header. Errors carry the file path
and the 1-based line number.
"""

import os
import re
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd

from src.helpers.csv_saver import csv_saver
from src.helpers.errors import CsvParseError
from src.helpers.numerics import Matrix

ID_COLUMN = "id"

_DECIMAL = re.compile(r"[+-]?([0-9]+(\.[0-9]*)?|\.[0-9]+)([eE][+-]?[0-9]+)?")
_NON_FINITE = re.compile(r"[+-]?(nan|inf|infinity)", re.IGNORECASE)
_FIELD_COUNT = re.compile(r"Expected (\d+) fields in line (\d+), saw (\d+)")


@dataclass(frozen=True, eq=False)
class Dataset:
    column_names: List[str]
    values: Matrix
    row_ids: Optional[List[str]] = None

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]


def _parse_cell(text: str, path: str, line: int, column: str) -> float:
    if _NON_FINITE.fullmatch(text):
        raise CsvParseError(path, line, f"column '{column}': '{text}' is not finite")
    if not _DECIMAL.fullmatch(text):
        raise CsvParseError(path, line, f"column '{column}': '{text}' is not a number")
    value = float(text)
    if not np.isfinite(value):
        raise CsvParseError(path, line, f"column '{column}': '{text}' is not finite")
    return value


def _read_cells(path: str) -> pd.DataFrame:
    """Every cell as text; missing trailing cells come back as NaN."""
    try:
        return pd.read_csv(path, header=None, dtype=str, keep_default_na=False,
                           skip_blank_lines=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise CsvParseError(path, 1, "missing header row")
    except pd.errors.ParserError as e:
        match = _FIELD_COUNT.search(str(e))
        if match is None:
            raise CsvParseError(path, None, str(e))
        expected, line, found = match.groups()
        raise CsvParseError(path, int(line), f"expected {expected} fields, found {found}")


def load_csv(path: str) -> Dataset:
    if not os.path.isfile(path):
        raise CsvParseError(path, None, "file not found")

    cells = _read_cells(path)
    width = cells.shape[1]
    # no quoted newlines in numeric data, so frame row i is file line i + 1
    present = cells.notna().to_numpy()
    text = cells.fillna("").to_numpy(dtype=object)

    header = [str(h).strip() for h in text[0][present[0]]]
    has_ids = bool(header) and header[0].lower() == ID_COLUMN
    columns = header[1:] if has_ids else header
    if not columns:
        raise CsvParseError(path, 1, "header has no data columns")

    rows, ids = [], []
    for i in range(1, len(text)):
        line = i + 1
        row = [str(cell).strip() for cell in text[i]]
        if not any(row):
            continue
        found = int(present[i].sum())
        if found != len(header) or width != len(header):
            raise CsvParseError(path, line, f"expected {len(header)} fields, found {found}")
        if has_ids:
            ids.append(row[0])
            row = row[1:]
        rows.append([_parse_cell(cell, path, line, name) for cell, name in zip(row, columns)])

    if not rows:
        raise CsvParseError(path, None, "no data rows")
    return Dataset(column_names=columns, values=np.array(rows, dtype=float),
                   row_ids=ids if has_ids else None)


def matrix_frame(values, column_names: Sequence[str], row_ids: Optional[Sequence[str]] = None) -> pd.DataFrame:
    df = pd.DataFrame(np.asarray(values, dtype=float), columns=list(column_names))
    if row_ids is not None:
        df.insert(0, ID_COLUMN, list(row_ids))
    return df


def write_matrix_csv(path: str, values, column_names: Sequence[str], folder: str, run_name: str,
                     row_ids: Optional[Sequence[str]] = None) -> str:
    """Write a matrix; floats keep their shortest round-trip spelling."""
    return csv_saver(matrix_frame(values, column_names, row_ids),
                     os.path.dirname(path), os.path.basename(path), folder, run_name)
