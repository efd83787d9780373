"""
Reference model text format.

    # comment
    p 3
    columns GGT AST ALT          (optional)
    mean 0 0 0
    covariance
    1 0 0
    0 1 0
    0 0 1
    prob 0.95                    (or: c2 7.81)

Keys may appear in any order except that the p covariance rows must follow
the `covariance` line directly.
"""

import math
from typing import List, Optional, Tuple

import numpy as np

from src.helpers.errors import AnomTourError, ModelFileError
from src.pipeline.reference import ReferenceModel


def _floats(path: str, line: int, tokens: List[str]) -> List[float]:
    try:
        values = [float(t) for t in tokens]
    except ValueError as e:
        raise ModelFileError(path, line, f"bad number: {e}")
    for token, value in zip(tokens, values):
        if not math.isfinite(value):
            raise ModelFileError(path, line, f"'{token}' is not finite")
    return values


def read_model_file(path: str) -> Tuple[ReferenceModel, Optional[List[str]]]:
    """Parse a model file into a ReferenceModel and its optional column names."""
    try:
        with open(path, encoding="utf-8") as f:
            raw = f.readlines()
    except OSError as e:
        raise ModelFileError(path, None, f"cannot read file: {e.strerror}")

    lines = []
    for number, text in enumerate(raw, start=1):
        text = text.split("#", 1)[0].strip()
        if text:
            lines.append((number, text.split()))

    p = None
    mean = None
    rows: List[List[float]] = []
    columns = None
    prob = c2 = None
    cov_line = None
    i = 0
    while i < len(lines):
        number, tokens = lines[i]
        key, args = tokens[0].lower(), tokens[1:]
        if key == "p":
            if len(args) != 1 or not args[0].isdigit():
                raise ModelFileError(path, number, "'p' takes one positive integer")
            p = int(args[0])
        elif key == "mean":
            mean = _floats(path, number, args)
        elif key == "columns":
            columns = args
        elif key == "prob":
            if len(args) != 1:
                raise ModelFileError(path, number, "'prob' takes one value")
            prob = _floats(path, number, args)[0]
        elif key == "c2":
            if len(args) != 1:
                raise ModelFileError(path, number, "'c2' takes one value")
            c2 = _floats(path, number, args)[0]
        elif key == "covariance":
            if p is None:
                raise ModelFileError(path, number, "'p' must come before 'covariance'")
            cov_line = number
            for _ in range(p):
                i += 1
                if i >= len(lines):
                    raise ModelFileError(path, number, f"covariance needs {p} rows")
                row_number, row_tokens = lines[i]
                row = _floats(path, row_number, row_tokens)
                if len(row) != p:
                    raise ModelFileError(path, row_number, f"covariance row has {len(row)} values, expected {p}")
                rows.append(row)
        else:
            raise ModelFileError(path, number, f"unknown key '{tokens[0]}'")
        i += 1

    if p is None or mean is None or cov_line is None:
        raise ModelFileError(path, None, "model needs 'p', 'mean' and 'covariance'")
    if len(mean) != p:
        raise ModelFileError(path, None, f"mean has {len(mean)} values, expected {p}")
    if (prob is None) == (c2 is None):
        raise ModelFileError(path, None, "give exactly one of 'prob' or 'c2'")
    if columns is not None and len(columns) != p:
        raise ModelFileError(path, None, f"columns lists {len(columns)} names, expected {p}")

    try:
        model = ReferenceModel.from_arrays(np.array(mean), np.array(rows), level_c2=c2, prob=prob)
    except (AnomTourError, ValueError) as e:
        raise ModelFileError(path, cov_line, f"{type(e).__name__}: {e}")
    return model, columns


def write_model_file(path: str, model: ReferenceModel, columns: Optional[List[str]] = None,
                     comment: Optional[str] = None) -> None:
    """Write the model with its level as `c2`, using round-trip float literals."""
    with open(path, "w", encoding="utf-8") as f:
        if comment:
            for text in comment.splitlines():
                f.write(f"# {text}\n")
        f.write(f"p {model.p}\n")
        if columns is not None:
            f.write("columns " + " ".join(columns) + "\n")
        f.write("mean " + " ".join(repr(float(v)) for v in model.mean) + "\n")
        f.write("covariance\n")
        for row in model.covariance.base:
            f.write(" ".join(repr(float(v)) for v in row) + "\n")
        f.write(f"c2 {model.level_c2!r}\n")
