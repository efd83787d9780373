"""
Outlier selection against the reference model and the anomaly projection
pursuit index.

The index of a plane P is the sum, over the flagged rows w, of the squared
Mahalanobis distance of the projected row under the projected reference:

    sum_w (w - mu) P (P^T Sigma P)^-1 P^T (w - mu)^T
"""

import os
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.helpers.errors import DimensionMismatch, InvalidRule
from src.helpers.numerics import SpdMatrix, solve_spd
from src.pipeline.reference import ReferenceModel, quadratic_form
from src.pipeline.tour import ProjectionBasis


class OutlierRule(str, Enum):
    OUTSIDE_ELLIPSOID = "outside-ellipsoid"
    TOP_K = "top-k"
    MANUAL = "manual"


@dataclass(frozen=True)
class RuleSpec:
    rule: OutlierRule
    k: Optional[int] = None
    manual: Tuple[int, ...] = ()


@dataclass(frozen=True, eq=False)
class OutlierSet:
    """Strictly increasing row indices W and the rule that picked them."""

    indices: np.ndarray
    rule: OutlierRule
    rule_param: Optional[float] = None

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).reshape(-1)
        if idx.size and (np.any(np.diff(idx) <= 0) or idx[0] < 0):
            raise InvalidRule("Outlier indices must be non-negative and strictly increasing")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    def __len__(self) -> int:
        return int(self.indices.size)


def mahalanobis_sq(x, model: ReferenceModel) -> float:
    """Squared Mahalanobis distance of one observation from the reference mean."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionMismatch(f"Expected a single observation, got shape {x.shape}")
    return float(max(quadratic_form(model, x)[0], 0.0))


def mahalanobis_sq_rows(X, model: ReferenceModel) -> np.ndarray:
    return np.maximum(quadratic_form(model, X), 0.0)


def parse_rule(text: str) -> RuleSpec:
    """Parse `outside`, `topk:K` or `manual:FILE` (FILE: one row index per line or CSV column `row`)."""
    name, _, arg = text.partition(":")
    name = name.strip().lower()
    if name in ("outside", OutlierRule.OUTSIDE_ELLIPSOID.value):
        return RuleSpec(OutlierRule.OUTSIDE_ELLIPSOID)
    if name in ("topk", OutlierRule.TOP_K.value):
        try:
            return RuleSpec(OutlierRule.TOP_K, k=int(arg))
        except ValueError:
            raise InvalidRule(f"top-k rule needs an integer, got '{arg}'")
    if name == "manual":
        if not arg or not os.path.exists(arg):
            raise InvalidRule(f"Manual rule file not found: '{arg}'")
        return RuleSpec(OutlierRule.MANUAL, manual=tuple(read_manual_rows(arg)))
    raise InvalidRule(f"Unknown outlier rule '{text}'")


def read_manual_rows(path: str) -> Sequence[int]:
    try:
        frame = pd.read_csv(path, header=None, dtype=str, comment="#")
    except pd.errors.EmptyDataError:
        return []
    values = frame.iloc[:, 0].str.strip()
    if values.iloc[0] == "row":
        values = values.iloc[1:]
    try:
        return [int(v) for v in values]
    except ValueError as e:
        raise InvalidRule(f"Manual rule file '{path}' has a non-integer row: {e}")


def select_outliers(X, model: ReferenceModel, rule: RuleSpec) -> OutlierSet:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.p:
        raise DimensionMismatch(f"Data has shape {X.shape}, model has dimension {model.p}")
    n = X.shape[0]

    if rule.rule is OutlierRule.OUTSIDE_ELLIPSOID:
        d2 = mahalanobis_sq_rows(X, model)
        return OutlierSet(np.flatnonzero(d2 > model.level_c2), rule.rule, model.level_c2)

    if rule.rule is OutlierRule.TOP_K:
        if rule.k is None or rule.k < 1 or rule.k > n:
            raise InvalidRule(f"top-k needs 1 <= k <= {n}, got {rule.k}")
        d2 = mahalanobis_sq_rows(X, model)
        # largest distance first, lower row index wins ties
        order = np.lexsort((np.arange(n), -d2))
        return OutlierSet(np.sort(order[: rule.k]), rule.rule, rule.k)

    manual = np.asarray(rule.manual, dtype=np.int64)
    if manual.size and (manual.min() < 0 or manual.max() >= n):
        raise InvalidRule(f"Manual rows must lie in [0, {n}), got {manual.min()}..{manual.max()}")
    return OutlierSet(np.unique(manual), OutlierRule.MANUAL, float(manual.size))


def projected_terms(centered: np.ndarray, model: ReferenceModel, basis: ProjectionBasis) -> np.ndarray:
    """Per-row projected squared distances for rows already centered at the mean."""
    if basis.p != model.p:
        raise DimensionMismatch(f"Basis has {basis.p} rows, model has dimension {model.p}")
    p_mat = basis.matrix
    y = centered @ p_mat
    shape = p_mat.T @ model.covariance.base @ p_mat
    shape = SpdMatrix.from_array(0.5 * (shape + shape.T))
    return np.sum(y.T * solve_spd(shape, y.T), axis=0)


def anomaly_index(X, w: OutlierSet, model: ReferenceModel, basis: ProjectionBasis) -> float:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.p:
        raise DimensionMismatch(f"Data has shape {X.shape}, model has dimension {model.p}")
    if len(w) == 0:
        return 0.0
    if w.indices[-1] >= X.shape[0]:
        raise InvalidRule(f"Outlier row {w.indices[-1]} is out of range for {X.shape[0]} rows")
    return float(np.sum(projected_terms(X[w.indices] - model.mean, model, basis)))


class AnomalyIndex:
    """Index function for the tour: centers the flagged rows once, then scores bases."""

    def __init__(self, X, w: OutlierSet, model: ReferenceModel):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != model.p:
            raise DimensionMismatch(f"Data has shape {X.shape}, model has dimension {model.p}")
        self.model = model
        self.outliers = w
        self._centered = X[w.indices] - model.mean

    def __call__(self, basis: ProjectionBasis) -> float:
        if self._centered.shape[0] == 0:
            return 0.0
        return float(np.sum(projected_terms(self._centered, self.model, basis)))

    def upper_bound(self) -> float:
        """Sum of full-dimension squared distances; no plane scores higher."""
        if self._centered.shape[0] == 0:
            return 0.0
        return float(np.sum(np.maximum(quadratic_form(self.model, self._centered + self.model.mean), 0.0)))
