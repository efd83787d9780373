"""
Reference normal distribution: its level-set ellipsoid, samples from it and
the analytic ellipse it projects to on any 2-D plane.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.config.config import ELLIPSE_POINTS
from src.helpers.errors import DimensionMismatch
from src.helpers.numerics import (
    Matrix,
    SpdMatrix,
    chi2_quantile,
    solve_spd,
    sym_eigen_2x2,
)
from src.pipeline.tour import ProjectionBasis


@dataclass(frozen=True, eq=False)
class ReferenceModel:
    """Mean, SPD covariance and the squared level constant c^2."""

    mean: np.ndarray
    covariance: SpdMatrix
    level_c2: float

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float)
        if mean.ndim != 1 or mean.size < 2:
            raise DimensionMismatch(f"Mean must be a vector of length >= 2, got shape {mean.shape}")
        if self.covariance.size != mean.size:
            raise DimensionMismatch(
                f"Covariance is {self.covariance.size}x{self.covariance.size} but mean has length {mean.size}"
            )
        if not np.all(np.isfinite(mean)):
            raise ValueError(f"Mean has non-finite entries: {mean}")
        if not (self.level_c2 > 0.0) or not math.isfinite(self.level_c2):
            raise ValueError(f"level_c2 must be a positive finite number, got {self.level_c2}")
        mean.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "level_c2", float(self.level_c2))

    @classmethod
    def from_arrays(cls, mean, covariance, level_c2: Optional[float] = None,
                    prob: Optional[float] = None) -> "ReferenceModel":
        """Build a model from plain arrays and either c^2 or a probability."""
        if (level_c2 is None) == (prob is None):
            raise ValueError("Give exactly one of level_c2 or prob")
        mean = np.asarray(mean, dtype=float)
        if prob is not None:
            level_c2 = chi2_quantile(prob, mean.size)
        return cls(mean=mean, covariance=SpdMatrix.from_array(covariance), level_c2=level_c2)

    @property
    def p(self) -> int:
        return self.mean.size

    def with_level(self, level_c2: float) -> "ReferenceModel":
        return ReferenceModel(mean=self.mean, covariance=self.covariance, level_c2=level_c2)


@dataclass(frozen=True, eq=False)
class ProjectedEllipse:
    """Ellipse {y : (y - center) shape^-1 (y - center)^T = level_c2}."""

    center: np.ndarray
    shape: SpdMatrix
    level_c2: float

    def quadratic_form(self, y) -> np.ndarray:
        diff = np.atleast_2d(np.asarray(y, dtype=float)) - self.center
        return np.sum(diff.T * solve_spd(self.shape, diff.T), axis=0)


def quadratic_form(model: ReferenceModel, x) -> np.ndarray:
    """(x - mu) Sigma^-1 (x - mu)^T for every row of x."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != model.p:
        raise DimensionMismatch(f"Observation has {x.shape[1]} coordinates, model has {model.p}")
    diff = x - model.mean
    return np.sum(diff.T * solve_spd(model.covariance, diff.T), axis=0)


def project_model(model: ReferenceModel, basis: ProjectionBasis) -> ProjectedEllipse:
    """Center mu P and shape P^T Sigma P of the projected level set."""
    if basis.p != model.p:
        raise DimensionMismatch(f"Basis has {basis.p} rows, model has dimension {model.p}")
    if basis.d != 2:
        raise DimensionMismatch(f"Projected ellipse needs a 2-column basis, got {basis.d}")
    p_mat = basis.matrix
    shape = p_mat.T @ model.covariance.base @ p_mat
    shape = 0.5 * (shape + shape.T)
    return ProjectedEllipse(
        center=model.mean @ p_mat,
        shape=SpdMatrix.from_array(shape),
        level_c2=model.level_c2,
    )


def ellipse_boundary(ellipse: ProjectedEllipse, n_points: int = ELLIPSE_POINTS) -> Matrix:
    """Vertices of the closed polyline tracing the projected ellipse (n_points x 2)."""
    if n_points < 8:
        raise ValueError(f"n_points must be at least 8, got {n_points}")
    eigenvalues, vectors = sym_eigen_2x2(ellipse.shape.base)
    theta = 2.0 * np.pi * np.arange(n_points) / n_points
    radius = math.sqrt(ellipse.level_c2)
    axis1 = radius * math.sqrt(eigenvalues[0]) * vectors[0]
    axis2 = radius * math.sqrt(eigenvalues[1]) * vectors[1]
    return ellipse.center + np.outer(np.cos(theta), axis1) + np.outer(np.sin(theta), axis2)


def _unit_sphere(n: int, p: int, rng: np.random.Generator) -> Matrix:
    z = rng.standard_normal((n, p))
    norms = np.linalg.norm(z, axis=1)
    # a zero draw has probability zero; redraw it if it ever happens
    while np.any(norms == 0.0):
        bad = norms == 0.0
        z[bad] = rng.standard_normal((int(bad.sum()), p))
        norms = np.linalg.norm(z, axis=1)
    return z / norms[:, None]


def sample_ellipsoid_surface(model: ReferenceModel, n: int, seed: int) -> Matrix:
    """
    Points on the level-set surface of the reference distribution.

    Directions are uniform on the unit sphere (normalized standard normal
    draws) and are then mapped onto the ellipsoid with the Cholesky factor
    of the covariance, so every row sits exactly at squared distance c^2.
    """
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    rng = np.random.default_rng(seed)
    u = _unit_sphere(n, model.p, rng)
    return model.mean + math.sqrt(model.level_c2) * (u @ model.covariance.chol.T)


def sample_reference(model: ReferenceModel, n: int, seed: int) -> Matrix:
    """Draws from N(mean, covariance), used as a reference point cloud."""
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, model.p))
    return model.mean + z @ model.covariance.chol.T


def contains(model: ReferenceModel, x) -> bool:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionMismatch(f"Expected a single observation, got shape {x.shape}")
    return bool(quadratic_form(model, x)[0] <= model.level_c2)
