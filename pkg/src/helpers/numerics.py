"""
Small dense linear algebra and the chi-square quantile.

Everything here is a pure function of its inputs; arrays passed in are never
modified.
"""

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import numpy.typing as npt
from scipy.linalg import cho_solve
from scipy.special import erf, erfc, gammainc, gammaincc, gammaln

from src.config.tolerances import TOLERANCES
from src.helpers.errors import (
    DimensionMismatch,
    InvalidProbability,
    NotPositiveDefinite,
    NotSymmetric,
    RankDeficient,
)

Matrix = npt.NDArray[np.float64]


def _as_matrix(a, name: str = "matrix") -> Matrix:
    m = np.array(a, dtype=float)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise DimensionMismatch(f"{name} must be a non-empty 2-D array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


def _check_symmetric(s: Matrix) -> None:
    if s.shape[0] != s.shape[1]:
        raise DimensionMismatch(f"Expected a square matrix, got shape {s.shape}")
    scale = max(1.0, float(np.max(np.abs(s))))
    if np.max(np.abs(s - s.T)) > TOLERANCES.symmetry * scale:
        raise NotSymmetric("Matrix is not symmetric within tolerance")


def orthonormalize(a) -> Matrix:
    """
    Modified Gram-Schmidt with one re-orthogonalization pass.

    Returns Q with the same column span as `a` and Q^T Q = I.
    """
    a = _as_matrix(a, "basis")
    p, d = a.shape
    if d > p:
        raise RankDeficient(f"Cannot orthonormalize {d} columns in {p} dimensions")
    q = np.empty_like(a)
    for j in range(d):
        v = a[:, j].copy()
        for _ in range(2):
            for i in range(j):
                v -= (q[:, i] @ v) * q[:, i]
        norm = np.linalg.norm(v)
        if norm < TOLERANCES.rank:
            raise RankDeficient(f"Column {j} is linearly dependent on the previous columns")
        q[:, j] = v / norm
    return q


def cholesky(s) -> Matrix:
    """Lower-triangular L with L L^T = S."""
    s = _as_matrix(s, "covariance")
    _check_symmetric(s)
    try:
        return np.linalg.cholesky(s)
    except np.linalg.LinAlgError as e:
        raise NotPositiveDefinite(f"Cholesky factorization failed: {e}") from e


@dataclass(frozen=True, eq=False)
class SpdMatrix:
    """Symmetric positive definite matrix with its Cholesky factor cached."""

    base: Matrix
    chol: Matrix

    @classmethod
    def from_array(cls, s) -> "SpdMatrix":
        s = _as_matrix(s, "covariance")
        chol = cholesky(s)
        s = s.copy()
        s.setflags(write=False)
        chol.setflags(write=False)
        return cls(base=s, chol=chol)

    @property
    def size(self) -> int:
        return self.base.shape[0]

    def log_det(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.chol))))


def solve_spd(s: SpdMatrix, b) -> np.ndarray:
    """Solve S X = B by substitution on the cached Cholesky factor."""
    b = np.asarray(b, dtype=float)
    if b.ndim not in (1, 2) or b.shape[0] != s.size:
        raise DimensionMismatch(
            f"Right-hand side with shape {b.shape} does not match a {s.size}x{s.size} system"
        )
    return cho_solve((s.chol, True), b)


def sym_eigen_2x2(s) -> Tuple[np.ndarray, Matrix]:
    """
    Closed-form eigen-decomposition of a symmetric 2x2 matrix.

    Returns (eigenvalues, vectors) with eigenvalues descending and row i of
    `vectors` the unit eigenvector for eigenvalues[i], so that
    vectors.T @ diag(eigenvalues) @ vectors rebuilds S. The first non-zero
    component of each eigenvector is positive. When the eigenvalues tie the
    coordinate axes are returned.
    """
    s = _as_matrix(s)
    if s.shape != (2, 2):
        raise DimensionMismatch(f"Expected a 2x2 matrix, got shape {s.shape}")
    _check_symmetric(s)
    a, b, c = s[0, 0], 0.5 * (s[0, 1] + s[1, 0]), s[1, 1]
    mid = 0.5 * (a + c)
    gap = math.hypot(0.5 * (a - c), b)
    scale = max(abs(a), abs(c), abs(b), np.finfo(float).tiny)
    if gap <= TOLERANCES.eigen_tie * scale:
        return np.array([mid, mid]), np.eye(2)

    lam1, lam2 = mid + gap, mid - gap
    # pick the form without cancellation
    if a >= c:
        v1 = np.array([lam1 - c, b])
    else:
        v1 = np.array([b, lam1 - a])
    v1 /= np.linalg.norm(v1)
    v2 = np.array([-v1[1], v1[0]])

    vectors = np.vstack([_sign_convention(v1), _sign_convention(v2)])
    return np.array([lam1, lam2]), vectors


def _sign_convention(v: np.ndarray) -> np.ndarray:
    first = v[0] if v[0] != 0.0 else v[1]
    out = -v if first < 0 else v
    return out + 0.0  # drop negative zeros


def chi2_cdf(x: float, df: int) -> float:
    if x <= 0.0:
        return 0.0
    return float(gammainc(0.5 * df, 0.5 * x))


def _chi2_sf(x: float, df: int) -> float:
    if x <= 0.0:
        return 1.0
    return float(gammaincc(0.5 * df, 0.5 * x))


def _chi2_pdf(x: float, df: int) -> float:
    if x <= 0.0:
        return 0.0
    k = 0.5 * df
    return math.exp((k - 1.0) * math.log(x) - 0.5 * x - k * math.log(2.0) - gammaln(k))


def chi2_quantile(prob: float, df: int, max_iter: int = 200, upper_tail: bool = False) -> float:
    """
    Inverse chi-square CDF by bracketing bisection with Newton refinement.

    Upper-tail probabilities are matched through the regularized upper
    incomplete gamma so probabilities close to 1 keep full precision. With
    `upper_tail=True`, `prob` is the tail mass P(X > x) itself, which keeps
    tails far below machine epsilon usable.
    """
    if not (0.0 < prob < 1.0) or math.isnan(prob):
        raise InvalidProbability(f"Probability must lie in (0, 1), got {prob}")
    if int(df) != df or df < 1:
        raise ValueError(f"Degrees of freedom must be a positive integer, got {df}")
    df = int(df)

    if upper_tail:
        upper = prob < 0.5
        target = prob if upper else 1.0 - prob
    else:
        upper = prob > 0.5
        target = 1.0 - prob if upper else prob

    def residual(x: float) -> float:
        # increasing in x for both branches
        return target - _chi2_sf(x, df) if upper else chi2_cdf(x, df) - target

    lo, hi = 0.0, max(1.0, float(df))
    while residual(hi) < 0.0:
        lo, hi = hi, 2.0 * hi

    x = 0.5 * (lo + hi)
    for _ in range(max_iter):
        r = residual(x)
        if abs(r) <= TOLERANCES.chi2_probability * max(target, 1e-300) or hi - lo <= 4 * np.finfo(float).eps * hi:
            break
        if r < 0.0:
            lo = x
        else:
            hi = x
        slope = _chi2_pdf(x, df)
        step = x - r / slope if slope > 0.0 else None
        if step is not None and lo < step < hi:
            x = step
        else:
            x = 0.5 * (lo + hi)
    return x


def sigma_to_probability(z: float) -> float:
    """Mass of a standard normal within +-z (two-sided)."""
    if z <= 0.0:
        raise InvalidProbability(f"Sigma threshold must be positive, got {z}")
    return float(erf(z / math.sqrt(2.0)))


def sigma_to_tail(z: float) -> float:
    """Mass of a standard normal outside +-z (two-sided tail)."""
    if z <= 0.0:
        raise InvalidProbability(f"Sigma threshold must be positive, got {z}")
    return float(erfc(z / math.sqrt(2.0)))
