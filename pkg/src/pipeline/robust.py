"""
Robust reference estimation (median/MAD scaling, FAST-MCD) and directional
clustering of flagged observations (k-means on unit vectors, Dunn index).
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import cdist
from scipy.stats import median_abs_deviation
from sklearn.cluster import kmeans_plusplus

from src.config import config
from src.config.folder_name import CLUSTER_DIRECTIONS_FOLDER, ROBUST_REFERENCE_FOLDER
from src.config.tolerances import TOLERANCES
from src.helpers.errors import (
    DegenerateData,
    DimensionMismatch,
    EmptyCluster,
    InvalidK,
    MonotonicityViolation,
    NotPositiveDefinite,
    ZeroSpread,
    ZeroVector,
)
from src.helpers.logger import log_message
from src.helpers.numerics import Matrix, SpdMatrix, solve_spd


@dataclass(frozen=True, eq=False)
class RobustScaling:
    medians: np.ndarray
    mads: np.ndarray  # already multiplied by the consistency constant

    def apply(self, X) -> Matrix:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.medians.size:
            raise DimensionMismatch(f"Data has {X.shape[-1]} columns, scaling has {self.medians.size}")
        return (X - self.medians) / self.mads


def median_mad_standardize(X, column_names: Optional[Sequence[str]] = None,
                           consistency: float = config.MAD_CONSISTENCY) -> Tuple[Matrix, RobustScaling]:
    """Center each column on its median and divide by consistency * MAD."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise DegenerateData(f"Need at least 2 rows to standardize, got shape {X.shape}")
    medians = np.median(X, axis=0)
    mads = consistency * median_abs_deviation(X, axis=0, scale=1.0)
    for j in np.flatnonzero(mads <= 0.0):
        name = column_names[j] if column_names is not None else str(j)
        raise ZeroSpread(name)
    scaling = RobustScaling(medians=medians, mads=mads)
    return scaling.apply(X), scaling


def support_size(n: int, p: int, fraction: float = config.MCD_SUPPORT_FRACTION) -> int:
    """h = ceil(fraction * n), kept within [p + 1, n]."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"Support fraction must lie in (0, 1], got {fraction}")
    return int(min(n, max(p + 1, math.ceil(fraction * n - 1e-9))))


@dataclass(frozen=True, eq=False)
class McdResult:
    mean: np.ndarray
    covariance: SpdMatrix
    support: np.ndarray            # sorted row indices of the chosen h-subset
    log_det: float
    h: int
    best_start: int
    n_discarded: int
    trajectories: List[List[float]] = field(default_factory=list)  # log-det per C-step, per start


@dataclass(frozen=True, eq=False)
class _Estimate:
    mean: np.ndarray
    covariance: SpdMatrix
    ridged: bool


@dataclass(frozen=True, eq=False)
class _StartOutcome:
    support: np.ndarray
    estimate: _Estimate
    log_det: float
    trajectory: List[float]


def _subset_estimate(X: Matrix, rows: np.ndarray) -> Optional[_Estimate]:
    sub = X[rows]
    mean = sub.mean(axis=0)
    cov = np.atleast_2d(np.cov(sub, rowvar=False))
    try:
        return _Estimate(mean, SpdMatrix.from_array(cov), False)
    except NotPositiveDefinite:
        pass
    try:
        ridge = cov + TOLERANCES.mcd_ridge * np.eye(cov.shape[0])
        return _Estimate(mean, SpdMatrix.from_array(ridge), True)
    except NotPositiveDefinite:
        return None


def _distances(X: Matrix, est: _Estimate) -> np.ndarray:
    diff = X - est.mean
    return np.sum(diff.T * solve_spd(est.covariance, diff.T), axis=0)


def _median_rows(X: Matrix, h: int) -> np.ndarray:
    """The h rows nearest the coordinatewise median in MAD-scaled units."""
    medians = np.median(X, axis=0)
    mads = median_abs_deviation(X, axis=0, scale=1.0)
    z = (X - medians) / np.where(mads > 0.0, mads, 1.0)
    return np.sort(np.argsort(np.sum(z * z, axis=1), kind="stable")[:h])


def _random_rows(X: Matrix, seed_seq: np.random.SeedSequence) -> np.ndarray:
    n, p = X.shape
    return np.sort(np.random.default_rng(seed_seq).choice(n, size=p + 1, replace=False))


def _concentrate(X: Matrix, h: int, rows: np.ndarray, max_steps: int) -> Optional[_StartOutcome]:
    """C-steps from the estimate of `rows`; None when the start is discarded as singular."""
    est = _subset_estimate(X, rows)
    if est is None:
        return None

    trajectory: List[float] = []
    support: Optional[np.ndarray] = None
    for _ in range(max_steps):
        order = np.argsort(_distances(X, est), kind="stable")
        new_support = np.sort(order[:h])
        new_est = _subset_estimate(X, new_support)
        if new_est is None:
            return None
        log_det = new_est.covariance.log_det()
        if trajectory and not (est.ridged or new_est.ridged):
            slack = TOLERANCES.mcd_monotone * max(1.0, abs(trajectory[-1]))
            if log_det > trajectory[-1] + slack:
                raise MonotonicityViolation(
                    f"C-step increased log-determinant from {trajectory[-1]:.12g} to {log_det:.12g}"
                )
        converged = support is not None and (
            np.array_equal(new_support, support) or abs(log_det - trajectory[-1]) < TOLERANCES.mcd_log_det
        )
        trajectory.append(log_det)
        support, est = new_support, new_est
        if converged:
            break
    return _StartOutcome(support, est, trajectory[-1], trajectory)


def fast_mcd(X, h: Optional[int] = None, n_starts: int = config.MCD_STARTS,
             seed: int = config.DEFAULT_SEED, max_steps: int = config.MCD_MAX_STEPS,
             n_workers: int = config.MCD_NUM_THREADS, median_start: bool = True,
             run_name: str = config.DEFAULT_RUN_NAME) -> McdResult:
    """
    Raw minimum covariance determinant estimate by concentration steps.

    Every random start draws a (p + 1)-subset and iterates C-steps until the
    h-subset stops changing. With `median_start` one more start (ordinal 0)
    begins from the h rows nearest the coordinatewise median. The start with
    the smallest covariance determinant wins (lowest start ordinal on ties).
    No reweighting and no consistency correction are applied.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DimensionMismatch(f"Expected a 2-D data matrix, got shape {X.shape}")
    n, p = X.shape
    h = support_size(n, p) if h is None else int(h)
    if not p + 1 <= h <= n:
        raise ValueError(f"h must satisfy p + 1 <= h <= n ({p + 1} <= h <= {n}), got {h}")
    if n_starts < 1:
        raise ValueError("n_starts must be at least 1")

    starts = [_median_rows(X, h)] if median_start else []
    starts += [_random_rows(X, s) for s in np.random.SeedSequence(seed).spawn(n_starts)]
    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as executor:
            outcomes = list(executor.map(lambda rows: _concentrate(X, h, rows, max_steps), starts))
    else:
        outcomes = [_concentrate(X, h, rows, max_steps) for rows in starts]

    kept = [(i, o) for i, o in enumerate(outcomes) if o is not None]
    n_discarded = len(starts) - len(kept)
    if not kept:
        log_message(ROBUST_REFERENCE_FOLDER, run_name,
                    f"MCD failed: all {len(starts)} starts hit singular covariances", level="error")
        raise DegenerateData(f"All {len(starts)} MCD starts produced singular covariances")

    best_start, best = min(kept, key=lambda item: (item[1].log_det, item[0]))
    log_message(ROBUST_REFERENCE_FOLDER, run_name,
                f"MCD: n={n}, p={p}, h={h}, starts={len(starts)}, discarded={n_discarded}, "
                f"best start={best_start}, log det={best.log_det:.6g}")
    return McdResult(
        mean=best.estimate.mean,
        covariance=best.estimate.covariance,
        support=best.support,
        log_det=best.log_det,
        h=h,
        best_start=best_start,
        n_discarded=n_discarded,
        trajectories=[o.trajectory if o is not None else [] for o in outcomes],
    )


def normalize_directions(rows) -> Matrix:
    rows = np.asarray(rows, dtype=float)
    norms = np.linalg.norm(rows, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ZeroVector(int(zero[0]))
    return rows / norms[:, None]


@dataclass(frozen=True, eq=False)
class ClusterSolution:
    """
    k-means partition of direction vectors.

    `centroids` are unit length. `means` are the raw Lloyd means that the
    within-cluster sum of squares is measured against; for k = 1 they are
    the column means.
    """

    k: int
    labels: np.ndarray
    centroids: Matrix
    means: Matrix
    inertia: float
    inertia_history: List[float]
    dunn: Optional[float] = None
    dunn_by_k: Dict[int, float] = field(default_factory=dict)


def _unit_rows(m: Matrix) -> Matrix:
    norms = np.linalg.norm(m, axis=1)
    safe = np.where(norms > 0.0, norms, 1.0)
    return m / safe[:, None]


def _lloyd(X: Matrix, centers: Matrix, max_iter: int) -> Tuple[np.ndarray, Matrix, float, List[float]]:
    k = centers.shape[0]
    labels: Optional[np.ndarray] = None
    history: List[float] = []
    for _ in range(max_iter):
        d2 = cdist(X, centers, "sqeuclidean")
        new_labels = np.argmin(d2, axis=1)

        # an empty cluster takes the point farthest from its own centroid
        counts = np.bincount(new_labels, minlength=k)
        own = d2[np.arange(X.shape[0]), new_labels]
        for c in np.flatnonzero(counts == 0):
            donors = counts[new_labels] > 1
            j = int(np.argmax(np.where(donors, own, -1.0)))
            counts[new_labels[j]] -= 1
            new_labels[j] = c
            counts[c] = 1
            own[j] = -1.0

        centers = np.vstack([X[new_labels == c].mean(axis=0) for c in range(k)])
        inertia = float(np.sum((X - centers[new_labels]) ** 2))
        history.append(inertia)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return new_labels, centers, history[-1], history


def kmeans(X, k: int, n_starts: int = config.KMEANS_STARTS, seed: int = config.DEFAULT_SEED,
           max_iter: int = config.KMEANS_MAX_ITER) -> ClusterSolution:
    """Best of n_starts Lloyd runs from k-means++ seeding, by within-cluster sum of squares."""
    X = np.asarray(X, dtype=float)
    m = X.shape[0]
    if k < 1 or k > m:
        raise InvalidK(f"k must lie in [1, {m}], got {k}")

    best: Optional[Tuple[float, int, np.ndarray, Matrix, List[float]]] = None
    for start, state in enumerate(np.random.SeedSequence(seed).generate_state(n_starts)):
        centers, _ = kmeans_plusplus(X, n_clusters=k, random_state=int(state))
        labels, centers, inertia, history = _lloyd(X, centers, max_iter)
        if best is None or inertia < best[0]:
            best = (inertia, start, labels, centers, history)

    inertia, _, labels, centers, history = best
    return ClusterSolution(k=k, labels=labels, centroids=_unit_rows(centers), means=centers,
                           inertia=inertia, inertia_history=history)


def dunn_index(X, labels, k: Optional[int] = None) -> float:
    """Smallest between-cluster point distance over largest cluster diameter."""
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels)
    clusters = list(range(k)) if k is not None else sorted(np.unique(labels).tolist())
    members = [X[labels == c] for c in clusters]
    for c, pts in zip(clusters, members):
        if pts.shape[0] == 0:
            raise EmptyCluster(f"Cluster {c} has no members")
    if len(members) < 2:
        raise InvalidK("Dunn index needs at least 2 clusters")

    separation = min(
        cdist(members[i], members[j]).min()
        for i in range(len(members)) for j in range(i + 1, len(members))
    )
    diameter = max(cdist(pts, pts).max() for pts in members)
    if diameter == 0.0:
        return math.inf
    return float(separation / diameter)


def select_k(X, k_range: Iterable[int], n_starts: int = config.KMEANS_STARTS,
             seed: int = config.DEFAULT_SEED, run_name: str = config.DEFAULT_RUN_NAME) -> ClusterSolution:
    """k-means for every k in the range; keep the largest Dunn index (smaller k on ties)."""
    X = np.asarray(X, dtype=float)
    m = X.shape[0]
    ks = sorted(set(int(k) for k in k_range))
    if not ks or ks[0] < 2 or ks[-1] > m:
        raise InvalidK(f"k range must lie within [2, {m}], got {ks}")

    table: Dict[int, float] = {}
    best: Optional[ClusterSolution] = None
    for k in ks:
        solution = kmeans(X, k, n_starts=n_starts, seed=seed)
        table[k] = dunn_index(X, solution.labels, k)
        if best is None or table[k] > table[best.k]:
            best = solution
        log_message(CLUSTER_DIRECTIONS_FOLDER, run_name,
                    f"k={k}: Dunn={table[k]:.6g}, inertia={solution.inertia:.6g}")

    log_message(CLUSTER_DIRECTIONS_FOLDER, run_name, f"Selected k={best.k} (Dunn={table[best.k]:.6g})")
    return replace(best, dunn=table[best.k], dunn_by_k=table)
