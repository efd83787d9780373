"""
Tours over 2-D projection frames.

A grand tour walks geodesically through random target planes. The guided
tour climbs a projection pursuit index with a shrinking neighbourhood search
and only moves to a new target when the index strictly improves.
"""

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, TextIO, Union

import numpy as np
import pandas as pd

from src.config import config
from src.config.folder_name import TOUR_FOLDER
from src.config.tolerances import TOLERANCES
from src.helpers.errors import DimensionMismatch, IndexEvaluationError, RankDeficient
from src.helpers.logger import log_message
from src.helpers.numerics import Matrix, orthonormalize

SeedLike = Union[int, np.random.Generator]
IndexFn = Callable[["ProjectionBasis"], float]
FrameSink = Callable[["TourFrame"], None]

OPTIMIZERS = ("search_better", "random_restart")


@dataclass(frozen=True, eq=False)
class ProjectionBasis:
    """p x d matrix with orthonormal columns spanning a projection plane."""

    matrix: Matrix

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[1] < 1 or m.shape[0] < m.shape[1]:
            raise DimensionMismatch(f"Basis must be p x d with p >= d >= 1, got shape {m.shape}")
        gram = m.T @ m
        if np.max(np.abs(gram - np.eye(m.shape[1]))) > TOLERANCES.basis:
            raise ValueError("Basis columns are not orthonormal")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_matrix(cls, a) -> "ProjectionBasis":
        """Orthonormalize an arbitrary full-rank p x d matrix into a basis."""
        return cls(orthonormalize(a))

    @property
    def p(self) -> int:
        return self.matrix.shape[0]

    @property
    def d(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True, eq=False)
class TourFrame:
    basis: ProjectionBasis
    t: float
    index_value: float
    is_target: bool


@dataclass
class TourTrace:
    """
    Frames of one tour. For guided tours the index value at target frames
    never decreases; grand tour targets are random and carry no such order.
    """

    frames: List[TourFrame] = field(default_factory=list)
    rng_seed: int = 0
    kind: str = "grand"

    @property
    def final(self) -> TourFrame:
        return self.frames[-1]

    def targets(self) -> List[TourFrame]:
        return [f for f in self.frames if f.is_target]


def _rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def random_basis(p: int, seed: SeedLike, d: int = 2) -> ProjectionBasis:
    """Haar-distributed p x d frame: orthonormalized standard normal draws."""
    if p < 2 or d < 1 or d > p:
        raise ValueError(f"Need p >= 2 and 1 <= d <= p, got p={p}, d={d}")
    rng = _rng(seed)
    while True:
        try:
            return ProjectionBasis(orthonormalize(rng.standard_normal((p, d))))
        except RankDeficient:
            continue


def principal_angles(fa: ProjectionBasis, fb: ProjectionBasis) -> np.ndarray:
    """Principal angles between the two planes, ascending."""
    s = np.linalg.svd(fa.matrix.T @ fb.matrix, compute_uv=False)
    return np.sort(np.arccos(np.clip(s, -1.0, 1.0)))


def projector_distance(fa: ProjectionBasis, fb: ProjectionBasis) -> float:
    """Largest entry of |P_a P_a^T - P_b P_b^T|: zero iff the spans agree."""
    a, b = fa.matrix, fb.matrix
    return float(np.max(np.abs(a @ a.T - b @ b.T)))


def geodesic_interpolate(fa: ProjectionBasis, fb: ProjectionBasis, t: float) -> ProjectionBasis:
    """
    Frame a fraction t along the geodesic between span(fa) and span(fb).

    Both frames are rotated within their planes so that Fa^T Fb is diagonal
    (cosines of the principal angles); each aligned column then turns by
    t * theta_i towards its partner. The in-plane alignment is undone at the
    end so that t = 0 returns fa itself.
    """
    if fa.p != fb.p or fa.d != fb.d:
        raise DimensionMismatch(f"Frames differ in shape: {fa.matrix.shape} vs {fb.matrix.shape}")
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")

    u, s, vt = np.linalg.svd(fa.matrix.T @ fb.matrix)
    theta = np.arccos(np.clip(s, -1.0, 1.0))
    if np.all(theta < TOLERANCES.coincident_angle) or t == 0.0:
        return fa

    ga = fa.matrix @ u
    gb = fb.matrix @ vt.T
    g_perp = np.zeros_like(ga)
    for i, angle in enumerate(theta):
        if angle >= TOLERANCES.coincident_angle:
            g_perp[:, i] = (gb[:, i] - np.cos(angle) * ga[:, i]) / np.sin(angle)

    frame = ga * np.cos(theta * t) + g_perp * np.sin(theta * t)
    return ProjectionBasis(orthonormalize(frame @ u.T))


def _legs(fa: ProjectionBasis, fb: ProjectionBasis, angle_step: float) -> int:
    return max(1, int(math.ceil(float(np.max(principal_angles(fa, fb))) / angle_step)))


def _evaluate(index_fn: Optional[IndexFn], basis: ProjectionBasis) -> float:
    if index_fn is None:
        return 0.0
    value = float(index_fn(basis))
    if not math.isfinite(value):
        raise IndexEvaluationError(f"Index returned non-finite value {value}", basis.matrix)
    return value


def grand_tour(p: int, n_targets: int, steps_per_leg: int, seed: int,
               index_fn: Optional[IndexFn] = None, d: int = 2,
               frame_sink: Optional[FrameSink] = None,
               run_name: str = config.DEFAULT_RUN_NAME) -> TourTrace:
    """
    Random start followed by n_targets geodesic legs of steps_per_leg frames.

    The trace holds 1 + n_targets * steps_per_leg frames; the start and the
    end of every leg are marked as targets.
    """
    if n_targets < 1 or steps_per_leg < 1:
        raise ValueError("n_targets and steps_per_leg must be at least 1")
    rng = np.random.default_rng(seed)
    trace = TourTrace(rng_seed=seed, kind="grand")

    def emit(frame: TourFrame):
        trace.frames.append(frame)
        if frame_sink is not None:
            frame_sink(frame)

    current = random_basis(p, rng, d)
    emit(TourFrame(current, 0.0, _evaluate(index_fn, current), True))
    for _ in range(n_targets):
        target = random_basis(p, rng, d)
        for step in range(1, steps_per_leg + 1):
            t = step / steps_per_leg
            basis = geodesic_interpolate(current, target, t)
            emit(TourFrame(basis, t, _evaluate(index_fn, basis), step == steps_per_leg))
        current = trace.frames[-1].basis

    log_message(TOUR_FOLDER, run_name,
                f"Grand tour: p={p}, targets={n_targets}, steps/leg={steps_per_leg}, frames={len(trace.frames)}")
    return trace


@dataclass(frozen=True)
class GuidedTourOptions:
    n_candidates: int = config.GUIDED_N_CANDIDATES
    initial_radius: float = config.GUIDED_INITIAL_RADIUS
    cooling: float = config.GUIDED_COOLING
    min_radius: float = config.GUIDED_MIN_RADIUS
    max_rounds: int = config.GUIDED_MAX_ROUNDS
    frame_step: float = config.FRAME_ANGLE_STEP
    optimizer: str = "search_better"
    n_workers: int = config.INDEX_NUM_THREADS

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"Unknown optimizer '{self.optimizer}', expected one of {OPTIMIZERS}")
        if self.n_candidates < 1 or self.max_rounds < 1:
            raise ValueError("n_candidates and max_rounds must be at least 1")
        if not 0.0 < self.cooling < 1.0:
            raise ValueError(f"cooling must lie in (0, 1), got {self.cooling}")
        if not 0.0 < self.min_radius <= self.initial_radius:
            raise ValueError("Need 0 < min_radius <= initial_radius")
        if self.frame_step <= 0.0:
            raise ValueError("frame_step must be positive")


def _candidates(current: ProjectionBasis, radius: float, opts: GuidedTourOptions,
                rng: np.random.Generator) -> List[ProjectionBasis]:
    if opts.optimizer == "random_restart":
        return [random_basis(current.p, rng, current.d) for _ in range(opts.n_candidates)]
    step = min(radius, 1.0)
    return [
        geodesic_interpolate(current, random_basis(current.p, rng, current.d), step)
        for _ in range(opts.n_candidates)
    ]


def guided_tour(index_fn: IndexFn, start: ProjectionBasis,
                opts: Optional[GuidedTourOptions] = None, seed: int = config.DEFAULT_SEED,
                frame_sink: Optional[FrameSink] = None,
                run_name: str = config.DEFAULT_RUN_NAME) -> TourTrace:
    """
    Hill-climb `index_fn` from `start`.

    Each round draws n_candidates frames around the current one at radius r.
    The best candidate (lowest ordinal on ties) is accepted only if it
    strictly improves the index; otherwise r shrinks by the cooling factor.
    The search stops once r < min_radius or after max_rounds rounds. Frames
    are emitted every `frame_step` radians along the path between accepted
    targets, and the final frame is the best plane found.
    """
    opts = opts or GuidedTourOptions()
    rng = np.random.default_rng(seed)
    trace = TourTrace(rng_seed=seed, kind="guided")

    def emit(frame: TourFrame):
        trace.frames.append(frame)
        if frame_sink is not None:
            frame_sink(frame)

    current = start
    current_value = _evaluate(index_fn, current)
    emit(TourFrame(current, 0.0, current_value, True))

    radius = opts.initial_radius
    rounds = accepted = 0
    executor = ThreadPoolExecutor(max_workers=opts.n_workers) if opts.n_workers > 1 else None
    try:
        while radius >= opts.min_radius and rounds < opts.max_rounds:
            rounds += 1
            candidates = _candidates(current, radius, opts, rng)
            if executor is not None:
                values = list(executor.map(lambda b: _evaluate(index_fn, b), candidates))
            else:
                values = [_evaluate(index_fn, b) for b in candidates]

            best = int(np.argmax(values))
            if values[best] <= current_value:
                radius *= opts.cooling
                continue

            target, target_value = candidates[best], values[best]
            n_steps = _legs(current, target, opts.frame_step)
            for step in range(1, n_steps):
                t = step / n_steps
                basis = geodesic_interpolate(current, target, t)
                emit(TourFrame(basis, t, _evaluate(index_fn, basis), False))
            # the end frame spans the target plane, so it carries the target's value
            end = geodesic_interpolate(current, target, 1.0)
            emit(TourFrame(end, 1.0, target_value, True))
            current, current_value = end, target_value
            accepted += 1
            log_message(TOUR_FOLDER, run_name,
                        f"Round {rounds}: accepted target {accepted} at radius {radius:.4f}, index={target_value:.6g}",
                        level="debug")
    finally:
        if executor is not None:
            executor.shutdown(wait=True)

    log_message(TOUR_FOLDER, run_name,
                f"Guided tour ({opts.optimizer}) finished after {rounds} rounds, {accepted} targets, "
                f"{len(trace.frames)} frames, final index={current_value:.6g}")
    return trace


def trace_header(p: int, d: int = 2) -> List[str]:
    return ["frame_id", "t", "is_target", "index_value"] + [
        f"b{i}_{j}" for i in range(1, p + 1) for j in range(1, d + 1)
    ]


class TraceWriter:
    """Writes trace rows as frames arrive, flushing after every frame."""

    def __init__(self, handle: TextIO, p: int, d: int = 2):
        self._handle = handle
        self._writer = csv.writer(handle, lineterminator="\n")
        self._writer.writerow(trace_header(p, d))
        self._handle.flush()
        self.count = 0

    def __call__(self, frame: TourFrame):
        row = [str(self.count), repr(float(frame.t)), "1" if frame.is_target else "0",
               repr(float(frame.index_value))]
        row += [repr(float(v)) for v in frame.basis.matrix.ravel()]
        self._writer.writerow(row)
        self._handle.flush()
        self.count += 1


def read_trace_csv(path: str) -> TourTrace:
    """Parse a trace CSV back into frames (bases are re-validated)."""
    df = pd.read_csv(path, float_precision="round_trip")
    coef = [h for h in df.columns if h.startswith("b")]
    p = max(int(h[1:].split("_")[0]) for h in coef)
    d = len(coef) // p
    bases = df[coef].to_numpy(dtype=float).reshape(len(df), p, d)
    frames = [
        TourFrame(ProjectionBasis(basis), float(t), float(value), bool(target))
        for basis, t, value, target in zip(bases, df["t"], df["index_value"], df["is_target"])
    ]
    return TourTrace(frames=frames)


def basis_mass(basis: ProjectionBasis, rows: Sequence[int]) -> float:
    """Sum of squared basis coefficients over the given variable rows."""
    return float(np.sum(basis.matrix[list(rows)] ** 2))
