"""
Synthetic demo datasets with their reference models.

  liver        new patients, all shifted away from the healthy normal ranges
  liver-aging  one patient measured at several ages (ALP rises, ALT falls)
  offset       N(0, I_6) with a group offset along (e4 + e5)/sqrt(2)
  weather      68 x 16 daily-weather stand-in with five planted anomaly groups
"""

import json
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from src.config import config
from src.config.folder_name import GENERATE_FOLDER
from src.helpers.dataset import Dataset
from src.helpers.logger import log_message
from src.helpers.numerics import Matrix, orthonormalize
from src.pipeline.reference import ReferenceModel

DEMOS = ("liver", "liver-aging", "offset", "weather")

AGING_AGES = (45, 50, 55, 65, 70)
WEATHER_COLUMNS = [
    "min_temp", "max_temp", "rainfall", "evaporation", "sunshine", "wind_gust",
    "wind_9am", "wind_3pm", "humidity_9am", "humidity_3pm", "pressure_9am",
    "pressure_3pm", "cloud_9am", "cloud_3pm", "temp_9am", "temp_3pm",
]
WEATHER_MEANS = np.array([12.0, 23.0, 2.5, 5.0, 7.5, 40.0, 14.0, 19.0,
                          68.0, 51.0, 1017.0, 1015.0, 4.5, 4.5, 17.0, 21.5])
WEATHER_SDS = np.array([6.0, 7.0, 2.0, 2.5, 3.5, 13.0, 8.5, 8.5,
                        18.0, 20.0, 7.0, 7.0, 2.8, 2.7, 6.5, 7.0])


@dataclass(frozen=True, eq=False)
class DemoData:
    dataset: Dataset
    model: ReferenceModel
    truth: Optional[np.ndarray] = None  # planted group per row, -1 for clean rows


def load_liver_norms(path: str = config.LIVER_NORMS_FILE, tests: Optional[Sequence[str]] = None):
    """Mean (range midpoint), covariance (sd = range / 4) and names for the chosen tests."""
    with open(path, encoding="utf-8") as f:
        norms = json.load(f)
    names = list(tests or norms["default_tests"])
    unknown = [t for t in names if t not in norms["tests"]]
    if unknown:
        raise ValueError(f"Unknown liver tests: {unknown}")

    low = np.array([norms["tests"][t]["low"] for t in names], dtype=float)
    high = np.array([norms["tests"][t]["high"] for t in names], dtype=float)
    mean = 0.5 * (low + high)
    sd = 0.25 * (high - low)

    corr = np.eye(len(names))
    for a, b, r in norms["correlations"]:
        if a in names and b in names:
            i, j = names.index(a), names.index(b)
            corr[i, j] = corr[j, i] = r
    return mean, corr * np.outer(sd, sd), names


def liver_demo(n: int = 40, seed: int = config.DEFAULT_SEED, prob: float = config.DEFAULT_PROBABILITY) -> DemoData:
    """A cohort whose levels differ systematically from the healthy reference."""
    mean, cov, names = load_liver_norms()
    rng = np.random.default_rng(seed)
    sd = np.sqrt(np.diag(cov))
    # lower GGT and ALT, higher ALP than the reference population
    shift = np.array([-0.8, 0.3, 1.2, -1.0])[: len(names)] * sd
    chol = np.linalg.cholesky(0.6 * cov)
    values = mean + shift + rng.standard_normal((n, len(names))) @ chol.T
    values = np.maximum(values, 0.5)
    return DemoData(
        dataset=Dataset(column_names=names, values=values, row_ids=[f"patient{i + 1:03d}" for i in range(n)]),
        model=ReferenceModel.from_arrays(mean, cov, prob=prob),
    )


def liver_aging_demo(seed: int = config.DEFAULT_SEED, prob: float = config.DEFAULT_PROBABILITY) -> DemoData:
    """One patient at several ages; ALP drifts up and ALT drifts down with age."""
    mean, cov, names = load_liver_norms()
    rng = np.random.default_rng(seed)
    sd = np.sqrt(np.diag(cov))
    start = mean + np.array([0.2, 0.1, -0.3, 0.4]) * sd
    trend = np.array([0.05, 0.0, 0.25, -0.2]) * sd  # per five years
    rows = []
    for age in AGING_AGES:
        rows.append(start + (age - AGING_AGES[0]) / 5.0 * trend + 0.1 * sd * rng.standard_normal(len(names)))
    return DemoData(
        dataset=Dataset(column_names=names, values=np.array(rows), row_ids=[f"age{a}" for a in AGING_AGES]),
        model=ReferenceModel.from_arrays(mean, cov, prob=prob),
    )


def offset_direction(p: int = 6, rows: Sequence[int] = (3, 4)) -> np.ndarray:
    u = np.zeros(p)
    u[list(rows)] = 1.0
    return u / np.linalg.norm(u)


def offset_demo(n_clean: int = 100, n_offset: int = 20, offset: float = 5.0,
                seed: int = config.DEFAULT_SEED, prob: float = config.DEFAULT_PROBABILITY) -> DemoData:
    """Standard normal sample in six variables plus a group offset along (e4 + e5)/sqrt(2)."""
    p = 6
    rng = np.random.default_rng(seed)
    clean = rng.standard_normal((n_clean, p))
    shifted = offset * offset_direction(p) + rng.standard_normal((n_offset, p))
    truth = np.concatenate([np.full(n_clean, -1), np.zeros(n_offset, dtype=int)])
    return DemoData(
        dataset=Dataset(column_names=[f"x{i + 1}" for i in range(p)], values=np.vstack([clean, shifted])),
        model=ReferenceModel.from_arrays(np.zeros(p), np.eye(p), prob=prob),
        truth=truth,
    )


def planted_directions(p: int, n_groups: int, rng: np.random.Generator) -> Matrix:
    """n_groups orthonormal directions as rows."""
    return orthonormalize(rng.standard_normal((p, n_groups))).T


def weather_demo(n_clean: int = 48, n_groups: int = 5, group_size: int = 4, magnitude: float = 12.0,
                 seed: int = config.DEFAULT_SEED, prob: float = config.DEFAULT_PROBABILITY) -> DemoData:
    """
    Clean days from a known Gaussian plus groups of anomalous days.

    Each group sits `magnitude` standard deviations out along its own
    direction (directions are mutually orthogonal in standardized units)
    with unit-variance scatter around it. Rows are shuffled; `truth` holds
    the planted group of every row.
    """
    rng = np.random.default_rng(seed)
    p = len(WEATHER_COLUMNS)
    directions = planted_directions(p, n_groups, rng)

    clean_z = rng.standard_normal((n_clean, p))
    groups_z = [magnitude * directions[g] + rng.standard_normal((group_size, p)) for g in range(n_groups)]
    z = np.vstack([clean_z] + groups_z)
    truth = np.concatenate([np.full(n_clean, -1)] + [np.full(group_size, g) for g in range(n_groups)])

    order = rng.permutation(z.shape[0])
    values = WEATHER_MEANS + z[order] * WEATHER_SDS
    return DemoData(
        dataset=Dataset(column_names=list(WEATHER_COLUMNS), values=values,
                        row_ids=[f"day{i + 1:02d}" for i in range(values.shape[0])]),
        model=ReferenceModel.from_arrays(WEATHER_MEANS, np.diag(WEATHER_SDS ** 2), prob=prob),
        truth=truth[order],
    )


def make_demo(name: str, seed: int = config.DEFAULT_SEED, run_name: str = config.DEFAULT_RUN_NAME) -> DemoData:
    builders: Dict[str, Callable[[], DemoData]] = {
        "liver": lambda: liver_demo(seed=seed),
        "liver-aging": lambda: liver_aging_demo(seed=seed),
        "offset": lambda: offset_demo(seed=seed),
        "weather": lambda: weather_demo(seed=seed),
    }
    if name not in builders:
        raise ValueError(f"Unknown demo '{name}', expected one of {DEMOS}")
    demo = builders[name]()
    log_message(GENERATE_FOLDER, run_name,
                f"Demo '{name}': {demo.dataset.n} rows x {demo.dataset.p} columns (seed {seed})")
    return demo


def truth_groups(truth: np.ndarray) -> List[np.ndarray]:
    """Row indices of every planted group, in group order."""
    return [np.flatnonzero(truth == g) for g in range(int(truth.max()) + 1)] if truth.size else []
