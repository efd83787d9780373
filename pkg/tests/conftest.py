import numpy as np
import pytest

from src.config import config
from src.pipeline.reference import ReferenceModel


@pytest.fixture(autouse=True)
def log_dir(tmp_path, monkeypatch):
    """Keep step logs out of the repository."""
    path = tmp_path / "logs"
    monkeypatch.setattr(config, "LOG_DIR", str(path))
    return path


def random_spd(p: int, rng: np.random.Generator) -> np.ndarray:
    a = rng.standard_normal((p, p))
    return a @ a.T + p * np.eye(p)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def identity_model():
    def make(p: int, level_c2: float = 1.0) -> ReferenceModel:
        return ReferenceModel.from_arrays(np.zeros(p), np.eye(p), level_c2=level_c2)
    return make
