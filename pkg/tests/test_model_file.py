import math

import numpy as np
import pytest

from src.helpers.errors import ModelFileError
from src.helpers.model_file import read_model_file, write_model_file
from src.pipeline.reference import ReferenceModel

MODEL_TEXT = """\
# liver reference
p 3
columns GGT AST ALT
mean 30 25 28   # midpoints
covariance
100 0 10
0 36 12
10 12 64
prob 0.95
"""


def _write(tmp_path, text):
    path = tmp_path / "model.txt"
    path.write_text(text)
    return str(path)


def test_parses_full_model(tmp_path):
    model, columns = read_model_file(_write(tmp_path, MODEL_TEXT))
    assert columns == ["GGT", "AST", "ALT"]
    np.testing.assert_array_equal(model.mean, [30.0, 25.0, 28.0])
    assert model.covariance.base[2, 0] == 10.0
    assert 7.81 < model.level_c2 < 7.82


def test_c2_level_and_no_columns(tmp_path):
    model, columns = read_model_file(_write(tmp_path, "p 2\nmean 0 0\ncovariance\n1 0\n0 1\nc2 9\n"))
    assert columns is None
    assert model.level_c2 == 9.0


@pytest.mark.parametrize("text,line", [
    ("p two\nmean 0 0\ncovariance\n1 0\n0 1\nc2 1\n", 1),
    ("p 2\nmean 0 x\ncovariance\n1 0\n0 1\nc2 1\n", 2),
    ("p 2\nmean 0 0\ncovariance\n1 0\n0 1 2\nc2 1\n", 5),
    ("p 2\nmean 0 0\ncovariance\n1 0\n0 1\nlevel 1\n", 6),
    ("mean 0 0\ncovariance\n1 0\n0 1\nc2 1\n", 2),
    ("p 2\nmean 0 0\ncovariance\n1 2\n2 1\nc2 1\n", 3),
    ("p 2\nmean nan 0\ncovariance\n1 0\n0 1\nc2 1\n", 2),
    ("p 2\nmean 0 0\ncovariance\n1 0\ninf 1\nc2 1\n", 5),
    ("p 2\nmean 0 0\ncovariance\n1 0\n0 1\nc2 inf\n", 6),
    ("p 2\nmean 0 0\ncovariance\n1 0\n0 1\nc2 -4\n", 3),
])
def test_errors_name_the_line(tmp_path, text, line):
    with pytest.raises(ModelFileError) as info:
        read_model_file(_write(tmp_path, text))
    assert info.value.line == line


@pytest.mark.parametrize("text,reason", [
    ("p 2\nmean 0 0\ncovariance\n1 0\n0 1\n", "exactly one"),
    ("p 2\nmean 0 0\ncovariance\n1 0\n0 1\nc2 1\nprob 0.9\n", "exactly one"),
    ("p 3\nmean 0 0\ncovariance\n1 0 0\n0 1 0\n0 0 1\nc2 1\n", "mean has 2"),
    ("p 2\ncolumns a b c\nmean 0 0\ncovariance\n1 0\n0 1\nc2 1\n", "columns lists 3"),
    ("p 2\nmean 0 0\nc2 1\n", "needs"),
])
def test_whole_file_errors(tmp_path, text, reason):
    with pytest.raises(ModelFileError, match=reason):
        read_model_file(_write(tmp_path, text))


def test_missing_file(tmp_path):
    with pytest.raises(ModelFileError):
        read_model_file(str(tmp_path / "absent.txt"))


def test_written_model_reads_back_exactly(tmp_path, rng):
    a = rng.standard_normal((4, 4))
    model = ReferenceModel.from_arrays(rng.standard_normal(4), a @ a.T + np.eye(4), level_c2=math.pi)
    path = str(tmp_path / "saved.txt")
    write_model_file(path, model, columns=["a", "b", "c", "d"], comment="robust fit\nh=48")
    back, columns = read_model_file(path)
    assert columns == ["a", "b", "c", "d"]
    np.testing.assert_array_equal(back.mean, model.mean)
    np.testing.assert_array_equal(back.covariance.base, model.covariance.base)
    assert back.level_c2 == model.level_c2
