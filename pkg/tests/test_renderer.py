import os

import numpy as np
import pandas as pd
import pytest

from src.helpers.renderer import (
    FrameScene,
    RenderSpec,
    auto_half_range,
    frame_filename,
    render_frames,
    write_ellipse_sidecar,
)
from src.pipeline.index import AnomalyIndex, OutlierRule, OutlierSet
from src.pipeline.reference import ReferenceModel, project_model
from src.pipeline.tour import TourTrace, grand_tour, guided_tour, random_basis
from tests.conftest import random_spd


@pytest.fixture
def scene(rng):
    model = ReferenceModel.from_arrays(rng.standard_normal(4), random_spd(4, rng), level_c2=9.0)
    x = model.mean + 3.0 * rng.standard_normal((25, 4))
    flagged = np.zeros(25, dtype=bool)
    flagged[[2, 7, 19]] = True
    return FrameScene(X=x, model=model, flagged=flagged, column_names=["a", "b", "c", "d"])


def test_render_spec_validation():
    with pytest.raises(ValueError):
        RenderSpec(width=0)
    with pytest.raises(ValueError):
        RenderSpec(half_range=-1.0)
    with pytest.raises(ValueError):
        RenderSpec(axes_position="topright")


def test_frame_filename():
    assert frame_filename(7) == "frame_00007.svg"


def test_auto_half_range_covers_every_point(scene):
    trace = grand_tour(4, 2, 3, seed=1)
    half = auto_half_range(scene, trace, RenderSpec())
    for frame in trace.frames:
        center = project_model(scene.model, frame.basis).center
        assert np.max(np.linalg.norm(scene.X @ frame.basis.matrix - center, axis=1)) < half


def test_frames_are_written_and_reproducible(tmp_path, scene):
    trace = grand_tour(4, 1, 3, seed=2)
    first = render_frames(str(tmp_path / "a"), scene, trace, RenderSpec(width=200, height=160))
    second = render_frames(str(tmp_path / "b"), scene, trace, RenderSpec(width=200, height=160), n_workers=2)
    assert [os.path.basename(p) for p in first] == [frame_filename(i) for i in range(4)]
    for a, b in zip(first, second):
        with open(a, "rb") as fa, open(b, "rb") as fb:
            content = fa.read()
            assert content.startswith(b"<?xml") and b"<svg" in content
            assert content == fb.read()


def test_labels_overlay_and_path(tmp_path, scene, rng):
    labelled = FrameScene(X=scene.X, model=scene.model, flagged=scene.flagged,
                          column_names=scene.column_names,
                          labels=np.where(scene.flagged, np.arange(25) % 2, -1),
                          overlay=scene.model.mean + rng.standard_normal((50, 4)), connect=True)
    trace = grand_tour(4, 1, 1, seed=3)
    spec = RenderSpec(show_axes=False, center_flag=True, half_range=10.0)
    paths = render_frames(str(tmp_path / "frames"), labelled, trace, spec)
    assert all(os.path.getsize(p) > 0 for p in paths)


def test_ellipse_sidecar_vertices_lie_on_projected_ellipse(tmp_path, scene):
    trace = grand_tour(4, 2, 2, seed=4)
    path = str(tmp_path / "ellipse.csv")
    write_ellipse_sidecar(path, scene.model, trace, n_points=32)
    rows = pd.read_csv(path, float_precision="round_trip")
    assert list(rows.columns) == ["frame_id", "vertex", "y1", "y2"]
    assert len(rows) == len(trace.frames) * 32
    assert rows["vertex"].tolist() == list(range(32)) * len(trace.frames)
    for frame_id, group in rows.groupby("frame_id"):
        ellipse = project_model(scene.model, trace.frames[frame_id].basis)
        values = ellipse.quadratic_form(group[["y1", "y2"]].to_numpy())
        np.testing.assert_allclose(values, 9.0, rtol=1e-8)


def test_ellipse_sidecar_for_guided_frames(tmp_path, scene):
    w = OutlierSet(np.flatnonzero(scene.flagged), OutlierRule.MANUAL)
    index = AnomalyIndex(scene.X, w, scene.model)
    trace = guided_tour(index, random_basis(4, np.random.default_rng(6)), seed=6)
    picks = np.random.default_rng(0).choice(len(trace.frames), size=min(50, len(trace.frames)), replace=False)
    sub = TourTrace(frames=[trace.frames[i] for i in sorted(picks)], kind="guided")
    path = str(tmp_path / "guided_ellipse.csv")
    write_ellipse_sidecar(path, scene.model, sub)
    rows = pd.read_csv(path, float_precision="round_trip")
    y = rows[["y1", "y2"]].to_numpy()
    ids = rows["frame_id"].to_numpy()
    for frame_id, frame in enumerate(sub.frames):
        values = project_model(scene.model, frame.basis).quadratic_form(y[ids == frame_id])
        np.testing.assert_allclose(values, 9.0, rtol=1e-8)
