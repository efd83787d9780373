"""
SVG frames for a tour: projected data, the projected reference ellipse and
an axis widget showing how each variable loads on the plane.
"""

import os
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from typing import List, Optional, Sequence

import matplotlib
import numpy as np
import pandas as pd
from matplotlib.figure import Figure
from matplotlib.patches import Circle
from tqdm import tqdm

from src.config import config
from src.config.folder_name import RENDER_FRAMES_FOLDER
from src.helpers.csv_saver import csv_saver
from src.helpers.logger import log_message
from src.helpers.numerics import Matrix
from src.pipeline.reference import ReferenceModel, ellipse_boundary, project_model
from src.pipeline.tour import TourFrame, TourTrace

AXES_POSITIONS = ("bottomleft", "off")

# fixed ids and live text keep rerendered frames byte-identical
SVG_RC = {"svg.hashsalt": "anomtour", "svg.fonttype": "none"}


@dataclass(frozen=True)
class RenderSpec:
    width: int = config.RENDER_WIDTH
    height: int = config.RENDER_HEIGHT
    point_radius: float = config.RENDER_POINT_RADIUS
    colors: Sequence[str] = config.CLUSTER_COLORS
    show_axes: bool = True
    axes_position: str = "bottomleft"
    half_range: Optional[float] = None  # None: fit every frame
    center_flag: bool = False
    dpi: int = config.RENDER_DPI
    ellipse_points: int = config.ELLIPSE_POINTS

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("Frame width and height must be positive")
        if self.half_range is not None and not self.half_range > 0.0:
            raise ValueError(f"half_range must be positive, got {self.half_range}")
        if self.axes_position not in AXES_POSITIONS:
            raise ValueError(f"axes position must be one of {AXES_POSITIONS}, got '{self.axes_position}'")


@dataclass(frozen=True, eq=False)
class FrameScene:
    """Everything that is drawn in every frame; only the basis changes."""

    X: Matrix
    model: ReferenceModel
    flagged: np.ndarray                    # boolean mask over rows of X
    column_names: List[str]
    labels: Optional[np.ndarray] = None    # cluster label per row, -1 for none
    overlay: Optional[Matrix] = None
    connect: bool = False


def _frame_geometry(scene: FrameScene, frame: TourFrame, n_points: int):
    ellipse = project_model(scene.model, frame.basis)
    vertices = ellipse_boundary(ellipse, n_points)
    points = scene.X @ frame.basis.matrix
    overlay = scene.overlay @ frame.basis.matrix if scene.overlay is not None else None
    return ellipse.center, vertices, points, overlay


def auto_half_range(scene: FrameScene, trace: TourTrace, spec: RenderSpec) -> float:
    """Largest distance of any point or ellipse vertex from the view center, over all frames."""
    extent = 0.0
    for frame in trace.frames:
        center, vertices, points, overlay = _frame_geometry(scene, frame, spec.ellipse_points)
        clouds = [vertices, points] + ([overlay] if overlay is not None else [])
        for cloud in clouds:
            extent = max(extent, float(np.max(np.linalg.norm(cloud - center, axis=1))))
    return extent * 1.05 if extent > 0.0 else 1.0


def _marker_size(spec: RenderSpec) -> float:
    diameter_pt = 2.0 * spec.point_radius * 72.0 / spec.dpi
    return diameter_pt ** 2


def _draw_axes_widget(ax, frame: TourFrame, names: List[str], x0: float, y0: float, radius: float):
    ax.add_patch(Circle((x0, y0), radius, fill=False, lw=0.6, color="#888888"))
    for name, (bx, by) in zip(names, frame.basis.matrix):
        ax.plot([x0, x0 + radius * bx], [y0, y0 + radius * by], lw=0.8, color="#555555")
        ax.text(x0 + 1.1 * radius * bx, y0 + 1.1 * radius * by, name, fontsize=7,
                ha="center", va="center", color="#333333")


def render_frame(path: str, scene: FrameScene, frame: TourFrame, spec: RenderSpec, half_range: float) -> str:
    center, vertices, points, overlay = _frame_geometry(scene, frame, spec.ellipse_points)
    # center_flag moves the reference center to the origin; otherwise raw coordinates
    shift = center if spec.center_flag else np.zeros(2)
    view = center - shift

    fig = Figure(figsize=(spec.width / spec.dpi, spec.height / spec.dpi), dpi=spec.dpi)
    ax = fig.add_axes([0.0, 0.0, 1.0, 1.0])
    aspect = spec.width / spec.height
    hx, hy = half_range * max(1.0, aspect), half_range * max(1.0, 1.0 / aspect)
    ax.set_xlim(view[0] - hx, view[0] + hx)
    ax.set_ylim(view[1] - hy, view[1] + hy)
    ax.set_axis_off()

    size = _marker_size(spec)
    if overlay is not None:
        o = overlay - shift
        ax.scatter(o[:, 0], o[:, 1], s=size, color=config.OVERLAY_COLOR, linewidths=0, alpha=0.5)

    y = points - shift
    if scene.connect:
        ax.plot(y[:, 0], y[:, 1], lw=0.8, color=config.POINT_COLOR, alpha=0.6)

    if scene.labels is not None:
        colors = [spec.colors[l % len(spec.colors)] if l >= 0 else config.POINT_COLOR for l in scene.labels]
    else:
        colors = [config.OUTLIER_COLOR if f else config.POINT_COLOR for f in scene.flagged]
    colors = np.array(colors, dtype=object)
    inside, outside = ~scene.flagged, scene.flagged
    if inside.any():
        ax.scatter(y[inside, 0], y[inside, 1], s=size, c=list(colors[inside]), marker="o", linewidths=0)
    if outside.any():
        ax.scatter(y[outside, 0], y[outside, 1], s=size * 1.5, c=list(colors[outside]), marker="x", linewidths=1.2)

    v = np.vstack([vertices, vertices[:1]]) - shift
    ax.plot(v[:, 0], v[:, 1], lw=1.0, color=config.ELLIPSE_COLOR)

    if spec.show_axes and spec.axes_position == "bottomleft":
        radius = 0.15 * min(hx, hy)
        _draw_axes_widget(ax, frame, scene.column_names,
                          view[0] - hx + 1.4 * radius, view[1] - hy + 1.4 * radius, radius)

    fig.savefig(path, format="svg", metadata={"Date": None})
    return path


def frame_filename(frame_id: int) -> str:
    return f"frame_{frame_id:05d}.svg"


def render_frames(frames_dir: str, scene: FrameScene, trace: TourTrace, spec: RenderSpec,
                  n_workers: int = config.RENDER_NUM_THREADS,
                  run_name: str = config.DEFAULT_RUN_NAME) -> List[str]:
    """Render every frame of the trace to frames_dir/frame_NNNNN.svg."""
    os.makedirs(frames_dir, exist_ok=True)
    half_range = spec.half_range if spec.half_range is not None else auto_half_range(scene, trace, spec)
    log_message(RENDER_FRAMES_FOLDER, run_name,
                f"Rendering {len(trace.frames)} frames to {frames_dir} (half range {half_range:.6g}, "
                f"{n_workers} thread(s))")

    paths = [os.path.join(frames_dir, frame_filename(i)) for i in range(len(trace.frames))]
    with matplotlib.rc_context(SVG_RC):
        with ThreadPoolExecutor(max_workers=max(1, n_workers)) as executor:
            futures = {
                executor.submit(render_frame, path, scene, frame, spec, half_range): path
                for path, frame in zip(paths, trace.frames)
            }
            for future in tqdm(as_completed(futures), total=len(futures), desc="Rendering frames",
                               ncols=80, disable=len(futures) < 2):
                try:
                    future.result()
                except Exception as e:
                    log_message(RENDER_FRAMES_FOLDER, run_name,
                                f"Failed to render {futures[future]}: {e}", level="error")
                    raise
    return paths


def write_ellipse_sidecar(path: str, model: ReferenceModel, trace: TourTrace,
                          n_points: int = config.ELLIPSE_POINTS,
                          run_name: str = config.DEFAULT_RUN_NAME) -> str:
    """Projected ellipse vertices of every frame in raw plane coordinates, at full precision."""
    blocks = []
    for frame_id, frame in enumerate(trace.frames):
        vertices = ellipse_boundary(project_model(model, frame.basis), n_points)
        blocks.append(pd.DataFrame({
            "frame_id": frame_id,
            "vertex": np.arange(len(vertices)),
            "y1": vertices[:, 0],
            "y2": vertices[:, 1],
        }))
    return csv_saver(pd.concat(blocks, ignore_index=True), os.path.dirname(path), os.path.basename(path),
                     RENDER_FRAMES_FOLDER, run_name)
