# Module Imports
import os
import shutil
import sys
import time
from contextlib import contextmanager
from enum import Enum
from typing import Iterator, List, Optional, Tuple

import numpy as np
import pandas as pd
import typer

# Fix import path
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from src.config import config
from src.config.folder_name import (
    CLUSTER_DIRECTIONS_FOLDER,
    FLAG_OUTLIERS_FOLDER,
    GENERATE_FOLDER,
    LOAD_INPUTS_FOLDER,
    PIPELINE_MAIN_PROCESS_FOLDER,
    ROBUST_REFERENCE_FOLDER,
)
from src.helpers.csv_saver import csv_saver
from src.helpers.dataset import Dataset, load_csv, write_matrix_csv
from src.helpers.errors import AnomTourError, DimensionMismatch, InvalidK, InvalidRule
from src.helpers.logger import log_message
from src.helpers.model_file import read_model_file, write_model_file
from src.helpers.numerics import Matrix, chi2_quantile, sigma_to_tail
from src.helpers.renderer import FrameScene, RenderSpec, render_frames, write_ellipse_sidecar
from src.pipeline.demo_data import DEMOS, make_demo
from src.pipeline.index import AnomalyIndex, OutlierSet, mahalanobis_sq_rows, parse_rule, select_outliers
from src.pipeline.reference import ReferenceModel, sample_ellipsoid_surface, sample_reference
from src.pipeline.robust import RobustScaling, fast_mcd, median_mad_standardize, normalize_directions, select_k, support_size
from src.pipeline.tour import (
    GuidedTourOptions,
    TourTrace,
    TraceWriter,
    grand_tour,
    guided_tour,
    random_basis,
)

app = typer.Typer(
    add_completion=False,
    no_args_is_help=True,
    help="Anomaly-index guided tours: compare new observations with a reference normal distribution.",
)


class TourMode(str, Enum):
    grand = "grand"
    guided = "guided"


class AxesPosition(str, Enum):
    bottomleft = "bottomleft"
    off = "off"


class SampleKind(str, Enum):
    surface = "surface"
    normal = "normal"


class Optimizer(str, Enum):
    search_better = "search_better"
    random_restart = "random_restart"


def _run_name(path: Optional[str]) -> str:
    if not path:
        return config.DEFAULT_RUN_NAME
    return os.path.splitext(os.path.basename(path))[0]


def _fail(e: Exception, run_name: str):
    log_message(PIPELINE_MAIN_PROCESS_FOLDER, run_name, f"FAILURE. {type(e).__name__}: {e}", level="error")
    message = str(e).replace("\n", " ")
    typer.echo(f"error: {type(e).__name__}: {message}", err=True)
    raise typer.Exit(code=1)


@contextmanager
def _partial_dir(out: str, run_name: str) -> Iterator[str]:
    """Build an output directory under `<out>.partial`; move it into place only on success."""
    partial = f"{out.rstrip(os.sep)}.partial"
    if os.path.exists(partial):
        shutil.rmtree(partial)
    os.makedirs(partial)
    yield partial
    if os.path.exists(out):
        shutil.rmtree(out)
    shutil.move(partial, out)
    log_message(PIPELINE_MAIN_PROCESS_FOLDER, run_name, f"Output moved from '{partial}' to '{out}'")


@contextmanager
def _partial_file(path: str) -> Iterator[str]:
    partial = f"{path}.partial"
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    yield partial
    os.replace(partial, path)


def _level_c2(p: int, prob: Optional[float], c2: Optional[float], sigma: Optional[float]) -> Optional[float]:
    """c^2 from exactly one of --prob, --c2, --sigma; None when none was given."""
    given = [v is not None for v in (prob, c2, sigma)]
    if sum(given) > 1:
        raise InvalidRule("Give at most one of --prob, --c2 and --sigma")
    if c2 is not None:
        return c2
    if sigma is not None:
        return chi2_quantile(sigma_to_tail(sigma), p, upper_tail=True)
    if prob is not None:
        return chi2_quantile(prob, p)
    return None


def _parse_k_range(text: str) -> Tuple[int, int]:
    low, sep, high = text.partition("..")
    try:
        if not sep:
            raise ValueError
        return int(low), int(high)
    except ValueError:
        raise InvalidK(f"k range must look like A..B, got '{text}'")


def _load_data(data: str, run_name: str) -> Dataset:
    dataset = load_csv(data)
    log_message(LOAD_INPUTS_FOLDER, run_name, f"Loaded {data}: {dataset.n} rows x {dataset.p} columns")
    typer.echo(f"📊 Loaded {os.path.basename(data)} | Shape: ({dataset.n}, {dataset.p})")
    return dataset


def _build_reference(dataset: Dataset, model_path: Optional[str], robust: bool, level_c2: Optional[float],
                     support_fraction: float, mcd_starts: int, seed: int, workers: int,
                     save_model: Optional[str], run_name: str
                     ) -> Tuple[Matrix, ReferenceModel, Optional[RobustScaling]]:
    """
    Returns the data matrix the analysis runs on, the reference model and
    the column scaling applied to the data (None without `robust`).

    With `robust` the columns are median/MAD standardized and the model is
    the raw MCD estimate in those standardized units.
    """
    if robust:
        if model_path:
            raise InvalidRule("--robust estimates the reference from the data; do not also pass --model")
        try:
            X, scaling = median_mad_standardize(dataset.values, dataset.column_names)
            h = support_size(dataset.n, dataset.p, support_fraction)
            mcd = fast_mcd(X, h=h, n_starts=mcd_starts, seed=seed, n_workers=workers, run_name=run_name)
        except AnomTourError as e:
            log_message(ROBUST_REFERENCE_FOLDER, run_name, f"Robust reference failed: {e}", level="error")
            raise
        if level_c2 is None:
            level_c2 = chi2_quantile(config.DEFAULT_PROBABILITY, dataset.p)
        model = ReferenceModel(mean=mcd.mean, covariance=mcd.covariance, level_c2=level_c2)
        typer.echo(f"✅ Robust reference: MCD h={mcd.h}, log det={mcd.log_det:.4f}, "
                   f"{mcd.n_discarded} start(s) discarded")
        if save_model:
            comment = ("MCD reference in median/MAD standardized units\n"
                       "medians " + " ".join(repr(float(v)) for v in scaling.medians) + "\n"
                       "mads " + " ".join(repr(float(v)) for v in scaling.mads))
            with _partial_file(save_model) as partial:
                write_model_file(partial, model, dataset.column_names, comment=comment)
            typer.echo(f"💾 Reference model saved to: {save_model}")
        return X, model, scaling

    if not model_path:
        raise InvalidRule("Give a reference model with --model or estimate one with --robust")
    model, columns = read_model_file(model_path)
    if model.p != dataset.p:
        raise DimensionMismatch(f"Data has {dataset.p} columns but the model has dimension {model.p}")
    if columns is not None and columns != dataset.column_names:
        raise DimensionMismatch(f"Model columns {columns} do not match data columns {dataset.column_names}")
    if level_c2 is not None:
        model = model.with_level(level_c2)
    log_message(LOAD_INPUTS_FOLDER, run_name, f"Loaded model {model_path}: p={model.p}, c2={model.level_c2:.6g}")
    return dataset.values, model, None


def _run_tour(out_dir: str, X: Matrix, model: ReferenceModel, outliers: OutlierSet, column_names: List[str],
              mode: TourMode, seed: int, targets: int, steps: int, optimizer: Optimizer, workers: int,
              allow_empty: bool, frames: bool, spec: RenderSpec, overlay: Optional[Matrix], connect: bool,
              run_name: str, labels: Optional[np.ndarray] = None) -> TourTrace:
    """Run one tour into out_dir: trace.csv, ellipse.csv and frames/*.svg."""
    p = X.shape[1]
    if mode is TourMode.guided and len(outliers) == 0:
        if not allow_empty:
            raise InvalidRule("Guided tour needs at least one flagged row (use --allow-empty for a grand tour)")
        log_message(PIPELINE_MAIN_PROCESS_FOLDER, run_name,
                    "No flagged rows; falling back to a grand tour", level="warning")
        typer.echo("⚠️ No flagged rows: falling back to a grand tour")
        mode = TourMode.grand

    index = AnomalyIndex(X, outliers, model) if len(outliers) else None
    trace_path = os.path.join(out_dir, config.TRACE_FILENAME)
    with open(trace_path, "w", newline="", encoding="utf-8") as handle:
        writer = TraceWriter(handle, p)
        if mode is TourMode.grand:
            trace = grand_tour(p, targets, steps, seed, index_fn=index, frame_sink=writer, run_name=run_name)
        else:
            start = random_basis(p, np.random.default_rng([seed, 1]))
            opts = GuidedTourOptions(optimizer=optimizer.value, n_workers=workers)
            trace = guided_tour(index, start, opts, seed=seed, frame_sink=writer, run_name=run_name)
    typer.echo(f"✅ {mode.value.capitalize()} tour: {len(trace.frames)} frames, "
               f"final index={trace.final.index_value:.6g}")

    write_ellipse_sidecar(os.path.join(out_dir, config.ELLIPSE_FILENAME), model, trace, spec.ellipse_points,
                          run_name=run_name)
    if frames:
        flagged = np.zeros(X.shape[0], dtype=bool)
        flagged[outliers.indices] = True
        scene = FrameScene(X=X, model=model, flagged=flagged, column_names=column_names,
                           labels=labels, overlay=overlay, connect=connect)
        render_frames(os.path.join(out_dir, config.FRAMES_DIRNAME), scene, trace, spec,
                      n_workers=workers, run_name=run_name)
        typer.echo(f"✅ Rendered {len(trace.frames)} SVG frames")
    return trace


def _overlay(overlay_path: Optional[str], reference_sample: Optional[int], model: ReferenceModel,
             scaling: Optional[RobustScaling], seed: int) -> Optional[Matrix]:
    if overlay_path and reference_sample:
        raise InvalidRule("Give at most one of --overlay and --reference-sample")
    if reference_sample:
        return sample_reference(model, reference_sample, seed)
    if not overlay_path:
        return None
    extra = load_csv(overlay_path)
    if extra.p != model.p:
        raise DimensionMismatch(f"Overlay has {extra.p} columns, model has dimension {model.p}")
    return scaling.apply(extra.values) if scaling is not None else extra.values


@app.command()
def generate(
    model: str = typer.Option(..., "--model", help="Reference model file."),
    n: int = typer.Option(100, "--n", help="Number of observations."),
    seed: int = typer.Option(config.DEFAULT_SEED, "--seed"),
    out: str = typer.Option(..., "--out", help="Output CSV."),
    kind: SampleKind = typer.Option(SampleKind.surface, "--kind",
                                    help="surface: points on the level-set ellipsoid; normal: draws from N(mean, cov)."),
):
    """Sample observations from a reference model."""
    run_name = _run_name(model)
    try:
        reference, columns = read_model_file(model)
        if kind is SampleKind.surface:
            values = sample_ellipsoid_surface(reference, n, seed)
        else:
            values = sample_reference(reference, n, seed)
        names = columns or [f"x{i + 1}" for i in range(reference.p)]
        write_matrix_csv(out, values, names, GENERATE_FOLDER, run_name)
        log_message(GENERATE_FOLDER, run_name, f"Wrote {n} {kind.value} samples to {out} (seed {seed})")
        typer.echo(f"✅ Wrote {n} {kind.value} samples to: {out}")
    except (AnomTourError, OSError, ValueError) as e:
        _fail(e, run_name)


@app.command()
def flag(
    data: str = typer.Option(..., "--data", help="Input CSV."),
    model: Optional[str] = typer.Option(None, "--model", help="Reference model file."),
    robust: bool = typer.Option(False, "--robust", help="Estimate the reference with median/MAD scaling and MCD."),
    prob: Optional[float] = typer.Option(None, "--prob"),
    c2: Optional[float] = typer.Option(None, "--c2"),
    sigma: Optional[float] = typer.Option(None, "--sigma", help="Two-sided normal threshold, e.g. 5."),
    support_fraction: float = typer.Option(config.MCD_SUPPORT_FRACTION, "--support-fraction"),
    mcd_starts: int = typer.Option(config.MCD_STARTS, "--mcd-starts"),
    workers: int = typer.Option(config.MCD_NUM_THREADS, "--workers"),
    save_model: Optional[str] = typer.Option(None, "--save-model", help="Write the estimated reference here."),
    seed: int = typer.Option(config.DEFAULT_SEED, "--seed"),
    out: str = typer.Option(..., "--out", help="Report CSV."),
):
    """Squared Mahalanobis distance of every row, sorted by distance, with the outside flag."""
    start_time = time.time()
    run_name = _run_name(data)
    try:
        dataset = _load_data(data, run_name)
        level = _level_c2(dataset.p, prob, c2, sigma)
        X, reference, _ = _build_reference(dataset, model, robust, level, support_fraction, mcd_starts,
                                        seed, workers, save_model, run_name)

        d2 = mahalanobis_sq_rows(X, reference)
        report = pd.DataFrame({"row": np.arange(dataset.n)})
        if dataset.row_ids is not None:
            report["id"] = dataset.row_ids
        report["mahalanobis_sq"] = d2
        report["outside"] = (d2 > reference.level_c2).astype(int)
        report = report.sort_values(["mahalanobis_sq", "row"], ascending=[False, True], kind="mergesort")

        n_out = int(report["outside"].sum())
        log_message(FLAG_OUTLIERS_FOLDER, run_name,
                    f"{n_out} of {dataset.n} rows outside c2={reference.level_c2:.6g}")
        csv_saver(report, os.path.dirname(out), os.path.basename(out), FLAG_OUTLIERS_FOLDER, run_name)
        typer.echo(f"✅ Flagged {n_out} of {dataset.n} rows (c2={reference.level_c2:.4f})")
        typer.echo(f"💾 Report saved to: {out}")
    except (AnomTourError, OSError, ValueError) as e:
        _fail(e, run_name)
    log_message(PIPELINE_MAIN_PROCESS_FOLDER, run_name, f"flag finished in {time.time() - start_time:.2f}s")


@app.command()
def tour(
    data: str = typer.Option(..., "--data", help="Input CSV."),
    model: Optional[str] = typer.Option(None, "--model", help="Reference model file."),
    robust: bool = typer.Option(False, "--robust"),
    prob: Optional[float] = typer.Option(None, "--prob"),
    c2: Optional[float] = typer.Option(None, "--c2"),
    sigma: Optional[float] = typer.Option(None, "--sigma"),
    rule: str = typer.Option("outside", "--rule", help="outside | topk:K | manual:FILE"),
    mode: TourMode = typer.Option(TourMode.guided, "--mode"),
    seed: int = typer.Option(config.DEFAULT_SEED, "--seed"),
    out: str = typer.Option(..., "--out", help="Output directory."),
    frames: bool = typer.Option(True, "--frames/--no-frames", help="Render SVG frames."),
    steps: int = typer.Option(config.GRAND_STEPS_PER_LEG, "--steps", help="Grand tour frames per leg."),
    targets: int = typer.Option(config.GRAND_TARGETS, "--targets", help="Grand tour target planes."),
    optimizer: Optimizer = typer.Option(Optimizer.search_better, "--optimizer"),
    workers: int = typer.Option(config.RENDER_NUM_THREADS, "--workers"),
    allow_empty: bool = typer.Option(False, "--allow-empty", help="Fall back to a grand tour when nothing is flagged."),
    width: int = typer.Option(config.RENDER_WIDTH, "--width"),
    height: int = typer.Option(config.RENDER_HEIGHT, "--height"),
    axes: AxesPosition = typer.Option(AxesPosition.bottomleft, "--axes"),
    half_range: Optional[float] = typer.Option(None, "--half-range"),
    center: bool = typer.Option(False, "--center/--no-center", help="Put the projected reference mean at the origin."),
    overlay: Optional[str] = typer.Option(None, "--overlay", help="Extra CSV point cloud drawn under the data."),
    reference_sample: Optional[int] = typer.Option(None, "--reference-sample", help="Overlay N draws from the model."),
    connect: bool = typer.Option(False, "--connect", help="Join observations in row order."),
    support_fraction: float = typer.Option(config.MCD_SUPPORT_FRACTION, "--support-fraction"),
    mcd_starts: int = typer.Option(config.MCD_STARTS, "--mcd-starts"),
):
    """Grand or anomaly-index guided tour with SVG frames and a trace CSV."""
    start_time = time.time()
    run_name = _run_name(data)
    try:
        dataset = _load_data(data, run_name)
        level = _level_c2(dataset.p, prob, c2, sigma)
        X, reference, scaling = _build_reference(dataset, model, robust, level, support_fraction, mcd_starts,
                                        seed, config.MCD_NUM_THREADS, None, run_name)
        outliers = select_outliers(X, reference, parse_rule(rule))
        log_message(FLAG_OUTLIERS_FOLDER, run_name, f"Rule '{rule}' flagged {len(outliers)} rows")
        typer.echo(f"✅ Rule '{rule}' flagged {len(outliers)} of {dataset.n} rows")

        spec = RenderSpec(width=width, height=height, show_axes=axes is not AxesPosition.off,
                          axes_position=axes.value, half_range=half_range, center_flag=center)
        extra = _overlay(overlay, reference_sample, reference, scaling, seed)
        with _partial_dir(out, run_name) as partial:
            _run_tour(partial, X, reference, outliers, dataset.column_names, mode, seed, targets, steps,
                      optimizer, workers, allow_empty, frames, spec, extra, connect, run_name)
        typer.echo(f"💾 Tour written to: {out}")
    except (AnomTourError, OSError, ValueError) as e:
        _fail(e, run_name)
    log_message(PIPELINE_MAIN_PROCESS_FOLDER, run_name, f"tour finished in {time.time() - start_time:.2f}s")


@app.command()
def cluster(
    data: str = typer.Option(..., "--data", help="Input CSV."),
    model: Optional[str] = typer.Option(None, "--model"),
    robust: bool = typer.Option(False, "--robust"),
    prob: Optional[float] = typer.Option(None, "--prob"),
    c2: Optional[float] = typer.Option(None, "--c2"),
    sigma: Optional[float] = typer.Option(None, "--sigma"),
    rule: str = typer.Option("outside", "--rule"),
    k_range: str = typer.Option(f"{config.K_RANGE[0]}..{config.K_RANGE[1]}", "--k-range"),
    seed: int = typer.Option(config.DEFAULT_SEED, "--seed"),
    out: str = typer.Option(..., "--out", help="Output directory."),
    tour_per_cluster: bool = typer.Option(False, "--tour-per-cluster",
                                          help="Run a guided tour on every cluster as its own flagged set."),
    frames: bool = typer.Option(True, "--frames/--no-frames"),
    workers: int = typer.Option(config.RENDER_NUM_THREADS, "--workers"),
    support_fraction: float = typer.Option(config.MCD_SUPPORT_FRACTION, "--support-fraction"),
    mcd_starts: int = typer.Option(config.MCD_STARTS, "--mcd-starts"),
    width: int = typer.Option(config.RENDER_WIDTH, "--width"),
    height: int = typer.Option(config.RENDER_HEIGHT, "--height"),
    axes: AxesPosition = typer.Option(AxesPosition.bottomleft, "--axes"),
    half_range: Optional[float] = typer.Option(None, "--half-range"),
):
    """Group flagged rows by the direction they leave the reference in."""
    start_time = time.time()
    run_name = _run_name(data)
    try:
        dataset = _load_data(data, run_name)
        level = _level_c2(dataset.p, prob, c2, sigma)
        X, reference, _ = _build_reference(dataset, model, robust, level, support_fraction, mcd_starts,
                                        seed, config.MCD_NUM_THREADS, None, run_name)
        outliers = select_outliers(X, reference, parse_rule(rule))
        m = len(outliers)
        if m < 2:
            raise InvalidK(f"Clustering needs at least 2 flagged rows, found {m}")
        typer.echo(f"✅ Rule '{rule}' flagged {m} of {dataset.n} rows")

        k_low, k_high = _parse_k_range(k_range)
        if k_high > m:
            log_message(CLUSTER_DIRECTIONS_FOLDER, run_name,
                        f"k range {k_low}..{k_high} capped at {m} flagged rows", level="warning")
            typer.echo(f"⚠️ k range capped at {m} (number of flagged rows)")
            k_high = m
        directions = normalize_directions(X[outliers.indices] - reference.mean)
        solution = select_k(directions, range(k_low, k_high + 1), seed=seed, run_name=run_name)
        typer.echo(f"✅ Selected k={solution.k} (Dunn={solution.dunn:.4f})")

        labels_report = pd.DataFrame({"row": outliers.indices})
        if dataset.row_ids is not None:
            labels_report["id"] = [dataset.row_ids[i] for i in outliers.indices]
        labels_report["cluster"] = solution.labels
        dunn_report = pd.DataFrame({"k": list(solution.dunn_by_k), "dunn": list(solution.dunn_by_k.values())})
        centroid_report = pd.DataFrame(solution.centroids, columns=dataset.column_names)
        centroid_report.insert(0, "cluster", np.arange(solution.k))

        spec = RenderSpec(width=width, height=height, show_axes=axes is not AxesPosition.off,
                          axes_position=axes.value, half_range=half_range)
        with _partial_dir(out, run_name) as partial:
            csv_saver(labels_report, partial, "labels.csv", CLUSTER_DIRECTIONS_FOLDER, run_name)
            csv_saver(dunn_report, partial, "dunn.csv", CLUSTER_DIRECTIONS_FOLDER, run_name)
            csv_saver(centroid_report, partial, "directions.csv", CLUSTER_DIRECTIONS_FOLDER, run_name)
            if tour_per_cluster:
                row_labels = np.full(dataset.n, -1)
                row_labels[outliers.indices] = solution.labels
                for g in range(solution.k):
                    members = OutlierSet(outliers.indices[solution.labels == g], outliers.rule, float(g))
                    cluster_dir = os.path.join(partial, f"cluster_{g}")
                    os.makedirs(cluster_dir)
                    typer.echo(f"🔎 Cluster {g}: guided tour on {len(members)} rows")
                    _run_tour(cluster_dir, X, reference, members, dataset.column_names, TourMode.guided,
                              seed, config.GRAND_TARGETS, config.GRAND_STEPS_PER_LEG, Optimizer.search_better,
                              workers, False, frames, spec, None, False, run_name, labels=row_labels)
        typer.echo(f"💾 Cluster report written to: {out}")
    except (AnomTourError, OSError, ValueError) as e:
        _fail(e, run_name)
    log_message(PIPELINE_MAIN_PROCESS_FOLDER, run_name, f"cluster finished in {time.time() - start_time:.2f}s")


@app.command()
def demo(
    name: str = typer.Argument(..., help=f"One of: {', '.join(DEMOS)}"),
    out: str = typer.Option(..., "--out", help="Output directory."),
    seed: int = typer.Option(config.DEFAULT_SEED, "--seed"),
):
    """Write a synthetic dataset (data.csv), its reference model (model.txt) and planted truth if any."""
    run_name = name
    try:
        made = make_demo(name, seed=seed, run_name=run_name)
        with _partial_dir(out, run_name) as partial:
            write_matrix_csv(os.path.join(partial, "data.csv"), made.dataset.values,
                             made.dataset.column_names, GENERATE_FOLDER, run_name, made.dataset.row_ids)
            write_model_file(os.path.join(partial, "model.txt"), made.model, made.dataset.column_names,
                             comment=f"reference model for the '{name}' demo")
            if made.truth is not None:
                truth = pd.DataFrame({"row": np.arange(made.dataset.n), "group": made.truth})
                csv_saver(truth, partial, "truth.csv", GENERATE_FOLDER, run_name)
        typer.echo(f"✅ Demo '{name}' written to: {out}")
    except (AnomTourError, OSError, ValueError) as e:
        _fail(e, run_name)


if __name__ == "__main__":
    app()
