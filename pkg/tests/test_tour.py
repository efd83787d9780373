import math

import numpy as np
import pytest
from scipy.stats import chisquare

from src.helpers.errors import DimensionMismatch, IndexEvaluationError
from src.pipeline.demo_data import offset_demo, offset_direction
from src.pipeline.index import AnomalyIndex, OutlierRule, OutlierSet, RuleSpec, mahalanobis_sq, select_outliers
from src.pipeline.reference import ReferenceModel
from src.pipeline.tour import (
    GuidedTourOptions,
    ProjectionBasis,
    TraceWriter,
    basis_mass,
    geodesic_interpolate,
    grand_tour,
    guided_tour,
    principal_angles,
    projector_distance,
    random_basis,
    read_trace_csv,
    trace_header,
)
from tests.conftest import random_spd


def _orthonormal_error(basis):
    m = basis.matrix
    return float(np.max(np.abs(m.T @ m - np.eye(m.shape[1]))))


class TestProjectionBasis:
    def test_rejects_non_orthonormal(self):
        with pytest.raises(ValueError):
            ProjectionBasis(np.array([[1.0, 1.0], [0.0, 1.0], [0.0, 0.0]]))

    def test_rejects_bad_shape(self):
        with pytest.raises(DimensionMismatch):
            ProjectionBasis(np.ones((1, 2)))

    def test_from_matrix(self, rng):
        basis = ProjectionBasis.from_matrix(rng.standard_normal((5, 2)))
        assert basis.p == 5 and basis.d == 2
        assert _orthonormal_error(basis) < 1e-12


class TestRandomBasis:
    @pytest.mark.parametrize("p", [2, 3, 7, 16])
    def test_orthonormal(self, p, rng):
        for _ in range(20):
            assert _orthonormal_error(random_basis(p, rng)) < 1e-12

    def test_first_column_is_uniform_over_octants(self):
        rng = np.random.default_rng(7)
        n = 4000
        counts = np.zeros(8)
        for _ in range(n):
            col = random_basis(3, rng).matrix[:, 0]
            counts[int(col[0] > 0) * 4 + int(col[1] > 0) * 2 + int(col[2] > 0)] += 1
        assert chisquare(counts).pvalue > 0.001

    def test_seeded(self):
        np.testing.assert_array_equal(random_basis(6, 3).matrix, random_basis(6, 3).matrix)

    def test_invalid_dimension(self):
        with pytest.raises(ValueError):
            random_basis(1, 0)


class TestGeodesic:
    def test_endpoints(self, rng):
        for p in (3, 5, 9):
            fa, fb = random_basis(p, rng), random_basis(p, rng)
            assert projector_distance(geodesic_interpolate(fa, fb, 0.0), fa) < 1e-8
            assert projector_distance(geodesic_interpolate(fa, fb, 1.0), fb) < 1e-8

    def test_start_frame_is_returned_unchanged(self, rng):
        fa, fb = random_basis(4, rng), random_basis(4, rng)
        np.testing.assert_allclose(geodesic_interpolate(fa, fb, 0.0).matrix, fa.matrix, atol=1e-12)

    def test_same_plane_stays_put(self, rng):
        fa = random_basis(5, rng)
        q, _ = np.linalg.qr(rng.standard_normal((2, 2)))
        fb = ProjectionBasis(fa.matrix @ q)
        for t in (0.0, 0.3, 1.0):
            assert projector_distance(geodesic_interpolate(fa, fb, t), fa) < 1e-8

    def test_single_rotation(self):
        theta = 1.1
        fa = ProjectionBasis(np.eye(3)[:, :2])
        fb = ProjectionBasis(np.array([[1.0, 0.0], [0.0, math.cos(theta)], [0.0, math.sin(theta)]]))
        for t in np.linspace(0.0, 1.0, 11):
            expected = ProjectionBasis(
                np.array([[1.0, 0.0], [0.0, math.cos(t * theta)], [0.0, math.sin(t * theta)]])
            )
            assert projector_distance(geodesic_interpolate(fa, fb, t), expected) < 1e-10

    def test_angles_split_in_proportion(self, rng):
        fa, fb = random_basis(4, rng), random_basis(4, rng)
        theta = principal_angles(fa, fb)
        for t in (0.25, 0.5, 0.8):
            mid = geodesic_interpolate(fa, fb, t)
            np.testing.assert_allclose(principal_angles(fa, mid), t * theta, atol=1e-6)
            np.testing.assert_allclose(principal_angles(mid, fb), (1 - t) * theta, atol=1e-6)

    def test_every_frame_is_orthonormal(self, rng):
        fa, fb = random_basis(8, rng), random_basis(8, rng)
        for t in np.linspace(0.0, 1.0, 50):
            assert _orthonormal_error(geodesic_interpolate(fa, fb, t)) < 1e-12

    def test_rejects_bad_fraction(self, rng):
        fa, fb = random_basis(4, rng), random_basis(4, rng)
        with pytest.raises(ValueError):
            geodesic_interpolate(fa, fb, 1.5)

    def test_dimension_mismatch(self, rng):
        with pytest.raises(DimensionMismatch):
            geodesic_interpolate(random_basis(4, rng), random_basis(5, rng), 0.5)


class TestGrandTour:
    def test_minimal_tour_has_two_frames(self):
        trace = grand_tour(4, n_targets=1, steps_per_leg=1, seed=1)
        assert len(trace.frames) == 2
        assert all(f.is_target for f in trace.frames)
        assert trace.kind == "grand"

    @pytest.mark.parametrize("n_targets,steps", [(1, 10), (3, 7), (5, 20)])
    def test_frame_count(self, n_targets, steps):
        trace = grand_tour(5, n_targets=n_targets, steps_per_leg=steps, seed=2)
        assert len(trace.frames) == 1 + n_targets * steps
        assert len(trace.targets()) == 1 + n_targets

    def test_deterministic(self):
        a = grand_tour(6, 3, 5, seed=42)
        b = grand_tour(6, 3, 5, seed=42)
        for fa, fb in zip(a.frames, b.frames):
            np.testing.assert_array_equal(fa.basis.matrix, fb.basis.matrix)

    def test_long_tour_stays_orthonormal(self):
        trace = grand_tour(7, n_targets=25, steps_per_leg=20, seed=3)
        assert len(trace.frames) == 501
        assert max(_orthonormal_error(f.basis) for f in trace.frames) < 1e-10

    def test_consecutive_frames_are_close(self):
        trace = grand_tour(5, n_targets=4, steps_per_leg=30, seed=9)
        for a, b in zip(trace.frames, trace.frames[1:]):
            assert np.max(principal_angles(a.basis, b.basis)) < math.pi / 2 / 30 + 1e-9

    def test_frame_sink_sees_every_frame(self):
        seen = []
        trace = grand_tour(4, 2, 3, seed=0, frame_sink=seen.append)
        assert seen == trace.frames

    def test_index_values_recorded(self, identity_model):
        x = np.array([[3.0, 0.0, 0.0, 0.0]])
        index = AnomalyIndex(x, OutlierSet(np.array([0]), OutlierRule.MANUAL), identity_model(4))
        trace = grand_tour(4, 2, 4, seed=5, index_fn=index)
        for frame in trace.frames:
            assert frame.index_value == pytest.approx(index(frame.basis), rel=1e-12)


class TestGuidedTour:
    def test_constant_index_returns_start(self, rng):
        start = random_basis(5, rng)
        trace = guided_tour(lambda basis: 1.0, start, seed=0)
        assert len(trace.frames) == 1
        assert projector_distance(trace.final.basis, start) < 1e-12

    def test_target_values_never_decrease(self, rng):
        model = ReferenceModel.from_arrays(np.zeros(5), random_spd(5, rng), level_c2=9.0)
        x = rng.standard_normal((20, 5)) * 4.0
        index = AnomalyIndex(x, OutlierSet(np.arange(0, 20, 4), OutlierRule.MANUAL), model)
        trace = guided_tour(index, random_basis(5, rng), seed=3)
        targets = [f.index_value for f in trace.targets()]
        assert all(b > a for a, b in zip(targets, targets[1:]))
        assert trace.final.is_target
        assert trace.kind == "guided"

    def test_frames_are_small_steps(self, rng):
        model = ReferenceModel.from_arrays(np.zeros(4), np.eye(4), level_c2=9.0)
        x = rng.standard_normal((5, 4)) * 5.0
        index = AnomalyIndex(x, OutlierSet(np.arange(5), OutlierRule.MANUAL), model)
        trace = guided_tour(index, random_basis(4, rng), seed=1)
        for a, b in zip(trace.frames, trace.frames[1:]):
            assert np.max(principal_angles(a.basis, b.basis)) <= 0.05 + 1e-9

    def test_single_point_saturates(self, rng):
        model = ReferenceModel.from_arrays(rng.standard_normal(6), random_spd(6, rng), level_c2=12.0)
        x = model.mean + 5.0 * rng.standard_normal((1, 6))
        index = AnomalyIndex(x, OutlierSet(np.array([0]), OutlierRule.MANUAL), model)
        trace = guided_tour(index, random_basis(6, rng), seed=4)
        assert trace.final.index_value >= 0.98 * mahalanobis_sq(x[0], model)

    @pytest.mark.parametrize("optimizer", ["search_better", "random_restart"])
    def test_deterministic(self, rng, optimizer):
        model = ReferenceModel.from_arrays(np.zeros(4), np.eye(4), level_c2=9.0)
        x = rng.standard_normal((6, 4)) * 3.0
        index = AnomalyIndex(x, OutlierSet(np.arange(6), OutlierRule.MANUAL), model)
        start = random_basis(4, rng)
        opts = GuidedTourOptions(optimizer=optimizer)
        a = guided_tour(index, start, opts, seed=11)
        b = guided_tour(index, start, opts, seed=11)
        assert len(a.frames) == len(b.frames)
        np.testing.assert_array_equal(a.final.basis.matrix, b.final.basis.matrix)

    def test_threaded_matches_serial(self, rng):
        model = ReferenceModel.from_arrays(np.zeros(4), np.eye(4), level_c2=9.0)
        x = rng.standard_normal((6, 4)) * 3.0
        index = AnomalyIndex(x, OutlierSet(np.arange(6), OutlierRule.MANUAL), model)
        start = random_basis(4, rng)
        a = guided_tour(index, start, GuidedTourOptions(n_workers=1), seed=2)
        b = guided_tour(index, start, GuidedTourOptions(n_workers=4), seed=2)
        np.testing.assert_array_equal(a.final.basis.matrix, b.final.basis.matrix)

    def test_non_finite_index_raises(self, rng):
        with pytest.raises(IndexEvaluationError):
            guided_tour(lambda basis: float("nan"), random_basis(3, rng), seed=0)

    def test_options_validated(self):
        with pytest.raises(ValueError):
            GuidedTourOptions(optimizer="annealing")
        with pytest.raises(ValueError):
            GuidedTourOptions(cooling=1.0)

    def test_finds_group_offset_direction(self):
        u = offset_direction()
        found = 0
        for seed in range(10):
            demo = offset_demo(seed=seed)
            x = demo.dataset.values
            w = select_outliers(x, demo.model, RuleSpec(OutlierRule.OUTSIDE_ELLIPSOID))
            index = AnomalyIndex(x, w, demo.model)
            start = random_basis(6, np.random.default_rng([seed, 1]))
            final = guided_tour(index, start, seed=seed).final.basis
            if np.linalg.norm(final.matrix.T @ u) >= 0.95 and basis_mass(final, (3, 4)) >= 0.9:
                found += 1
        assert found >= 8


class TestTraceCsv:
    def test_header(self):
        assert trace_header(3) == ["frame_id", "t", "is_target", "index_value",
                                   "b1_1", "b1_2", "b2_1", "b2_2", "b3_1", "b3_2"]

    def test_written_trace_reads_back_exactly(self, tmp_path):
        path = tmp_path / "trace.csv"
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = TraceWriter(f, 5)
            trace = grand_tour(5, 2, 4, seed=8, frame_sink=writer)
        assert writer.count == len(trace.frames)
        back = read_trace_csv(str(path))
        assert len(back.frames) == len(trace.frames)
        for a, b in zip(trace.frames, back.frames):
            np.testing.assert_array_equal(a.basis.matrix, b.basis.matrix)
            assert (a.t, a.is_target, a.index_value) == (b.t, b.is_target, b.index_value)


def test_basis_mass():
    basis = ProjectionBasis(np.eye(4)[:, [1, 3]])
    assert basis_mass(basis, (1,)) == 1.0
    assert basis_mass(basis, (1, 3)) == 2.0
    assert basis_mass(basis, (0, 2)) == 0.0
