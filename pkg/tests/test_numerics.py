import math

import numpy as np
import pytest
from scipy.special import gammaincc

from src.helpers.errors import (
    DimensionMismatch,
    InvalidProbability,
    NotPositiveDefinite,
    NotSymmetric,
    RankDeficient,
)
from src.helpers.numerics import (
    SpdMatrix,
    chi2_cdf,
    chi2_quantile,
    cholesky,
    orthonormalize,
    sigma_to_probability,
    sigma_to_tail,
    solve_spd,
    sym_eigen_2x2,
)
from tests.conftest import random_spd


class TestOrthonormalize:
    def test_identity_columns_unchanged(self):
        a = np.eye(3)[:, :2]
        np.testing.assert_array_equal(orthonormalize(a), a)

    def test_scaling_removed(self):
        q = orthonormalize([[2.0, 0.0], [0.0, 3.0], [0.0, 0.0]])
        np.testing.assert_allclose(q, [[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]], atol=0.0)

    def test_random_matrix_spans_same_plane(self, rng):
        a = rng.standard_normal((6, 2))
        q = orthonormalize(a)
        assert np.max(np.abs(q.T @ q - np.eye(2))) < 1e-12

        g = a.T @ a
        det = g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0]
        g_inv = np.array([[g[1, 1], -g[0, 1]], [-g[1, 0], g[0, 0]]]) / det
        np.testing.assert_allclose(q @ q.T, a @ g_inv @ a.T, atol=1e-12)

    def test_idempotent(self, rng):
        q = orthonormalize(rng.standard_normal((5, 2)))
        np.testing.assert_allclose(orthonormalize(q), q, atol=1e-12)

    def test_rank_deficient(self):
        with pytest.raises(RankDeficient):
            orthonormalize([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])

    def test_more_columns_than_rows(self):
        with pytest.raises(RankDeficient):
            orthonormalize(np.ones((2, 3)))


class TestCholesky:
    def test_identity(self):
        np.testing.assert_array_equal(cholesky(np.eye(4)), np.eye(4))

    def test_two_by_two(self):
        l = cholesky([[4.0, 2.0], [2.0, 3.0]])
        np.testing.assert_allclose(l, [[2.0, 0.0], [1.0, math.sqrt(2.0)]], rtol=1e-12)
        np.testing.assert_allclose(l @ l.T, [[4.0, 2.0], [2.0, 3.0]], rtol=1e-12)

    def test_indefinite(self):
        with pytest.raises(NotPositiveDefinite):
            cholesky([[1.0, 2.0], [2.0, 1.0]])

    def test_not_symmetric(self):
        with pytest.raises(NotSymmetric):
            cholesky([[1.0, 0.5], [0.0, 1.0]])

    @pytest.mark.parametrize("p", [1, 3, 7, 10])
    def test_round_trip_from_factor(self, rng, p):
        l = np.tril(rng.standard_normal((p, p)))
        l[np.diag_indices(p)] = np.abs(l[np.diag_indices(p)]) + 0.5
        np.testing.assert_allclose(cholesky(l @ l.T), l, rtol=1e-8, atol=1e-10)


class TestSpdMatrix:
    def test_arrays_are_read_only(self):
        s = SpdMatrix.from_array(np.eye(2))
        with pytest.raises(ValueError):
            s.base[0, 0] = 5.0

    def test_log_det(self):
        s = SpdMatrix.from_array(np.diag([2.0, 3.0, 4.0]))
        assert s.log_det() == pytest.approx(math.log(24.0), rel=1e-14)


class TestSolveSpd:
    def test_identity(self, rng):
        b = rng.standard_normal((3, 2))
        np.testing.assert_allclose(solve_spd(SpdMatrix.from_array(np.eye(3)), b), b, rtol=1e-15)

    def test_diagonal(self):
        x = solve_spd(SpdMatrix.from_array(np.diag([4.0, 1.0])), np.array([2.0, 1.0]))
        np.testing.assert_allclose(x, [0.5, 1.0], rtol=1e-15)

    def test_known_solution(self, rng):
        s = random_spd(5, rng)
        x0 = rng.standard_normal((5, 3))
        np.testing.assert_allclose(solve_spd(SpdMatrix.from_array(s), s @ x0), x0, rtol=1e-8, atol=1e-10)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            solve_spd(SpdMatrix.from_array(np.eye(3)), np.ones(2))


class TestSymEigen2x2:
    def test_diagonal(self):
        values, vectors = sym_eigen_2x2(np.diag([4.0, 1.0]))
        np.testing.assert_array_equal(values, [4.0, 1.0])
        np.testing.assert_allclose(vectors, np.eye(2), atol=0.0)

    def test_off_diagonal(self):
        s = np.array([[2.0, 1.0], [1.0, 2.0]])
        values, vectors = sym_eigen_2x2(s)
        np.testing.assert_allclose(values, [3.0, 1.0], rtol=1e-14)
        np.testing.assert_allclose(vectors[0], [1 / math.sqrt(2), 1 / math.sqrt(2)], rtol=1e-14)
        for lam, v in zip(values, vectors):
            np.testing.assert_allclose(s @ v, lam * v, atol=1e-10)

    def test_tie_returns_coordinate_axes(self):
        values, vectors = sym_eigen_2x2(np.eye(2))
        np.testing.assert_array_equal(values, [1.0, 1.0])
        np.testing.assert_array_equal(vectors, np.eye(2))

    def test_reconstruction_and_sign_convention(self, rng):
        for _ in range(50):
            s = random_spd(2, rng) - 2.5 * np.eye(2)
            values, vectors = sym_eigen_2x2(s)
            assert values[0] >= values[1]
            np.testing.assert_allclose(vectors.T @ np.diag(values) @ vectors, s, atol=1e-10)
            for v in vectors:
                first = v[0] if v[0] != 0.0 else v[1]
                assert first > 0.0
                assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-14)


class TestChi2:
    def test_df2_closed_form(self):
        assert chi2_quantile(0.95, 2) == pytest.approx(-2.0 * math.log(0.05), abs=1e-9)
        assert chi2_quantile(0.95, 2) == pytest.approx(5.991464547, abs=1e-8)

    @pytest.mark.parametrize("prob", [0.01, 0.3, 0.5, 0.9, 0.999])
    def test_df2_matches_closed_form(self, prob):
        assert chi2_quantile(prob, 2) == pytest.approx(-2.0 * math.log1p(-prob), rel=1e-9)

    def test_five_sigma_sixteen_df(self):
        value = chi2_quantile(1.0 - 5.733e-7, 16)
        assert 59.0 <= value <= 62.0

    def test_tiny_probability_goes_to_zero(self):
        assert 0.0 < chi2_quantile(1e-15, 2) < 1e-12

    @pytest.mark.parametrize("df", [1, 2, 4, 16])
    @pytest.mark.parametrize("prob", [0.01, 0.5, 0.95, 0.999])
    def test_inverse_of_cdf(self, prob, df):
        assert chi2_cdf(chi2_quantile(prob, df), df) == pytest.approx(prob, abs=1e-9)

    @pytest.mark.parametrize("prob", [0.0, 1.0, -0.1, 1.5, float("nan")])
    def test_invalid_probability(self, prob):
        with pytest.raises(InvalidProbability):
            chi2_quantile(prob, 3)

    def test_sigma_to_probability(self):
        assert sigma_to_probability(1.0) == pytest.approx(0.6826894921, abs=1e-9)
        assert 1.0 - sigma_to_probability(5.0) == pytest.approx(5.733e-7, rel=1e-3)

    def test_sigma_tail_keeps_precision_past_eight_sigma(self):
        assert sigma_to_tail(1.0) == pytest.approx(1.0 - 0.6826894921, abs=1e-9)
        assert sigma_to_tail(9.0) == pytest.approx(2.2571768e-19, rel=1e-6)
        assert sigma_to_probability(9.0) == 1.0

    @pytest.mark.parametrize("z", [1.0, 5.0, 7.0, 9.0, 12.0])
    def test_one_df_upper_tail_quantile_is_z_squared(self, z):
        assert chi2_quantile(sigma_to_tail(z), 1, upper_tail=True) == pytest.approx(z * z, rel=1e-9)

    @pytest.mark.parametrize("df", [2, 16])
    @pytest.mark.parametrize("tail", [0.3, 0.01, 1e-7, 1e-20])
    def test_upper_tail_quantile_inverts_survival(self, tail, df):
        x = chi2_quantile(tail, df, upper_tail=True)
        assert gammaincc(0.5 * df, 0.5 * x) == pytest.approx(tail, rel=1e-9)

    def test_upper_tail_matches_lower(self):
        assert chi2_quantile(0.05, 3, upper_tail=True) == pytest.approx(chi2_quantile(0.95, 3), rel=1e-10)
        assert chi2_quantile(0.8, 3, upper_tail=True) == pytest.approx(chi2_quantile(0.2, 3), rel=1e-10)
