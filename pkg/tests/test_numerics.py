import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iterdec.errors import NumericError, ParameterError, ShapeError
from iterdec.numerics import (
    SeededRng,
    finite_diff_grad,
    hadamard,
    lane_matmul,
    matmul,
    sigmoid_map,
    tanh_map,
    uniform_init,
)


def triple_loop_matmul(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            acc = 0.0
            for k in range(a.shape[1]):
                acc += a[i, k] * b[k, j]
            out[i, j] = acc
    return out


class TestMatmul:
    def test_identity(self):
        m = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal(matmul(np.eye(2), m), m)

    def test_projection(self):
        p = np.array([[1.0, 0.0], [0.0, 0.0]])
        v = np.array([[5.0], [7.0]])
        assert np.array_equal(matmul(p, v), [[5.0], [0.0]])

    def test_against_triple_loop(self):
        rng = SeededRng(11)
        a = rng.uniform(-2.0, 2.0, (3, 4))
        b = rng.uniform(-2.0, 2.0, (4, 2))
        np.testing.assert_allclose(matmul(a, b), triple_loop_matmul(a, b), rtol=1e-13)

    def test_shape_mismatch_reports_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 2\)"):
            matmul(np.zeros((2, 3)), np.zeros((2, 2)))

    def test_lane_matmul_matches_column_extraction(self):
        rng = SeededRng(12)
        a = rng.uniform(-1.0, 1.0, (16, 64))
        b = rng.uniform(-1.0, 1.0, (64, 5))
        full = lane_matmul(a, b)
        for j in range(5):
            assert np.array_equal(full[:, [j]], lane_matmul(a, b[:, [j]]))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_associativity(self, seed):
        rng = SeededRng(seed)
        a = rng.uniform(-1.0, 1.0, (3, 4))
        b = rng.uniform(-1.0, 1.0, (4, 5))
        c = rng.uniform(-1.0, 1.0, (5, 2))
        left = matmul(matmul(a, b), c)
        right = matmul(a, matmul(b, c))
        np.testing.assert_allclose(left, right, rtol=1e-9)


class TestHadamard:
    def test_ones_identity(self):
        a = np.array([[1.5, -2.0], [0.25, 3.0]])
        assert np.array_equal(hadamard(a, np.ones_like(a)), a)

    def test_zeros_annihilate(self):
        a = np.array([[1.5, -2.0]])
        assert np.array_equal(hadamard(a, np.zeros_like(a)), np.zeros_like(a))

    def test_direct_definition(self):
        assert np.array_equal(hadamard(np.array([[2.0, 3.0]]), np.array([[4.0, 5.0]])), [[8.0, 15.0]])

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            hadamard(np.zeros((1, 2)), np.zeros((2, 1)))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_commutativity(self, seed):
        rng = SeededRng(seed)
        a = rng.uniform(-3.0, 3.0, (4, 3))
        b = rng.uniform(-3.0, 3.0, (4, 3))
        assert np.array_equal(hadamard(a, b), hadamard(b, a))


class TestActivations:
    def test_symmetry_points(self):
        assert tanh_map(np.zeros((1, 1)))[0, 0] == 0.0
        assert sigmoid_map(np.zeros((1, 1)))[0, 0] == 0.5

    def test_tanh_odd_symmetry(self):
        x = SeededRng(3).uniform(-5.0, 5.0, (4, 4))
        assert np.array_equal(tanh_map(x), -tanh_map(-x))

    def test_tanh_saturation(self):
        assert abs(tanh_map(np.array([[20.0]]))[0, 0] - 1.0) < 1e-12

    def test_no_overflow_at_extremes(self):
        x = np.array([[-1e4, 1e4]])
        assert np.isfinite(tanh_map(x)).all()
        assert np.isfinite(sigmoid_map(x)).all()

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-15.0, 15.0))
    def test_codomain_bounds(self, v):
        # strict bounds hold over the non-saturating float range
        x = np.array([[v]])
        assert -1.0 < tanh_map(x)[0, 0] < 1.0
        assert 0.0 < sigmoid_map(x)[0, 0] < 1.0


class TestUniformInit:
    def test_range_containment(self):
        m = uniform_init(50, 50, -0.054, 0.054, SeededRng(5))
        assert (m >= -0.054).all() and (m < 0.054).all()

    def test_determinism(self):
        a = uniform_init(8, 8, -1.0, 1.0, SeededRng(7))
        b = uniform_init(8, 8, -1.0, 1.0, SeededRng(7))
        assert np.array_equal(a, b)

    def test_sample_mean_within_three_sigma(self):
        n = 100_000
        lo, hi = -0.054, 0.054
        draws = uniform_init(n, 1, lo, hi, SeededRng(99))
        sigma_mean = (hi - lo) / math.sqrt(12.0 * n)
        assert abs(draws.mean()) < 3.0 * sigma_mean

    def test_bad_range(self):
        with pytest.raises(ParameterError):
            uniform_init(2, 2, 1.0, 1.0, SeededRng(1))


class TestFiniteDiff:
    def test_sum_of_squares(self):
        grad = finite_diff_grad(lambda m: float((m**2).sum()), np.array([[1.0, 2.0]]))
        np.testing.assert_allclose(grad, [[2.0, 4.0]], atol=1e-6)

    def test_constant_function(self):
        grad = finite_diff_grad(lambda m: 3.25, np.array([[1.0], [2.0]]))
        assert np.array_equal(grad, np.zeros((2, 1)))

    def test_tanh_derivative(self):
        x = SeededRng(21).uniform(-2.0, 2.0, (3, 3))
        grad = finite_diff_grad(lambda m: float(np.tanh(m).sum()), x.copy())
        np.testing.assert_allclose(grad, 1.0 - np.tanh(x) ** 2, atol=1e-6)

    def test_quadratic_form(self):
        rng = SeededRng(31)
        a = rng.uniform(-1.0, 1.0, (4, 4))
        x = rng.uniform(-1.0, 1.0, (4, 1))
        grad = finite_diff_grad(lambda m: float(m.T @ a @ m), x.copy())
        np.testing.assert_allclose(grad, (a + a.T) @ x, atol=1e-5)

    def test_non_finite_value(self):
        with pytest.raises(NumericError):
            finite_diff_grad(lambda m: float("nan"), np.array([[1.0]]))


class TestSeededRng:
    def test_identical_seed_identical_stream(self):
        a = SeededRng(123).uniform(0.0, 1.0, (4, 4))
        b = SeededRng(123).uniform(0.0, 1.0, (4, 4))
        assert np.array_equal(a, b)

    def test_substreams_differ_and_are_stable(self):
        root = SeededRng(123)
        s1 = root.substream("shuffle").uniform(0.0, 1.0, (8,))
        s2 = root.substream("init").uniform(0.0, 1.0, (8,))
        s1_again = SeededRng(123).substream("shuffle").uniform(0.0, 1.0, (8,))
        assert not np.array_equal(s1, s2)
        assert np.array_equal(s1, s1_again)

    def test_substream_consumption_is_independent(self):
        root = SeededRng(9)
        a = root.substream("a")
        a.uniform(0.0, 1.0, (100,))
        fresh = SeededRng(9).substream("b").uniform(0.0, 1.0, (4,))
        used = root.substream("b").uniform(0.0, 1.0, (4,))
        assert np.array_equal(fresh, used)
