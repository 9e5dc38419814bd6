import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from splitformer.grid import (
    DimensionError,
    as_grid,
    dumps_tensor,
    inner_product_y,
    loads_tensor,
    matmul,
    row_sum,
    softmax2,
    tensor_from_dict,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


class TestInnerProduct:
    def test_orthogonal(self):
        assert inner_product_y([1, 0], [0, 1]) == 0

    def test_hand_sum(self):
        assert inner_product_y([1, 2], [3, 4]) == 11

    @pytest.mark.parametrize("c", [0.0, -2.5, 7.0])
    def test_self_product(self, c):
        assert inner_product_y([c], [c]) == c * c

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            inner_product_y([1, 2], [1, 2, 3])

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 12).flatmap(lambda n: st.tuples(*(arrays(np.float64, n, elements=finite) for _ in range(3)))),
           finite, finite)
    def test_symmetric_bilinear(self, abc, s, t):
        a, b, c = abc
        assert inner_product_y(a, b) == inner_product_y(b, a)
        lhs = inner_product_y(s * a + t * c, b)
        rhs = s * inner_product_y(a, b) + t * inner_product_y(c, b)
        scale = 1 + np.sum(np.abs(s * a * b)) + np.sum(np.abs(t * c * b))
        assert abs(lhs - rhs) <= 1e-12 * scale


class TestSoftmax:
    def test_uniform(self):
        np.testing.assert_allclose(softmax2([[0.0, 0.0, 0.0]]), [[1 / 3, 1 / 3, 1 / 3]], rtol=0, atol=1e-15)

    def test_ln2(self):
        # exp(ln 2) = 2, so weights are 2/3 and 1/3
        np.testing.assert_allclose(softmax2([[math.log(2), 0.0]]), [[2 / 3, 1 / 3]], rtol=0, atol=1e-15)

    def test_large_equal_scores(self):
        assert np.array_equal(softmax2([[1000.0, 1000.0]]), [[0.5, 0.5]])

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            softmax2([[0.0, np.nan]])

    @settings(max_examples=200, deadline=None)
    @given(st.integers(1, 9).flatmap(lambda n: arrays(np.float64, (3, n), elements=finite)), finite)
    def test_rows_sum_to_one_and_shift_invariance(self, s, c):
        p = softmax2(s)
        assert np.all(p >= 0)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, rtol=0, atol=1e-12)
        np.testing.assert_allclose(softmax2(s + c), p, rtol=0, atol=1e-12)


class TestMatmul:
    def test_identity(self, rng):
        M = rng.standard_normal((2, 2))
        assert np.array_equal(matmul(np.eye(2), M), M)

    def test_hand_product(self):
        assert np.array_equal(matmul([[1, 2], [3, 4]], [[1], [1]]), [[3], [7]])

    def test_zero(self, rng):
        assert np.array_equal(matmul(np.zeros((3, 2)), rng.standard_normal((2, 4))), np.zeros((3, 4)))

    def test_mismatch(self):
        with pytest.raises(DimensionError):
            matmul(np.ones((2, 3)), np.ones((2, 3)))

    def test_matches_numpy(self, rng):
        a, b = rng.standard_normal((5, 7)), rng.standard_normal((7, 3))
        np.testing.assert_allclose(matmul(a, b), a @ b, rtol=0, atol=1e-13)

    def test_left_to_right_order(self, rng):
        a, b = rng.standard_normal((3, 6)), rng.standard_normal((6, 2))
        expected = np.empty((3, 2))
        for i in range(3):
            for j in range(2):
                s = 0.0
                for k in range(6):
                    s += a[i, k] * b[k, j]
                expected[i, j] = s
        assert np.array_equal(matmul(a, b), expected)

    def test_batched_equals_unbatched(self, rng):
        a, b = rng.standard_normal((4, 3, 5)), rng.standard_normal((5, 2))
        batched = matmul(a, b)
        for i in range(4):
            assert np.array_equal(batched[i], matmul(a[i], b))

    def test_associativity(self, rng):
        for _ in range(50):
            A, B, C = (rng.standard_normal((4, 4)) for _ in range(3))
            np.testing.assert_allclose(matmul(matmul(A, B), C), matmul(A, matmul(B, C)), rtol=0, atol=1e-10)

    def test_rerun_bit_identical(self, rng):
        a, b = rng.standard_normal((6, 6)), rng.standard_normal((6, 6))
        assert matmul(a, b).tobytes() == matmul(a, b).tobytes()


def test_row_sum_left_to_right():
    row = np.array([1e16, 1.0, -1e16])
    # left to right: (1e16 + 1) - 1e16 == 0 in float64
    assert row_sum(row) == 0.0


class TestTensorFormat:
    def test_round_trip(self, rng):
        a = rng.standard_normal((3, 4))
        assert np.array_equal(loads_tensor(dumps_tensor(a)), a)

    def test_row_major(self):
        a = tensor_from_dict({"shape": [2, 2], "data": [1, 2, 3, 4]})
        assert a[0, 1] == 2 and a[1, 0] == 3

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError, match="needs 6"):
            tensor_from_dict({"shape": [2, 3], "data": [1, 2, 3]})

    def test_missing_field(self):
        with pytest.raises(ValueError):
            tensor_from_dict({"data": [1]})


def test_as_grid_rejects_bad_values():
    with pytest.raises(DimensionError):
        as_grid([1.0, 2.0])
    with pytest.raises(ValueError):
        as_grid([[1.0, np.inf]])
    with pytest.raises(DimensionError):
        as_grid(np.zeros((0, 3)))
