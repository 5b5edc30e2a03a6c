import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from focal_infonce.core_math import (
    cosine,
    log_sum_exp,
    normalize_rows,
    similarity_matrix,
)
from focal_infonce.errors import DegenerateInputError, DimensionError, DomainError

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def nonzero_vectors(d):
    return arrays(np.float64, d, elements=finite).filter(lambda v: np.linalg.norm(v) > 1e-3)


class TestCosine:
    def test_identical(self):
        assert cosine([1, 0], [1, 0]) == 1.0

    def test_orthogonal(self):
        assert cosine([1, 0], [0, 1]) == 0.0

    def test_hand_value(self):
        # (3*4 + 4*3) / (5 * 5)
        assert cosine([3, 4], [4, 3]) == pytest.approx(24 / 25, abs=1e-15)

    def test_zero_norm(self):
        with pytest.raises(DegenerateInputError):
            cosine([0, 0], [1, 0])

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            cosine([1, 0], [1, 0, 0])

    def test_non_finite(self):
        with pytest.raises(DegenerateInputError):
            cosine([np.nan, 1], [1, 0])

    def test_clamped_to_unit_interval(self):
        v = np.full(7, 0.1)
        assert cosine(v, v) <= 1.0
        assert cosine(v, -v) >= -1.0

    @given(st.integers(1, 12).flatmap(lambda d: st.tuples(nonzero_vectors(d), nonzero_vectors(d))))
    def test_symmetric(self, pair):
        u, v = pair
        assert abs(cosine(u, v) - cosine(v, u)) <= 1e-12

    @given(st.integers(1, 12).flatmap(lambda d: st.tuples(nonzero_vectors(d), nonzero_vectors(d))),
           st.sampled_from([1e-3, 1.0, 1e3]))
    def test_scale_invariant(self, pair, alpha):
        u, v = pair
        assert abs(cosine(alpha * u, v) - cosine(u, v)) <= 1e-9


class TestNormalizeRows:
    def test_simple_rows(self):
        out = normalize_rows([[2.0, 0.0], [1.0, 1.0]])
        np.testing.assert_allclose(out, [[1, 0], [1 / math.sqrt(2), 1 / math.sqrt(2)]], atol=1e-15)

    def test_zero_row_is_named(self):
        with pytest.raises(DegenerateInputError, match="row 1"):
            normalize_rows([[1.0, 0.0], [0.0, 0.0]])

    def test_rejects_nan(self):
        with pytest.raises(DegenerateInputError):
            normalize_rows([[np.inf, 1.0]])

    def test_rejects_empty(self):
        with pytest.raises(DimensionError):
            normalize_rows(np.zeros((0, 3)))

    @given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=finite)
           .filter(lambda x: np.all(np.linalg.norm(x, axis=1) > 1e-3)))
    def test_unit_norms(self, x):
        np.testing.assert_allclose(np.linalg.norm(normalize_rows(x), axis=1), 1.0, atol=1e-9)


class TestSimilarityMatrix:
    def test_identity_rows(self):
        np.testing.assert_array_equal(similarity_matrix(np.eye(2), np.eye(2)), np.eye(2))

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            similarity_matrix(np.ones((2, 3)), np.ones((3, 3)))

    def test_matches_per_entry_cosine(self, rng):
        a = rng.standard_normal((4, 8))
        b = rng.standard_normal((4, 8))
        s = similarity_matrix(a, b)
        expected = np.array([[cosine(a[i], b[j]) for j in range(4)] for i in range(4)])
        np.testing.assert_allclose(s, expected, rtol=0, atol=1e-12)

    def test_entries_within_unit_interval(self, rng):
        a = rng.standard_normal((50, 3))
        s = similarity_matrix(a, a)
        assert s.max() <= 1.0 and s.min() >= -1.0

    @given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=finite)
           .filter(lambda x: np.all(np.linalg.norm(x, axis=1) > 1e-3)))
    def test_self_similarity_has_unit_diagonal(self, x):
        s = similarity_matrix(normalize_rows(x), normalize_rows(x))
        np.testing.assert_allclose(np.diagonal(s), 1.0, atol=1e-9)


class TestLogSumExp:
    def test_single(self):
        assert log_sum_exp([0.0]) == 0.0

    def test_pair(self):
        assert log_sum_exp([3.5, 3.5]) == pytest.approx(3.5 + math.log(2), abs=1e-15)

    def test_large_values_stay_finite(self):
        assert log_sum_exp([1000.0, 1000.0]) == pytest.approx(1000 + math.log(2), rel=1e-15)

    def test_very_negative(self):
        assert log_sum_exp([-700.0, -700.0]) == pytest.approx(-700 + math.log(2), rel=1e-15)

    def test_empty(self):
        with pytest.raises(DomainError):
            log_sum_exp([])

    def test_axis_matches_rowwise(self, rng):
        x = rng.normal(scale=50, size=(5, 7))
        np.testing.assert_allclose(log_sum_exp(x, axis=1), [log_sum_exp(r) for r in x], rtol=1e-15)

    def test_matches_math_fsum_oracle(self, rng):
        x = rng.normal(size=20)
        assert log_sum_exp(x) == pytest.approx(math.log(math.fsum(math.exp(v) for v in x)), rel=1e-14)

    @given(st.lists(st.floats(-700, 700), min_size=1, max_size=50))
    def test_bounds(self, xs):
        value = log_sum_exp(xs)
        assert max(xs) <= value <= max(xs) + math.log(len(xs))
