import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hapwec.core import MaskError, MaskedMatrix, mask_apply, svd, truncate_rank


def test_mask_apply_keeps_observed_entries():
    out = mask_apply([[1, 2], [3, 4]], [(0, 0), (1, 1)])
    np.testing.assert_array_equal(out.values, [[1, 0], [0, 4]])
    assert out.n_observed == 2
    assert out.omega == [(0, 0), (1, 1)]


def test_full_mask_is_identity():
    A = np.arange(6.0).reshape(2, 3)
    out = mask_apply(A, [(i, j) for i in range(2) for j in range(3)])
    np.testing.assert_array_equal(out.values, A)


def test_empty_mask_gives_zero_matrix():
    out = mask_apply(np.ones((2, 2)), [])
    assert out.n_observed == 0
    assert not out.values.any()


def test_out_of_range_index_named_in_error():
    with pytest.raises(MaskError, match=r"\(2, 0\)"):
        mask_apply(np.ones((2, 2)), [(0, 0), (2, 0)])


def test_masked_matrix_rejects_values_off_mask():
    with pytest.raises(ValueError):
        MaskedMatrix(np.ones((2, 2)), np.eye(2, dtype=bool))


def test_masked_matrix_is_read_only():
    m = mask_apply(np.ones((2, 2)), [(0, 0)])
    with pytest.raises(ValueError):
        m.values[0, 0] = 5


@given(
    arrays(np.float64, (4, 5), elements=st.floats(-10, 10)),
    arrays(bool, (4, 5)),
)
def test_mask_and_complement_sum_to_input(A, mask):
    a = mask_apply(A, mask).values
    b = mask_apply(A, ~mask).values
    np.testing.assert_array_equal(a + b, A)


def test_svd_of_diagonal():
    F = svd(np.diag([3.0, 1.0]))
    np.testing.assert_allclose(F.singular_values, [3, 1])
    np.testing.assert_allclose(np.abs(F.left_vectors), np.eye(2))
    np.testing.assert_allclose(np.abs(F.right_vectors), np.eye(2))


def test_svd_of_zero_matrix_is_empty():
    F = svd(np.zeros((3, 4)))
    assert F.rank == 0
    assert F.singular_values.size == 0
    np.testing.assert_array_equal(F.reconstruct(), np.zeros((3, 4)))


def test_svd_rejects_non_finite():
    with pytest.raises(ValueError):
        svd(np.array([[1.0, np.nan]]))


def test_svd_factor_invariants_random():
    A = np.random.default_rng(0).standard_normal((5, 7))
    F = svd(A)
    s = F.singular_values
    assert np.all(np.diff(s) <= 0) and np.all(s >= 0)
    np.testing.assert_allclose(F.left_vectors.T @ F.left_vectors, np.eye(F.rank), atol=1e-8)
    np.testing.assert_allclose(F.right_vectors.T @ F.right_vectors, np.eye(F.rank), atol=1e-8)
    assert np.linalg.norm(F.reconstruct() - A) / np.linalg.norm(A) < 1e-8


def test_svd_rank_counts_relative_threshold():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((6, 2)) @ rng.standard_normal((2, 8))
    assert svd(A).rank == 2


def test_truncate_at_true_rank_reproduces_input():
    rng = np.random.default_rng(2)
    A = rng.standard_normal((6, 2)) @ rng.standard_normal((2, 5))
    np.testing.assert_allclose(truncate_rank(svd(A), 2), A, atol=1e-8)


def test_truncate_diagonal():
    out = truncate_rank(svd(np.diag([3.0, 2.0, 1.0])), 2)
    np.testing.assert_allclose(out, np.diag([3.0, 2.0, 0.0]), atol=1e-12)


def test_truncation_error_is_singular_value_tail():
    A = np.random.default_rng(3).standard_normal((6, 6))
    F = svd(A)
    err = np.linalg.norm(truncate_rank(F, 2) - A)
    assert err == pytest.approx(np.sqrt(np.sum(F.singular_values[2:] ** 2)), rel=1e-10)
    assert np.linalg.matrix_rank(truncate_rank(F, 2)) == 2


def test_truncate_rejects_rank_zero():
    with pytest.raises(ValueError):
        truncate_rank(svd(np.eye(2)), 0)


@settings(max_examples=30)
@given(arrays(np.float64, (5, 4), elements=st.floats(-5, 5)))
def test_truncation_error_nonincreasing_in_rank(A):
    F = svd(A)
    errs = [np.linalg.norm(truncate_rank(F, r) - A) for r in range(1, 5)]
    assert all(b <= a + 1e-9 for a, b in zip(errs, errs[1:]))


@settings(max_examples=30)
@given(arrays(np.float64, (4, 6), elements=st.floats(-5, 5)))
def test_svd_reconstruct_idempotent(A):
    B = svd(A).reconstruct()
    C = svd(B).reconstruct()
    scale = max(np.linalg.norm(B), 1.0)
    assert np.linalg.norm(C - B) / scale < 1e-8
