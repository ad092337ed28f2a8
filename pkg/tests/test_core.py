import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nnsparse.core import (
    as_support,
    build_cache,
    check_dictionary,
    check_observation,
    complement,
    inf_inf_norm,
    subdictionary,
)
from nnsparse.errors import InvalidSupportError, RankDeficientError


def test_subdictionary_identity_selection():
    np.testing.assert_array_equal(subdictionary(np.eye(3), [0, 2]), np.eye(3)[:, [0, 2]])


def test_subdictionary_empty_support():
    assert subdictionary(np.eye(2), []).shape == (2, 0)


def test_subdictionary_keeps_columns_verbatim(rng):
    A = rng.standard_normal((5, 8))
    sub = subdictionary(A, [1, 4, 6])
    for k, j in enumerate([1, 4, 6]):
        assert np.array_equal(sub[:, k], A[:, j])


@pytest.mark.parametrize("bad", [[3], [-1], [1, 1], [0.5]])
def test_invalid_support(bad):
    with pytest.raises(InvalidSupportError):
        as_support(bad, 3)


def test_support_is_sorted():
    np.testing.assert_array_equal(as_support([2, 0], 3), [0, 2])


def test_complement():
    np.testing.assert_array_equal(complement([1, 3], 5), [0, 2, 4])


def test_dictionary_validation():
    with pytest.raises(ValueError):
        check_dictionary(np.array([[1.0, 0.0], [0.0, 0.0]]))
    with pytest.raises(ValueError):
        check_dictionary(np.array([[np.nan, 1.0]]))
    with pytest.raises(ValueError):
        check_observation(np.ones(3), 2)


def test_cache_identity():
    c = build_cache(np.eye(2), [0, 1])
    np.testing.assert_allclose(c.pseudoinverse, np.eye(2))
    np.testing.assert_allclose(c.gram_inverse, np.eye(2))
    assert c.rank == 2 and c.full_rank


def test_cache_orthonormal_pinv_is_transpose(rng):
    Q, _ = np.linalg.qr(rng.standard_normal((6, 3)))
    c = build_cache(Q, [0, 1, 2])
    np.testing.assert_allclose(c.pseudoinverse, Q.T, atol=1e-12)


def test_cache_duplicated_column():
    a = np.array([1.0, 2.0, 2.0]) / 3
    A = np.column_stack([a, a, [1.0, 0, 0]])
    c = build_cache(A, [0, 1])
    assert c.rank == 1 and c.rank_deficient
    assert c.gram_inverse is None
    # projector still usable
    assert np.linalg.norm(c.residual(a)) < 1e-12
    with pytest.raises(RankDeficientError):
        c.require_full_rank("test")


def test_cache_needs_nonempty_support():
    with pytest.raises(InvalidSupportError):
        build_cache(np.eye(2), [])


def test_cache_invariants(rng):
    A = rng.standard_normal((20, 10))
    S = [1, 4, 7]
    c = build_cache(A, S)
    assert np.max(np.abs(c.pseudoinverse @ A[:, S] - np.eye(3))) < 1e-10
    v, w = rng.standard_normal(20), rng.standard_normal(20)
    np.testing.assert_allclose(c.residual(c.residual(v)), c.residual(v), atol=1e-10)
    assert abs(w @ c.residual(v) - c.residual(w) @ v) < 1e-10
    for j in S:
        assert np.linalg.norm(c.residual(A[:, j])) < 1e-8 * np.linalg.norm(A[:, j])
    np.testing.assert_allclose(c.project(v) + c.residual(v), v, atol=1e-12)


def test_cache_is_immutable(rng):
    c = build_cache(rng.standard_normal((4, 3)), [0, 1])
    with pytest.raises(ValueError):
        c.pseudoinverse[0, 0] = 1.0


def test_inf_inf_norm():
    assert inf_inf_norm(np.eye(2)) == 1.0
    assert inf_inf_norm(np.array([[1, -2], [3, 0.5]])) == 3.5


@given(arrays(np.float64, (4, 4), elements=st.floats(-1e3, 1e3)))
def test_inf_inf_norm_matches_row_scan(m):
    expected = max(sum(abs(v) for v in row) for row in m.tolist())
    assert inf_inf_norm(m) == pytest.approx(expected, rel=1e-12, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5))
def test_projector_properties(seed, J):
    r = np.random.default_rng(seed)
    A = r.standard_normal((12, 6))
    S = np.sort(r.choice(6, size=J, replace=False))
    c = build_cache(A, S)
    v = r.standard_normal(12)
    pv = c.residual(v)
    np.testing.assert_allclose(c.residual(pv), pv, atol=1e-10)
    assert np.max(np.abs(A[:, S].T @ pv)) < 1e-10 * max(1.0, np.linalg.norm(v))
