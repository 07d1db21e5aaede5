import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gibbscomp.matrices import mat_mul, neumann_sum, norm_1, norm_inf, spectral_radius, weighted_norm_1


def loop_mul(A, B):
    n = A.shape[0]
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            s = 0.0
            for k in range(n):
                a, b = A[i, k], B[k, j]
                s += 0.0 if (a == 0 or b == 0) else a * b
            out[i, j] = s
    return out


def test_mat_mul_convention():
    assert mat_mul([[np.inf]], [[0.0]])[0, 0] == 0.0
    A = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(mat_mul(A, np.eye(2)), A)


def test_mat_mul_with_infinity_matches_loop(rng):
    for _ in range(20):
        A = rng.uniform(0, 1, (3, 3)) * (rng.uniform(size=(3, 3)) > 0.3)
        B = rng.uniform(0, 1, (3, 3)) * (rng.uniform(size=(3, 3)) > 0.3)
        A[rng.integers(3), rng.integers(3)] = np.inf
        np.testing.assert_allclose(mat_mul(A, B), loop_mul(A, B), rtol=1e-14, atol=0)


def test_norms():
    assert norm_inf(np.zeros((3, 3))) == 0
    A = np.array([[0, 2], [3, 0.0]])
    assert norm_inf(A) == 3 and norm_1(A) == 3
    assert norm_inf([[0, np.inf], [0, 0]]) == np.inf
    assert norm_1([[0, np.inf], [0, 0]]) == np.inf


def test_weighted_norm():
    m = np.abs(np.subtract.outer(np.arange(3), np.arange(3))).astype(float)
    A = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0.0]]) / 4
    # column 1: two neighbours at distance 1, weight e^{log 2} = 2
    assert weighted_norm_1(A, m, np.log(2)) == pytest.approx(1.0)
    rng = np.random.default_rng(1)
    B = rng.uniform(size=(3, 3))
    assert weighted_norm_1(B, m, 0.0) == pytest.approx(norm_1(B))
    D = np.diag([0.3, 0.7, 0.1])
    assert weighted_norm_1(D, m, 5.0) == pytest.approx(0.7)


def test_neumann_examples():
    res = neumann_sum(np.zeros((2, 2)))
    assert res.converged and np.array_equal(res.sum, np.eye(2))
    res = neumann_sum([[0.5]])
    assert res.converged and res.sum[0, 0] == pytest.approx(2.0, abs=1e-11)
    N = np.array([[0, 3.0], [0, 0]])
    res = neumann_sum(N)
    assert res.converged and np.array_equal(res.sum, np.eye(2) + N)
    res = neumann_sum([[1.0]])
    assert not res.converged and res.terms_used == 10_000
    res = neumann_sum([[np.inf]])
    assert not res.converged


@settings(max_examples=40)
@given(st.integers(0, 2**32 - 1))
def test_submultiplicative_and_monotone(seed):
    rng = np.random.default_rng(seed)
    A = rng.uniform(0, 1, (4, 4))
    B = rng.uniform(0, 1, (4, 4))
    m = np.abs(np.subtract.outer(np.arange(4), np.arange(4))).astype(float)
    for norm in (norm_inf, norm_1, lambda X: weighted_norm_1(X, m, 0.3)):
        assert norm(A @ B) <= norm(A) * norm(B) + 1e-12
    small = A * 0.2 / norm_inf(A)
    smaller = small * rng.uniform(0, 1, (4, 4))
    assert np.all(neumann_sum(smaller).sum <= neumann_sum(small).sum + 1e-12)


def test_spectral_radius_diagnostic():
    A = np.array([[0.5, 0.1], [0.2, 0.3]])
    assert spectral_radius(A) == pytest.approx(max(abs(np.linalg.eigvals(A))), rel=1e-8)
