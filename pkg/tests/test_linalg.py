import numpy as np
import pytest

from slq.errors import InvalidInputError, NoSolutionError
from slq.linalg import (
    expm,
    fro,
    is_pd,
    is_psd,
    pinv,
    range_contained,
    solve_matrix_eq,
    symmetrize,
)


def penrose_gap(M, Md):
    """Worst violation of the four Penrose identities."""
    return max(
        fro(M @ Md @ M - M),
        fro(Md @ M @ Md - Md),
        fro((M @ Md).T - M @ Md),
        fro((Md @ M).T - Md @ M),
    )


def test_pinv_identity():
    assert np.allclose(pinv(np.eye(3)), np.eye(3))


def test_pinv_zero():
    assert np.array_equal(pinv(np.zeros((2, 2))), np.zeros((2, 2)))


def test_pinv_rank_deficient_diagonal():
    M = np.diag([2.0, 0.0])
    Md = pinv(M)
    assert np.allclose(Md, np.diag([0.5, 0.0]))
    assert penrose_gap(M, Md) <= 1e-10 * (1.0 + fro(M))


def test_pinv_rejects_nonfinite():
    with pytest.raises(InvalidInputError):
        pinv(np.array([[1.0, np.nan], [0.0, 1.0]]))
    with pytest.raises(InvalidInputError):
        pinv(np.eye(2), rel_tol=2.0)


def test_pinv_penrose_random(rng):
    for _ in range(60):
        rows = rng.integers(1, 7)
        cols = rng.integers(1, 7)
        M = rng.uniform(-2, 2, (rows, cols))
        if rng.uniform() < 0.5:
            # force rank deficiency through the SVD
            U, s, Vt = np.linalg.svd(M, full_matrices=False)
            s[rng.integers(0, s.size)] = 0.0
            M = U @ np.diag(s) @ Vt
        gap = penrose_gap(M, pinv(M))
        assert gap <= 1e-10 * (1.0 + fro(M)) ** 2


def test_pinv_symmetric_properties(rng):
    for _ in range(30):
        n = rng.integers(1, 6)
        M = symmetrize(rng.uniform(-2, 2, (n, n)))
        Md = pinv(M)
        assert np.array_equal(Md, Md.T)
        assert fro(M @ Md - Md @ M) <= 1e-10 * (1.0 + fro(M)) ** 2


def test_pinv_psd_maps_to_psd(rng):
    for _ in range(20):
        n = rng.integers(1, 6)
        G = rng.uniform(-1, 1, (n, n))
        M = G @ G.T
        assert is_psd(pinv(M))


def test_range_contained_identity():
    assert range_contained(np.eye(2), np.eye(2))


def test_range_contained_orthogonal():
    assert not range_contained(np.array([[0.0], [1.0]]), np.diag([1.0, 0.0]))


def test_range_contained_solvable_case():
    # N x = L has the explicit solution x = (3, anything)'
    N = np.diag([1.0, 0.0])
    L = np.array([[3.0], [0.0]])
    assert range_contained(L, N)
    X = solve_matrix_eq(N, L)
    assert np.allclose(N @ X, L)


def test_range_contained_shape_error():
    with pytest.raises(InvalidInputError):
        range_contained(np.eye(3), np.eye(2))


def test_solve_matrix_eq_invertible():
    L = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.allclose(solve_matrix_eq(np.eye(2), L, np.zeros((2, 2))), L)


def test_solve_matrix_eq_degenerate():
    Y = np.array([[7.0], [5.0]])
    X = solve_matrix_eq(np.zeros((2, 2)), np.zeros((2, 1)), Y)
    assert np.allclose(X, Y)


def test_solve_matrix_eq_free_component():
    N = np.diag([2.0, 0.0])
    L = np.array([[4.0], [0.0]])
    X = solve_matrix_eq(N, L, np.array([[7.0], [5.0]]))
    assert np.allclose(X, np.array([[2.0], [5.0]]))
    assert fro(N @ X - L) <= 1e-10 * (1.0 + fro(L))


def test_solve_matrix_eq_no_solution():
    with pytest.raises(NoSolutionError):
        solve_matrix_eq(np.diag([1.0, 0.0]), np.array([[0.0], [1.0]]))


def test_symmetric_solution_quadratic_identity(rng):
    # For symmetric N with N X = L: X'N X = L'N^+ L.
    for _ in range(20):
        n = rng.integers(1, 6)
        N = symmetrize(rng.uniform(-2, 2, (n, n)))
        X0 = rng.uniform(-2, 2, (n, 2))
        L = N @ X0
        X = solve_matrix_eq(N, L, rng.uniform(-1, 1, (n, 2)))
        lhs = X.T @ N @ X
        rhs = L.T @ pinv(N) @ L
        assert fro(lhs - rhs) <= 1e-8 * (1.0 + fro(L)) ** 2


def test_psd_pd_basics():
    assert is_psd(np.zeros((3, 3)))
    assert is_pd(np.eye(3))
    assert not is_pd(np.diag([1.0, -1e-3]))
    assert not is_psd(np.diag([1.0, -1e-3]))


def test_expm_zero_and_scalar():
    assert np.allclose(expm(np.zeros((3, 3)), 2.0), np.eye(3))
    assert np.allclose(expm(np.array([[0.7]]), 1.3), np.exp([[0.7 * 1.3]]))


def test_expm_diagonal():
    E = expm(np.diag([1.0, 2.0]), 1.0)
    assert np.allclose(E, np.diag([np.e, np.e ** 2]), rtol=1e-12)


def test_expm_semigroup(rng):
    for _ in range(10):
        n = rng.integers(1, 5)
        M = rng.uniform(-1, 1, (n, n))
        s, t = rng.uniform(0.1, 2.0, 2)
        if fro(M) * (s + t) > 10:
            continue
        assert fro(expm(M, s) @ expm(M, t) - expm(M, s + t)) <= 1e-9
