import numpy as np
import pytest
from hypothesis import given, strategies as st

from secsi.jevd import JevdOptions, indirect_ls_cost, solve_jevd
from secsi.metrics import match_columns
from conftest import crandn

TIGHT = JevdOptions(tol=1e-30, max_sweeps=200)


def exact_problem(rng, d, K, complex_=False, cond_max=20.0):
    while True:
        T0 = crandn(rng, d, d) if complex_ else rng.standard_normal((d, d))
        if np.linalg.cond(T0) <= cond_max:
            break
    D = crandn(rng, K, d) if complex_ else rng.standard_normal((K, d))
    S = np.array([T0 @ np.diag(Dk) @ np.linalg.inv(T0) for Dk in D])
    return T0, D, S


def test_cost_examples(rng):
    assert indirect_ls_cost(np.eye(3), np.array([np.diag([1.0, 2.0, 3.0])])) == 0.0
    assert indirect_ls_cost(np.eye(2), np.array([[[0.0, 1.0], [0.0, 0.0]]])) == 1.0
    T0, _, S = exact_problem(rng, 4, 6)
    assert indirect_ls_cost(T0, S) <= 1e-20 * np.sum(np.abs(S) ** 2)
    with pytest.raises(np.linalg.LinAlgError):
        indirect_ls_cost(np.zeros((2, 2)), S[:, :2, :2])


def test_diagonal_slices():
    S = np.array([np.diag([1.0, 2.0, 3.0]), np.diag([4.0, -1.0, 0.5])])
    sol = solve_jevd(S)
    assert sol.residual == 0.0
    P = np.abs(sol.T)
    np.testing.assert_allclose(np.sort(P, axis=None)[-3:], 1.0)
    np.testing.assert_allclose(P.sum(0), 1.0)


@pytest.mark.parametrize("complex_", [False, True])
def test_exact_recovery(rng, complex_):
    T0, D, S = exact_problem(rng, 3, 5, complex_)
    sol = solve_jevd(S, TIGHT)
    assert sol.relative_residual <= 1e-18
    perm = match_columns(T0, sol.T)
    G = sol.T[:, perm]
    scale = np.sum(G.conj() * T0, axis=0) / np.sum(np.abs(G) ** 2, axis=0)
    err = np.linalg.norm(T0 - G * scale, axis=0) / np.linalg.norm(T0, axis=0)
    assert err.max() <= 1e-8
    np.testing.assert_allclose(sol.diagonals[:, perm], D, atol=1e-8)
    np.testing.assert_allclose(np.linalg.norm(sol.T, axis=0), 1.0)
    np.testing.assert_allclose(sol.D, np.array([np.diag(r) for r in sol.diagonals]))


def test_single_slice_is_eigendecomposition(rng):
    A = rng.standard_normal((4, 4))
    A = A + A.T
    sol = solve_jevd(A[None], TIGHT)
    np.testing.assert_allclose(np.sort(sol.diagonals[0].real), np.linalg.eigvalsh(A), atol=1e-10)


def test_solution_invariants(rng):
    T0, _, S = exact_problem(rng, 3, 6)
    S = S + 1e-3 * rng.standard_normal(S.shape)
    sol = solve_jevd(S)
    M = np.linalg.solve(sol.T, S @ sol.T)
    np.testing.assert_allclose(sol.diagonals, np.diagonal(M, axis1=1, axis2=2), atol=1e-12)
    assert abs(sol.residual - indirect_ls_cost(sol.T, S)) <= 1e-12 * max(sol.residual, 1e-300) + 1e-20
    assert all(b <= a for a, b in zip(sol.history, sol.history[1:]))
    assert sol.status in ("converged", "stalled", "max_sweeps")


def test_deterministic(rng):
    _, _, S = exact_problem(rng, 4, 7)
    S = S + 1e-4 * rng.standard_normal(S.shape)
    a, b = solve_jevd(S), solve_jevd(S)
    assert np.array_equal(a.T, b.T) and a.residual == b.residual


def test_slice_order_and_scaling(rng):
    _, _, S = exact_problem(rng, 3, 8)
    S = S + 1e-4 * rng.standard_normal(S.shape)
    base = solve_jevd(S, TIGHT)
    perm = rng.permutation(len(S))
    other = solve_jevd(S[perm], TIGHT)
    assert abs(other.residual - base.residual) <= 1e-8 * base.residual
    scaled = solve_jevd(2.5 * S, TIGHT)
    assert abs(scaled.residual - 2.5**2 * base.residual) <= 1e-8 * scaled.residual
    for sol in (other, scaled):
        G = sol.T[:, match_columns(base.T, sol.T)]
        corr = np.abs(np.sum(G.conj() * base.T, axis=0))
        np.testing.assert_allclose(corr, 1.0, atol=1e-6)


@given(st.integers(2, 5), st.integers(1, 70), st.integers(0, 2**32 - 1))
def test_exact_problems_property(d, K, seed):
    r = np.random.default_rng(seed)
    if K == 1:
        K = 2
    _, _, S = exact_problem(r, d, K)
    sol = solve_jevd(S, TIGHT)
    assert sol.relative_residual <= 1e-16
    assert all(b <= a for a, b in zip(sol.history, sol.history[1:]))


def test_input_validation():
    with pytest.raises(ValueError):
        solve_jevd(np.zeros((2, 3, 4)))
