import numpy as np
import pytest
from hypothesis import given, strategies as st

from secsi.branches import ALL_BRANCHES, BranchId, reorder_tensor
from secsi.perturb import (
    NoiseModel, analyze_all, analyze_branch, balanced_columns, build_l_chain, plugin_analysis,
    prepare_inputs, rmsfe_closed_form, optimal_column_scaling,
)
from secsi.branches import run_all
from secsi.selection import argmin_branch
from secsi.subspace import truncated_hosvd
from secsi.tensor_ops import cp_construct, kron, unfold, vec
from conftest import crandn
from ladder import Stages, fitted_slope, random_problem, residual_ladder

EPS = [1e-2 / 2**i for i in range(7)]


@pytest.fixture(scope="module")
def problem():
    rng = np.random.default_rng(11)
    return random_problem(rng, (4, 5, 6), 3, True)


def test_l0_structure(problem):
    F, X0, _ = problem
    inp = prepare_inputs(X0, 3, BranchId(3, "rhs"), F)
    ch = build_l_chain(inp)
    U1, U2, U3 = (s.U_s for s in inp.subspaces)
    np.testing.assert_allclose(ch.L0, kron(U2.conj().T, U3.conj().T, U1.conj().T), atol=1e-14)


def test_chain_shapes(problem):
    F, X0, _ = problem
    M = X0.size
    for b in ALL_BRANCHES:
        inp = prepare_inputs(X0, 3, b, F)
        ch = build_l_chain(inp)
        M1, M2, M3 = inp.dims
        d = 3
        mats = [ch.L0, ch.L1, ch.L4, ch.L5, ch.L6, ch.L7, *ch.L_F, *ch.L2k, *ch.L3k, *ch.L4k]
        assert all(L.shape[1] == M for L in mats)
        assert ch.L0.shape[0] == d**3 and ch.L1.shape[0] == d * d * M3
        assert len(ch.L2k) == len(ch.L3k) == M3
        assert ch.L3_stacked.shape == (M3 * d * d, M)
        assert ch.L4.shape[0] == d * d and ch.L5.shape[0] == M3 * d
        assert [L.shape[0] for L in ch.L_F] == [M1 * d, M2 * d, M3 * d]


def test_rank_one_transform_has_no_perturbation(rng):
    Q = [np.linalg.qr(rng.standard_normal((m, 1)))[0] for m in (3, 4, 5)]
    X0 = cp_construct(*Q)
    ch = build_l_chain(prepare_inputs(X0, 1, BranchId(3, "rhs"), Q))
    assert np.max(np.abs(ch.L4)) <= 1e-14


def test_closed_form_basics(rng):
    L, F = crandn(rng, 6, 10), crandn(rng, 3, 2)
    assert rmsfe_closed_form(np.zeros((6, 10)), 1.0, F) == 0.0
    s2 = 0.37
    np.testing.assert_allclose(rmsfe_closed_form(L, s2 * np.eye(10), F),
                               s2 * np.linalg.norm(L) ** 2 / np.linalg.norm(F) ** 2, rtol=1e-14)
    np.testing.assert_allclose(rmsfe_closed_form(L, NoiseModel.white(s2), F), rmsfe_closed_form(L, s2, F))
    A = crandn(rng, 10, 10)
    R = A @ A.conj().T
    assert rmsfe_closed_form(L, 3.0 * R, F) == pytest.approx(3.0 * rmsfe_closed_form(L, R, F), rel=1e-14)


def test_noise_model_validation(rng):
    with pytest.raises(ValueError):
        NoiseModel.white(0.0)
    with pytest.raises(ValueError):
        NoiseModel.from_covariance(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        NoiseModel.from_covariance(np.diag([1.0, -1.0]))
    with pytest.raises(ValueError):
        NoiseModel.from_covariance(np.eye(3)).check_size(4)
    nm = NoiseModel.from_covariance(np.eye(2), C=np.zeros((2, 2)))
    assert not nm.is_white and nm.C is not None


def test_dense_white_equals_fast_path(problem):
    F, X0, _ = problem
    a = analyze_all(X0, 3, F, NoiseModel.white(0.5))
    b = analyze_all(X0, 3, F, NoiseModel.from_covariance(0.5 * np.eye(X0.size)))
    for br in ALL_BRANCHES:
        np.testing.assert_allclose(a[br], b[br], rtol=1e-10)


def test_colored_noise_reordering(problem):
    # rank-one covariance n n^H: prediction equals the squared first-order error along N
    F, X0, N = problem
    R = np.outer(vec(unfold(N, 1)), vec(unfold(N, 1)).conj())
    pred = analyze_all(X0, 3, F, NoiseModel.from_covariance(R))
    for b in ALL_BRANCHES:
        inp = prepare_inputs(X0, 3, b, F)
        ch = build_l_chain(inp)
        n_b = vec(unfold(reorder_tensor(N, b), 1))
        for slot, (L, Fs) in enumerate(zip(ch.L_F, inp.factors)):
            expected = np.linalg.norm(L @ n_b) ** 2 / np.linalg.norm(Fs) ** 2
            assert pred[b][b.slot_to_original[slot] - 1] == pytest.approx(expected, rel=1e-9)


def test_white_noise_reordering_path_invariance(problem):
    F, X0, _ = problem
    inp = prepare_inputs(X0, 3, BranchId(3, "rhs"), F)
    white = analyze_branch(inp, NoiseModel.white(1.0))
    dense = analyze_branch(inp, NoiseModel.from_covariance(np.eye(X0.size)))
    np.testing.assert_allclose(white, dense, rtol=1e-12)


def test_three_mode_mapping_is_identity(problem):
    F, X0, _ = problem
    inp = prepare_inputs(X0, 3, BranchId(3, "lhs"), F)
    ch = build_l_chain(inp)
    out = analyze_branch(inp, NoiseModel.white(1.0), ch)
    for r in range(3):
        assert out[r] == pytest.approx(rmsfe_closed_form(ch.L_F[r], 1.0, F[r]), rel=1e-14)


@given(st.floats(1e-6, 1e6))
def test_homogeneity_in_noise_scale(alpha):
    rng = np.random.default_rng(5)
    F, X0, _ = random_problem(rng, (3, 5, 6), 3)
    base = analyze_all(X0, 3, F)
    scaled = analyze_all(X0, 3, F, NoiseModel.white(alpha))
    for b in ALL_BRANCHES:
        np.testing.assert_allclose(scaled[b], np.array(base[b]) * alpha, rtol=1e-12)
    for r in range(3):
        assert argmin_branch(base, r) == argmin_branch(scaled, r)


def test_expanded_factor_shared_by_both_sides(problem):
    F, X0, _ = problem
    pred = analyze_all(X0, 3, F)
    for m in (1, 2, 3):
        a, b = pred[BranchId(m, "rhs")], pred[BranchId(m, "lhs")]
        assert a[m - 1] == pytest.approx(b[m - 1], rel=1e-10)


def test_optimal_scaling_examples(rng):
    Z = crandn(rng, 5, 3)
    P = np.diag(rng.uniform(0.5, 2, 3) * np.exp(1j * rng.uniform(0, 6, 3)))
    np.testing.assert_allclose(optimal_column_scaling(Z, Z @ P), np.linalg.inv(P), atol=1e-13)
    p = optimal_column_scaling(np.array([[2.0]]), np.array([[2.2]]))[0, 0]
    assert p == pytest.approx(1 / 1.1, rel=1e-14)
    grid = np.linspace(0.8, 1.0, 20001)
    assert abs(grid[np.argmin(np.abs(2 - 2.2 * grid))] - p) <= 1e-5
    with pytest.raises(ValueError):
        optimal_column_scaling(np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([[0.0, 0.0], [1.0, 1.0]]))


def test_optimal_scaling_residual_law(rng):
    Z, dZ = crandn(rng, 6, 3), crandn(rng, 6, 3)
    K_inv = np.diag(1 / np.sum(np.abs(Z) ** 2, axis=0))
    res, ls_gap = [], []
    for eps in EPS:
        Zh = Z + eps * dZ
        P = optimal_column_scaling(Z, Zh)
        lin = Z @ np.diag(np.diag(Z.conj().T @ (eps * dZ))) @ K_inv - eps * dZ
        res.append(np.linalg.norm(Z - Zh @ P - lin))
        ls = np.sum(Zh.conj() * Z, axis=0) / np.sum(np.abs(Zh) ** 2, axis=0)
        ls_gap.append(np.linalg.norm(np.diag(P) - ls))
    assert fitted_slope(EPS, res) >= 1.9
    assert fitted_slope(EPS, ls_gap) >= 1.9


def test_balanced_columns(rng):
    F = [crandn(rng, m, 3) for m in (3, 4, 5)]
    B = balanced_columns(F)
    np.testing.assert_allclose(cp_construct(*B), cp_construct(*F), atol=1e-12)
    norms = np.array([np.linalg.norm(b, axis=0) for b in B])
    np.testing.assert_allclose(norms, norms[[0, 0, 0]], rtol=1e-12)


def test_plugin_gives_eighteen(rng):
    F, X0, N = random_problem(rng, (5, 5, 5), 3)
    X = X0 + 1e-3 * N
    pred = plugin_analysis(X, 3, run_all(X, 3))
    assert len(pred) == 6 and sum(len(v) for v in pred.values()) == 18
    # the predicted errors weight columns by their norms, so compare at the
    # same column balance
    true = analyze_all(X0, 3, balanced_columns(F))
    for b in ALL_BRANCHES:
        np.testing.assert_allclose(pred[b], true[b], rtol=0.2)


@pytest.mark.parametrize("branch", ALL_BRANCHES, ids=lambda b: b.label)
def test_first_order_ladder_per_branch(branch):
    rng = np.random.default_rng(21)
    F, X0, N = random_problem(rng, (4, 5, 6), 3, complex_=branch.side == "lhs")
    res = residual_ladder(Stages(X0, F, N, 3, branch), EPS)
    for key, values in res.items():
        assert fitted_slope(EPS, values) >= 1.9, key
