import numpy as np
import pytest
from hypothesis import given, strategies as st

from secsi.subspace import expanded_core, mode_svd_partition, procrustes_align, truncated_hosvd
from secsi.tensor_ops import cp_construct, multi_mode_product, unfold, vec
from conftest import crandn
from ladder import fitted_slope, random_problem

EPS = [1e-2 / 2**i for i in range(8)]


def low_rank(rng, dims=(5, 5, 5), d=3, complex_=False):
    return random_problem(rng, dims, d, complex_)[:2]


@pytest.mark.parametrize("complex_", [False, True])
def test_partition_invariants(rng, complex_):
    T = crandn(rng, 4, 5, 6) if complex_ else rng.standard_normal((4, 5, 6))
    for r in (1, 2, 3):
        s = mode_svd_partition(T, r, 2)
        U = np.hstack([s.U_s, s.U_n])
        np.testing.assert_allclose(U.conj().T @ U, np.eye(U.shape[1]), atol=1e-13)
        np.testing.assert_allclose(s.Gamma_n, np.eye(U.shape[0]) - s.U_s @ s.U_s.conj().T, atol=1e-13)
        assert np.all(s.sigma_s > 0) and np.all(np.diff(s.sigma_s) <= 0)
        assert np.linalg.norm(s.Gamma_n @ s.U_s) <= 1e-13
        # phase convention: largest entry real positive
        piv = s.U_s[np.argmax(np.abs(s.U_s), axis=0), np.arange(2)]
        np.testing.assert_allclose(piv.imag, 0, atol=1e-15)
        assert np.all(piv.real > 0)


def test_noiseless_partition(rng):
    F, X0 = low_rank(rng)
    for r in (1, 2, 3):
        sv = np.linalg.svd(unfold(X0, r), compute_uv=False)
        assert np.sum(sv > 1e-10 * sv[0]) == 3
        s = mode_svd_partition(X0, r, 3)
        rec = s.U_s @ s.Sigma_s @ s.V_s.conj().T
        assert np.linalg.norm(rec - unfold(X0, r)) <= 1e-12 * np.linalg.norm(X0)
        assert not s.weak_gap


def test_weak_gap_is_reported_not_raised(rng):
    T = rng.standard_normal((4, 4, 4))
    s = mode_svd_partition(T, 1, 2)
    assert s.gap_ratio < 10 and s.weak_gap


def test_rank_out_of_range(rng):
    with pytest.raises(ValueError):
        mode_svd_partition(rng.standard_normal((3, 4, 5)), 1, 4)
    with pytest.raises(ValueError):
        truncated_hosvd(rng.standard_normal((3, 4, 5)), 0)


def test_truncated_hosvd_noiseless(rng):
    F, X0 = low_rank(rng, complex_=True)
    H = truncated_hosvd(X0, 3)
    assert H.core.shape == (3, 3, 3)
    assert np.linalg.norm(H.reconstruct() - X0) <= 1e-12 * np.linalg.norm(X0)
    expected = multi_mode_product(X0, *(u.conj().T for u in H.U))
    np.testing.assert_allclose(H.core, expected, atol=1e-13)


def test_full_rank_hosvd_is_exact(rng):
    T = crandn(rng, 3, 3, 3)
    assert np.linalg.norm(truncated_hosvd(T, 3).reconstruct() - T) <= 1e-13 * np.linalg.norm(T)


def test_superdiagonal_core(rng):
    Q = [np.linalg.qr(rng.standard_normal((m, 3)))[0] for m in (5, 6, 7)]
    X0 = cp_construct(Q[0] * [3.0, 2.0, 1.0], Q[1], Q[2])
    core = truncated_hosvd(X0, 3).core
    mask = np.zeros_like(core, dtype=bool)
    mask[range(3), range(3), range(3)] = True
    assert np.linalg.norm(core[~mask]) <= 1e-12 * np.linalg.norm(core)


def test_expanded_core(rng):
    T = rng.standard_normal((5, 8, 7))
    H = truncated_hosvd(T, 4)
    assert expanded_core(H, 3).shape == (4, 4, 7)
    assert expanded_core(H, 1).shape == (5, 4, 4)
    # without truncation the expansion undoes the mode-3 projection
    G = truncated_hosvd(T[:3, :3, :3], 3)
    S3 = expanded_core(G, 3)
    U1, U2, _ = G.U
    np.testing.assert_allclose(S3, multi_mode_product(T[:3, :3, :3], U1.conj().T, U2.conj().T), atol=1e-13)


def test_expanded_core_slice_structure(rng):
    F, X0 = low_rank(rng)
    H = truncated_hosvd(X0, 3)
    S3 = expanded_core(H, 3)
    T1 = H.U[0].conj().T @ F[0]
    T2 = (H.U[1].conj().T @ F[1]).T
    for k in range(5):
        np.testing.assert_allclose(S3[:, :, k], T1 @ np.diag(F[2][k]) @ T2, atol=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_procrustes_is_unitary(seed):
    r = np.random.default_rng(seed)
    A = np.linalg.qr(crandn(r, 6, 3))[0]
    Phi = np.linalg.qr(crandn(r, 3, 3))[0]
    W = procrustes_align(A @ Phi, A)
    np.testing.assert_allclose(W.conj().T @ W, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(A @ Phi @ W, A, atol=1e-12)


@pytest.mark.parametrize("complex_", [False, True])
def test_first_order_subspace_and_core(complex_):
    rng = np.random.default_rng(3)
    F, X0, N = random_problem(rng, (5, 6, 4), 3, complex_)
    H0 = truncated_hosvd(X0, 3)
    res_u = {r: [] for r in range(3)}
    res_core = []
    for eps in EPS:
        X = X0 + eps * N
        H = truncated_hosvd(X, 3)
        aligned = []
        for r in range(3):
            b, b0 = H.bases[r], H0.bases[r]
            U = b.U_s @ procrustes_align(b.U_s, b0.U_s)
            aligned.append(U)
            pred = b0.Gamma_n @ unfold(N, r + 1) @ b0.V_s / b0.sigma_s
            res_u[r].append(np.linalg.norm(U - b0.U_s - eps * pred))
        core = multi_mode_product(X, *(u.conj().T for u in aligned))
        pred = multi_mode_product(N, *(u.conj().T for u in H0.U))
        res_core.append(np.linalg.norm(vec(unfold(core - H0.core - eps * pred, 1))))
    for r in range(3):
        assert fitted_slope(EPS, res_u[r]) >= 1.9
        assert res_u[r][-2] / res_u[r][-1] >= 3.5
    assert fitted_slope(EPS, res_core) >= 1.9
