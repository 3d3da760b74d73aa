"""Dense 3-way tensor arithmetic and the structural matrices built on it.

Unfoldings follow the reverse cyclical column order, pinned by the identity

    [A x_1 X1 x_2 X2 x_3 X3]_(r) = X_r [A]_(r) (X_{r+1} kron X_{r+2})^T

with mode indices taken cyclically.  For ``r = 1`` the entry ``T[i, j, k]``
(0-based) lands at row ``i``, column ``j * M3 + k``.

Vectorization stacks columns (Fortran order).  Mode indices are 1-based in
the public API, matching the notation of the CP literature.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

__all__ = [
    "as_tensor3",
    "vec",
    "unvec",
    "unfold",
    "fold",
    "mode_product",
    "multi_mode_product",
    "kron",
    "khatri_rao",
    "perm_r_to_1_indices",
    "perm_r_to_1",
    "perm_transpose_indices",
    "perm_transpose",
    "selection_J",
    "selection_W",
    "selection_W_red",
    "krp_G",
    "krp_H",
    "krp_vec_operators",
    "ddiag",
    "off",
    "higher_order_norm",
    "cp_construct",
    "permute_axes_indices",
]


def _check_mode(r):
    if r not in (1, 2, 3):
        raise ValueError(f"mode index must be 1, 2 or 3, got {r!r}")


def _cyclic_axes(r):
    # axes of the r-th unfolding: mode r first, then r+1, r+2 (cyclic)
    return (r - 1, r % 3, (r + 1) % 3)


def as_tensor3(T) -> np.ndarray:
    """Return ``T`` as a complex ndarray with exactly three axes."""
    T = np.asarray(T)
    if T.ndim != 3:
        raise ValueError(f"expected a 3-way array, got ndim={T.ndim}")
    if min(T.shape) < 1:
        raise ValueError(f"all dimensions must be positive, got {T.shape}")
    return T.astype(np.complex128, copy=False)


def vec(A: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization."""
    return np.asarray(A).reshape(-1, order="F")


def unvec(v: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    return np.asarray(v).reshape(shape, order="F")


def unfold(T: np.ndarray, r: int) -> np.ndarray:
    """Mode-``r`` unfolding ``[T]_(r)`` of shape ``M_r x (product of the rest)``."""
    _check_mode(r)
    T = np.asarray(T)
    if T.ndim != 3:
        raise ValueError("unfold expects a 3-way array")
    return np.transpose(T, _cyclic_axes(r)).reshape(T.shape[r - 1], -1)


def fold(M: np.ndarray, r: int, dims: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`unfold`."""
    _check_mode(r)
    dims = tuple(int(x) for x in dims)
    if len(dims) != 3:
        raise ValueError("dims must have three entries")
    axes = _cyclic_axes(r)
    permuted = tuple(dims[a] for a in axes)
    M = np.asarray(M)
    if M.shape != (permuted[0], permuted[1] * permuted[2]):
        raise ValueError(
            f"matrix of shape {M.shape} cannot be folded in mode {r} to dims {dims}"
        )
    return np.transpose(M.reshape(permuted), np.argsort(axes))


def mode_product(T: np.ndarray, B: np.ndarray, r: int) -> np.ndarray:
    """r-mode product ``T x_r B``, i.e. ``[C]_(r) = B [T]_(r)``."""
    _check_mode(r)
    B = np.asarray(B)
    if B.ndim != 2 or B.shape[1] != T.shape[r - 1]:
        raise ValueError(
            f"matrix with shape {B.shape} does not match mode {r} of a tensor with shape {T.shape}"
        )
    dims = list(T.shape)
    dims[r - 1] = B.shape[0]
    return fold(B @ unfold(T, r), r, dims)


def multi_mode_product(T, B1=None, B2=None, B3=None) -> np.ndarray:
    """``T x_1 B1 x_2 B2 x_3 B3``; ``None`` skips a mode."""
    out = np.asarray(T)
    for r, B in ((1, B1), (2, B2), (3, B3)):
        if B is not None:
            out = mode_product(out, B, r)
    return out


def kron(*mats) -> np.ndarray:
    out = np.asarray(mats[0])
    for m in mats[1:]:
        out = np.kron(out, np.asarray(m))
    return out


def khatri_rao(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Column-wise Kronecker product; column ``l`` is ``kron(A[:, l], B[:, l])``."""
    A = np.asarray(A)
    B = np.asarray(B)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[1]:
        raise ValueError(f"Khatri-Rao product needs equal column counts, got {A.shape} and {B.shape}")
    return (A[:, None, :] * B[None, :, :]).reshape(A.shape[0] * B.shape[0], A.shape[1])


def perm_r_to_1_indices(dims: Sequence[int], r: int) -> np.ndarray:
    """Index form of the r-to-1 permutation: ``vec([Z]_(r)) == vec([Z]_(1))[idx]``."""
    _check_mode(r)
    M1, M2, M3 = (int(x) for x in dims)
    # label each entry with its position in vec([Z]_(1))
    labels = fold(unvec(np.arange(M1 * M2 * M3), (M1, M2 * M3)), 1, (M1, M2, M3))
    return vec(unfold(labels, r))


def perm_r_to_1(dims: Sequence[int], r: int) -> np.ndarray:
    """Dense 0/1 matrix ``P`` with ``vec([Z]_(r)) = P vec([Z]_(1))``."""
    idx = perm_r_to_1_indices(dims, r)
    return np.eye(idx.size)[idx]


def perm_transpose_indices(m: int, n: int) -> np.ndarray:
    """Index form of ``Q_(m,n)``: ``vec(Z.T) == vec(Z)[idx]`` for ``Z`` of shape (m, n)."""
    labels = unvec(np.arange(m * n), (m, n))
    return vec(labels.T)


def perm_transpose(m: int, n: int) -> np.ndarray:
    """Dense ``Q_(m,n)`` with ``vec(Z^T) = Q vec(Z)``."""
    idx = perm_transpose_indices(m, n)
    return np.eye(m * n)[idx]


def permute_axes_indices(dims: Sequence[int], order: Sequence[int]) -> np.ndarray:
    """Index map between mode-1 vectorizations under an axis reordering.

    For ``Y = np.transpose(X, order)`` (0-based ``order``),
    ``vec([Y]_(1)) == vec([X]_(1))[idx]``.
    """
    M1, M2, M3 = (int(x) for x in dims)
    labels = fold(unvec(np.arange(M1 * M2 * M3), (M1, M2 * M3)), 1, (M1, M2, M3))
    return vec(unfold(np.transpose(labels, tuple(order)), 1))


def selection_J(d: int) -> np.ndarray:
    """``J`` with ``J vec(X) = vec(Off(X))`` for ``d x d`` matrices."""
    return np.diag(1.0 - vec(np.eye(d)))


def selection_W(d: int) -> np.ndarray:
    """``W`` with ``W vec(X) = vec(Ddiag(X))``; equals ``I - J``."""
    return np.diag(vec(np.eye(d)))


def selection_W_red(d: int) -> np.ndarray:
    """``d x d^2`` selector with ``W_red vec(X) = diag(X)``."""
    out = np.zeros((d, d * d))
    out[np.arange(d), np.arange(d) * (d + 1)] = 1.0
    return out


def krp_G(X: np.ndarray, m: int) -> np.ndarray:
    """``G(X, m)`` such that ``vec(X kr Y) = G(X, m) vec(Y)`` for any ``m x d`` matrix ``Y``."""
    X = np.asarray(X)
    M, d = X.shape
    eye = np.eye(m)
    blocks = []
    for l in range(d):
        sel = np.kron(np.eye(d)[l][None, :], eye)
        blocks.append(np.kron(X[:, [l]], eye) @ sel)
    return np.vstack(blocks)


def krp_H(Y: np.ndarray, m: int) -> np.ndarray:
    """``H(Y, m)`` such that ``vec(X kr Y) = H(Y, m) vec(X)`` for any ``m x d`` matrix ``X``."""
    Y = np.asarray(Y)
    M, d = Y.shape
    eye = np.eye(m)
    blocks = []
    for l in range(d):
        sel = np.kron(np.eye(d)[l][None, :], eye)
        blocks.append(np.kron(eye, Y[:, [l]]) @ sel)
    return np.vstack(blocks)


def krp_vec_operators(X: np.ndarray, M_other: int) -> tuple[np.ndarray, np.ndarray]:
    """Both Khatri-Rao vectorization operators built from ``X``.

    Returns ``(G(X, M_other), H(X, M_other))``: the first maps ``vec(Y)`` to
    ``vec(X kr Y)``, the second maps ``vec(Y)`` to ``vec(Y kr X)``, where
    ``Y`` has ``M_other`` rows.
    """
    return krp_G(X, M_other), krp_H(X, M_other)


def ddiag(X: np.ndarray) -> np.ndarray:
    return np.diag(np.diag(X))


def off(X: np.ndarray) -> np.ndarray:
    return X - ddiag(X)


def higher_order_norm(T: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(T).ravel()))


def cp_construct(F1: np.ndarray, F2: np.ndarray, F3: np.ndarray) -> np.ndarray:
    """Tensor ``I_{3,d} x_1 F1 x_2 F2 x_3 F3``."""
    d = {np.shape(F)[1] for F in (F1, F2, F3)}
    if len(d) != 1:
        raise ValueError("factor matrices must have the same number of columns")
    return np.einsum("il,jl,kl->ijk", F1, F2, F3)
