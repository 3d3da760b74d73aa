"""First-order perturbation analysis of the SECSI branches.

For a reference tensor with known signal subspaces and factor matrices, the
functions here build the chain of linear operators mapping the vectorized
mode-1 noise ``n1 = vec([N]_(1))`` to the first-order perturbation of every
intermediate quantity of a branch, ending with the factor errors after the
CP scaling ambiguity has been removed.  The mean square factor errors then
follow in closed form from the noise covariance.

Conventions
-----------
All operators act on the mode-1 noise of the *reordered* tensor the branch
works on; :func:`analyze_branch` reorders the noise model accordingly and maps
the per-slot results back to the original modes.  Index arrays are used in
place of explicit permutation matrices.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .branches import ALL_BRANCHES, BranchId, SecsiEstimates, reorder_tensor, select_pivot, slices_of
from .subspace import expanded_core, truncated_hosvd
from .tensor_ops import (
    as_tensor3,
    khatri_rao,
    krp_G,
    krp_H,
    perm_r_to_1_indices,
    perm_transpose_indices,
    permute_axes_indices,
    unfold,
    selection_J,
    selection_W_red,
)

#: relative singular value cutoff for the pseudo-inverse of the stacked JEVD matrix
PINV_RCOND = 1e-12


class AnalysisError(RuntimeError):
    pass


# -- noise ----------------------------------------------------------------------


@dataclass
class NoiseModel:
    """Second-order statistics of the mode-1 vectorized noise.

    Either white (``R = variance * I``, nothing materialized) or a full
    covariance ``R``.  The pseudo-covariance ``C`` is carried along for
    completeness; the closed-form errors do not depend on it.
    """

    variance: Optional[float] = 1.0
    R: Optional[np.ndarray] = None
    C: Optional[np.ndarray] = None

    @classmethod
    def white(cls, variance: float = 1.0) -> "NoiseModel":
        if not variance > 0:
            raise ValueError("noise variance must be positive")
        return cls(variance=float(variance))

    @classmethod
    def from_covariance(cls, R, C=None) -> "NoiseModel":
        R = np.asarray(R, dtype=np.complex128)
        if R.ndim != 2 or R.shape[0] != R.shape[1]:
            raise ValueError("covariance must be a square matrix")
        scale = max(float(np.max(np.abs(R))), 1e-300)
        if np.max(np.abs(R - R.conj().T)) > 1e-12 * scale:
            raise ValueError("covariance is not Hermitian")
        M = R.shape[0]
        lam_min = float(np.linalg.eigvalsh(R)[0])
        if lam_min < -1e-10 * float(np.real(np.trace(R))) / M:
            raise ValueError("covariance is not positive semidefinite")
        return cls(variance=None, R=R, C=None if C is None else np.asarray(C, dtype=np.complex128))

    @property
    def is_white(self) -> bool:
        return self.R is None

    def scaled(self, alpha: float) -> "NoiseModel":
        if self.is_white:
            return NoiseModel(variance=self.variance * alpha)
        return NoiseModel(variance=None, R=self.R * alpha, C=None if self.C is None else self.C * alpha)

    def reordered(self, dims, order) -> "NoiseModel":
        """Noise model of ``np.transpose(N, order)`` for a tensor of shape ``dims``."""
        if self.is_white:
            return self
        idx = permute_axes_indices(dims, order)
        C = None if self.C is None else self.C[np.ix_(idx, idx)]
        return NoiseModel(variance=None, R=self.R[np.ix_(idx, idx)], C=C)

    def check_size(self, M: int):
        if not self.is_white and self.R.shape[0] != M:
            raise ValueError(f"covariance has size {self.R.shape[0]}, tensor has {M} entries")


# -- inputs ---------------------------------------------------------------------


@dataclass
class AnalysisInputs:
    """Quantities the operator chain is evaluated at, in the branch's reordered frame.

    ``factors`` are in slot order (F1, F2, F3 of the algorithm); ``diagonals``
    holds ``diag(D_k)`` row by row.
    """

    branch: BranchId
    original_dims: tuple
    tensor: np.ndarray
    d: int
    subspaces: tuple
    core: np.ndarray
    slices: np.ndarray
    pivot: int
    factors: tuple
    T1: np.ndarray
    T2: np.ndarray
    diagonals: np.ndarray

    @property
    def dims(self) -> tuple:
        return self.tensor.shape

    @property
    def T(self) -> np.ndarray:
        """Transform diagonalized by this branch's matrix set."""
        return self.T1 if self.branch.side == "rhs" else self.T2


def prepare_inputs(
    reference,
    d: int,
    branch: BranchId,
    factors,
    pivot: Optional[int] = None,
) -> AnalysisInputs:
    """Collect everything the chain needs for one branch.

    Parameters
    ----------
    reference : array_like
        Tensor in original mode order.  The noiseless tensor for a true
        analysis, or the noisy observation for plug-in estimates.
    d : int
        Rank.
    branch : BranchId
    factors : sequence of three arrays
        Factor matrices in original mode order.
    pivot : int, optional
        Pivot slice index; chosen by condition number when omitted.
    """
    if isinstance(branch, str):
        branch = BranchId.from_label(branch)
    X = as_tensor3(reference)
    Y = reorder_tensor(X, branch)
    slot = tuple(np.asarray(factors[m - 1], dtype=np.complex128) for m in branch.slot_to_original)
    for F, M in zip(slot, Y.shape):
        if F.shape != (M, d):
            raise ValueError(f"factor of shape {F.shape} does not match dimension {M} and rank {d}")
    H = truncated_hosvd(Y, d)
    slices = slices_of(expanded_core(H, 3))
    p = select_pivot(slices) if pivot is None else int(pivot)
    F1, F2, F3 = slot
    piv_row = F3[p]
    if np.any(np.abs(piv_row) == 0):
        raise AnalysisError("pivot row of the third factor has a zero entry")
    return AnalysisInputs(
        branch=branch,
        original_dims=X.shape,
        tensor=Y,
        d=d,
        subspaces=H.bases,
        core=H.core,
        slices=slices,
        pivot=p,
        factors=slot,
        T1=H.bases[0].U_s.conj().T @ F1,
        T2=H.bases[1].U_s.conj().T @ F2,
        diagonals=F3 / piv_row,
    )


# -- operator chain -------------------------------------------------------------


@dataclass
class LChain:
    """Operators from ``n1`` to first-order perturbations of one branch.

    Row spaces: ``L0`` vec of the core, ``L1`` mode-1 vec of the expanded
    core, ``L2k[k]`` vec of slice ``k``, ``L3k[k]`` vec of the ``k``-th matrix
    of the diagonalized set, ``L4`` vec of the transform, ``L4k[k]`` row ``k``
    of the third factor, ``L5``/``L6``/``L7`` vec of the raw perturbations of
    the third, first and second factors, ``L_F*`` the same after the optimal
    column scaling.
    """

    L0: np.ndarray
    L1: np.ndarray
    L2k: list
    L3k: list
    A: np.ndarray
    B0: np.ndarray
    L4: np.ndarray
    L4k: list
    L5: np.ndarray
    L6: np.ndarray
    L7: np.ndarray
    L_F1: np.ndarray
    L_F2: np.ndarray
    L_F3: np.ndarray
    A_cond: float = float("nan")
    extras: dict = field(default_factory=dict)

    @property
    def L3_stacked(self) -> np.ndarray:
        return np.vstack(self.L3k)

    @property
    def B(self) -> np.ndarray:
        """Block-diagonal ``I_K kron B0`` (materialized on request only)."""
        return np.kron(np.eye(len(self.L3k)), self.B0)

    @property
    def L_F(self) -> tuple:
        return (self.L_F1, self.L_F2, self.L_F3)


def _left_perm_T(Y, idx):
    # P^T @ Y for the permutation P with (P v) = v[idx]
    out = np.empty_like(Y)
    out[idx] = Y
    return out


def _right_perm(X, idx):
    # X @ P for the permutation P with (P v) = v[idx]
    out = np.empty_like(X)
    out[:, idx] = X
    return out


def _pinv(A, rcond=PINV_RCOND):
    U, s, Vh = np.linalg.svd(A, full_matrices=False)
    keep = s > rcond * s[0] if s.size and s[0] > 0 else np.zeros(s.shape, bool)
    inv = np.zeros_like(s)
    inv[keep] = 1.0 / s[keep]
    rank = int(np.count_nonzero(keep))
    cond = float(s[0] / s[rank - 1]) if rank else float("inf")
    return (Vh.conj().T * inv) @ U.conj().T, cond


def scaling_projection(L, F):
    """``(K^{-1} kron F) W (I kron F^H) L - L`` with ``K = Ddiag(F^H F)``."""
    F = np.asarray(F)
    M, d = F.shape
    k = np.sum(np.abs(F) ** 2, axis=0)
    # (I kron F^H) L, keeping only the diagonal entries after W
    blocks = L.reshape(d, M, -1)  # block l holds rows of column l
    diag_part = np.einsum("ml,lmn->ln", F.conj(), blocks)  # f_l^H dF_l
    proj = (F.T[:, :, None] * (diag_part / k[:, None])[:, None, :]).reshape(d * M, -1)
    return proj - L


def build_l_chain(inputs: AnalysisInputs) -> LChain:
    """Operator chain for the branch described by ``inputs``."""
    d = inputs.d
    M1, M2, M3 = inputs.dims
    M = M1 * M2 * M3
    sub1, sub2, sub3 = inputs.subspaces
    U1, U2, U3 = sub1.U_s, sub2.U_s, sub3.U_s
    F1, F2, F3 = inputs.factors
    S = inputs.slices
    p = inputs.pivot
    side = inputs.branch.side
    eye_d = np.eye(d)

    # core and expanded core
    L0 = np.kron(np.kron(U2.conj().T, U3.conj().T), U1.conj().T)
    idx_core3 = perm_r_to_1_indices((d, d, d), 3)
    idx_noise2 = perm_r_to_1_indices((M1, M2, M3), 2)
    idx_noise3 = perm_r_to_1_indices((M1, M2, M3), 3)
    S_mode3 = unfold(inputs.core, 3)
    term_a = np.kron(np.eye(d * d), U3) @ L0[idx_core3]
    right3 = (S_mode3.T @ np.diag(1.0 / sub3.sigma_s)) @ sub3.V_s.T
    term_b = _right_perm(np.kron(right3, sub3.Gamma_n), idx_noise3)
    L1 = _left_perm_T(term_a + term_b, perm_r_to_1_indices((d, d, M3), 3))

    # slices
    # entry (i, j) of slice k sits at row i + d * (j * M3 + k) of the mode-1 vec
    ii, jj = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
    rows_i = ii.ravel(order="F")
    rows_j = jj.ravel(order="F")
    L2k = [L1[rows_i + d * (rows_j * M3 + k)] for k in range(M3)]

    # matrix set
    Sp_inv = np.linalg.inv(S[p])
    L3k = []
    q_dd = perm_transpose_indices(d, d)
    for k in range(M3):
        if side == "rhs":
            Lk = np.kron(Sp_inv.T, eye_d) @ L2k[k] - np.kron(Sp_inv.T, S[k] @ Sp_inv) @ L2k[p]
        else:
            Lk = np.kron(eye_d, Sp_inv) @ L2k[k] - np.kron(S[k].T @ Sp_inv.T, Sp_inv) @ L2k[p]
            Lk = Lk[q_dd]
        L3k.append(Lk)

    # transform
    T = inputs.T
    T_inv = np.linalg.inv(T)
    J = selection_J(d)
    Dk = inputs.diagonals
    if side == "rhs":
        sets = np.array([S[k] @ Sp_inv for k in range(M3)])
    else:
        sets = np.array([(Sp_inv @ S[k]).T for k in range(M3)])
    A = np.vstack(
        [J @ (np.kron(eye_d, T_inv @ sets[k]) - np.kron(np.diag(Dk[k]), T_inv)) for k in range(M3)]
    )
    B0 = J @ np.kron(T.T, T_inv)
    A_pinv, A_cond = _pinv(A)
    L4 = np.zeros((d * d, M), dtype=np.complex128)
    for k in range(M3):
        L4 -= A_pinv[:, k * d * d:(k + 1) * d * d] @ (B0 @ L3k[k])

    # third factor
    W_red = selection_W_red(d)
    row_op = W_red @ np.kron(np.diag(F3[p]) @ T.T, T_inv)
    L4k = [row_op @ L3k[k] for k in range(M3)]
    L5 = _left_perm_T(np.vstack(L4k), perm_transpose_indices(M3, d))

    # first and second factors
    if side == "rhs":
        right1 = (T.T @ np.diag(1.0 / sub1.sigma_s)) @ sub1.V_s.T
        L6 = np.kron(eye_d, U1) @ L4 + np.kron(right1, sub1.Gamma_n)
        K = khatri_rao(F3, F1)
        K_pinv = np.linalg.pinv(K)
        dK = krp_H(F1, M3) @ L5 + krp_G(F3, M1) @ L6
        L7 = _right_perm(np.kron(K_pinv, np.eye(M2)), idx_noise2) - np.kron(K_pinv, F2) @ dK[
            perm_transpose_indices(M3 * M1, d)
        ]
    else:
        right2 = (T.T @ np.diag(1.0 / sub2.sigma_s)) @ sub2.V_s.T
        L7 = np.kron(eye_d, U2) @ L4 + _right_perm(np.kron(right2, sub2.Gamma_n), idx_noise2)
        K = khatri_rao(F2, F3)
        K_pinv = np.linalg.pinv(K)
        dK = krp_G(F2, M3) @ L5 + krp_H(F3, M2) @ L7
        L6 = np.kron(K_pinv, np.eye(M1)) - np.kron(K_pinv, F1) @ dK[perm_transpose_indices(M2 * M3, d)]

    return LChain(
        L0=L0,
        L1=L1,
        L2k=L2k,
        L3k=L3k,
        A=A,
        B0=B0,
        L4=L4,
        L4k=L4k,
        L5=L5,
        L6=L6,
        L7=L7,
        L_F1=scaling_projection(L6, F1),
        L_F2=scaling_projection(L7, F2),
        L_F3=scaling_projection(L5, F3),
        A_cond=A_cond,
    )


# -- closed-form errors ---------------------------------------------------------


def rmsfe_closed_form(L_F, R_nn1, F) -> float:
    """``tr(L_F R L_F^H) / ||F||_F^2``.

    ``R_nn1`` may be a covariance matrix, a :class:`NoiseModel`, or a scalar
    variance for white noise.
    """
    L_F = np.asarray(L_F)
    if isinstance(R_nn1, NoiseModel):
        R_nn1 = R_nn1.variance if R_nn1.is_white else R_nn1.R
    denom = float(np.linalg.norm(F) ** 2)
    if np.ndim(R_nn1) == 0:
        num = float(R_nn1) * float(np.sum(np.abs(L_F) ** 2))
    else:
        R_nn1 = np.asarray(R_nn1)
        num = float(np.real(np.einsum("ij,ij->", L_F @ R_nn1, L_F.conj())))
    return max(num, 0.0) / denom


def analyze_branch(inputs: AnalysisInputs, noise: NoiseModel, chain: Optional[LChain] = None):
    """Closed-form rMSFE of the three factors, in original mode order."""
    noise.check_size(int(np.prod(inputs.original_dims)))
    local = noise.reordered(inputs.original_dims, inputs.branch.reorder)
    chain = chain if chain is not None else build_l_chain(inputs)
    out = [0.0, 0.0, 0.0]
    for slot, (L_F, F) in enumerate(zip(chain.L_F, inputs.factors)):
        out[inputs.branch.slot_to_original[slot] - 1] = rmsfe_closed_form(L_F, local, F)
    return tuple(out)


def analyze_all(X0, d: int, factors, noise: Optional[NoiseModel] = None, branches=ALL_BRANCHES) -> dict:
    """Closed-form rMSFE of every branch at the noiseless tensor ``X0``."""
    noise = noise or NoiseModel.white(1.0)
    return {b: analyze_branch(prepare_inputs(X0, d, b, factors), noise) for b in branches}


def balanced_columns(factors):
    """Rescale columns so the three factors of each component share one norm.

    The product of the three column scales is one, so the CP model is
    unchanged.
    """
    norms = np.array([np.linalg.norm(F, axis=0) for F in factors])
    target = np.prod(norms, axis=0) ** (1.0 / 3.0)
    return tuple(F * (target / n) for F, n in zip(factors, norms))


def plugin_analysis(X, d: int, estimates: SecsiEstimates, noise: Optional[NoiseModel] = None) -> dict:
    """Plug-in rMSFE estimates: every noiseless quantity replaced by its noisy counterpart.

    Returns ``{BranchId: (rmsfe_1, rmsfe_2, rmsfe_3)}`` for the branches that
    produced estimates; 18 numbers when all six succeeded.
    """
    noise = noise or NoiseModel.white(1.0)
    out = {}
    for b in estimates.branches:
        triple = estimates[b]
        factors = balanced_columns(triple.factors)
        try:
            inputs = prepare_inputs(X, d, b, factors, pivot=triple.pivot)
            out[b] = analyze_branch(inputs, noise)
        except (np.linalg.LinAlgError, AnalysisError, ValueError):
            continue
    return out


# -- scaling ambiguity ----------------------------------------------------------


def optimal_column_scaling(Z, Z_hat) -> np.ndarray:
    """Diagonal ``P`` with ``Z_hat @ P`` aligned to ``Z``: ``Ddiag(Z^H Z_hat K^{-1})^{-1}``."""
    Z = np.asarray(Z)
    Z_hat = np.asarray(Z_hat)
    if Z.shape != Z_hat.shape:
        raise ValueError("shapes differ")
    k = np.sum(np.abs(Z) ** 2, axis=0)
    if np.any(k == 0):
        raise ValueError("reference matrix has a zero column")
    c = np.sum(Z.conj() * Z_hat, axis=0) / k
    if np.any(np.abs(c) <= 1e-300):
        raise ValueError("an estimated column is orthogonal to its reference")
    return np.diag(1.0 / c)
