"""Per-mode SVD partitions and the truncated HOSVD."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .tensor_ops import mode_product, multi_mode_product, unfold

logger = logging.getLogger(__name__)

#: ratio sigma_d / sigma_{d+1} below which a mode is flagged as weakly separated
GAP_WARNING_RATIO = 10.0


@dataclass(frozen=True)
class ModeSubspace:
    """SVD partition of one unfolding into signal and noise parts.

    ``U_s`` holds the ``d`` dominant left singular vectors, ``U_n`` the
    remaining ones, ``sigma_s`` the ``d`` dominant singular values and
    ``V_s`` the matching right singular vectors.
    """

    mode: int
    U_s: np.ndarray
    U_n: np.ndarray
    sigma_s: np.ndarray
    V_s: np.ndarray
    gap_ratio: float

    @property
    def Sigma_s(self) -> np.ndarray:
        return np.diag(self.sigma_s)

    @property
    def Gamma_n(self) -> np.ndarray:
        """Projector onto the noise subspace, ``U_n U_n^H``."""
        return self.U_n @ self.U_n.conj().T

    @property
    def weak_gap(self) -> bool:
        return self.gap_ratio < GAP_WARNING_RATIO


@dataclass(frozen=True)
class TruncatedHosvd:
    core: np.ndarray
    bases: tuple[ModeSubspace, ModeSubspace, ModeSubspace]
    d: int

    @property
    def U(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(b.U_s for b in self.bases)

    def reconstruct(self) -> np.ndarray:
        return multi_mode_product(self.core, *self.U)


def _phase(U):
    # unit scalars making the largest-magnitude entry of each column real positive
    idx = np.argmax(np.abs(U), axis=0)
    piv = U[idx, np.arange(U.shape[1])]
    mag = np.abs(piv)
    return np.where(mag > 0, piv / np.where(mag > 0, mag, 1.0), 1.0)


def mode_svd_partition(T: np.ndarray, r: int, d: int) -> ModeSubspace:
    """Split the SVD of ``[T]_(r)`` into a rank-``d`` signal part and its complement."""
    X = unfold(T, r)
    m, n = X.shape
    if not 1 <= d <= min(m, n):
        raise ValueError(f"rank d={d} out of range for mode {r} unfolding of shape {X.shape}")
    U, s, Vh = np.linalg.svd(X, full_matrices=True)
    k = min(m, n)
    ph = _phase(U)
    U = U * ph.conj()
    V_lead = Vh[:k].conj().T * ph[:k].conj()
    if d < s.size:
        gap = np.inf if s[d] == 0 else s[d - 1] / s[d]
    else:
        gap = np.inf
    sub = ModeSubspace(
        mode=r,
        U_s=U[:, :d],
        U_n=U[:, d:],
        sigma_s=s[:d],
        V_s=V_lead[:, :d],
        gap_ratio=float(gap),
    )
    if sub.weak_gap:
        logger.info("mode %d: weak singular value gap sigma_d/sigma_d+1 = %.3g", r, gap)
    if np.any(sub.sigma_s <= 0):
        raise ValueError(f"mode {r} unfolding has rank below d={d}")
    return sub


def truncated_hosvd(T: np.ndarray, d: int) -> TruncatedHosvd:
    """Rank-(d, d, d) truncated HOSVD of ``T``."""
    bases = tuple(mode_svd_partition(T, r, d) for r in (1, 2, 3))
    core = multi_mode_product(T, *(b.U_s.conj().T for b in bases))
    return TruncatedHosvd(core=core, bases=bases, d=d)


def expanded_core(H: TruncatedHosvd, r: int) -> np.ndarray:
    """Core tensor re-expanded along mode ``r``: ``S x_r U_r``."""
    return mode_product(H.core, H.bases[r - 1].U_s, r)


def procrustes_align(U_hat: np.ndarray, U: np.ndarray) -> np.ndarray:
    """Unitary ``Phi`` minimizing ``||U_hat Phi - U||_F``."""
    W, _, Vh = np.linalg.svd(U_hat.conj().T @ U)
    return W @ Vh
