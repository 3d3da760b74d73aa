"""The six SECSI solution paths and their building blocks.

Each branch reorders the tensor so that one original mode sits in the third
(expanded) position, builds the core slices along that mode, inverts the
best-conditioned slice and jointly diagonalizes either the right-hand-side
set ``S_k S_p^{-1}`` or the left-hand-side set ``(S_p^{-1} S_k)^T``.  The
eigenvector matrix gives one factor through the matching HOSVD basis, the
eigenvalues give the expanded-mode factor row by row, and the remaining factor
follows from a least-squares fit to the data.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .jevd import JevdOptions, JevdSolution, solve_jevd
from .subspace import TruncatedHosvd, expanded_core, truncated_hosvd
from .tensor_ops import as_tensor3, khatri_rao, unfold

logger = logging.getLogger(__name__)

#: slices with a 2-norm condition number above this are treated as singular
SINGULAR_COND = 1e12

SIDES = ("rhs", "lhs")

# axis order bringing the labelled mode into third position, and the original
# mode (1-based) that each algorithm slot F1, F2, F3 estimates afterwards
_REORDER = {1: (1, 2, 0), 2: (0, 2, 1), 3: (0, 1, 2)}
_SLOT_TO_ORIGINAL = {1: (2, 3, 1), 2: (1, 3, 2), 3: (1, 2, 3)}


class BranchError(RuntimeError):
    """A branch could not be computed (singular pivot, rank-deficient fit)."""


@dataclass(frozen=True, order=True)
class BranchId:
    """Branch label: the original mode placed third, and the diagonalized side."""

    mode: int
    side: str

    def __post_init__(self):
        if self.mode not in (1, 2, 3):
            raise ValueError(f"branch mode must be 1, 2 or 3, got {self.mode!r}")
        if self.side not in SIDES:
            raise ValueError(f"branch side must be 'rhs' or 'lhs', got {self.side!r}")

    @property
    def label(self) -> str:
        return f"{self.mode}-{self.side}"

    @classmethod
    def from_label(cls, label: str) -> "BranchId":
        try:
            mode, side = label.strip().split("-")
            return cls(int(mode), side.lower())
        except (ValueError, AttributeError):
            raise ValueError(f"invalid branch label {label!r}; expected e.g. '3-rhs'") from None

    @property
    def reorder(self) -> tuple[int, int, int]:
        """0-based axis order applied to the tensor before running the branch."""
        return _REORDER[self.mode]

    @property
    def slot_to_original(self) -> tuple[int, int, int]:
        """Original mode (1-based) estimated by algorithm slots F1, F2, F3."""
        return _SLOT_TO_ORIGINAL[self.mode]

    def __str__(self):
        return self.label


ALL_BRANCHES = tuple(BranchId(m, s) for m in (1, 2, 3) for s in SIDES)


@dataclass
class FactorTriple:
    """Factor estimates of one branch, stored in original mode order."""

    F1: np.ndarray
    F2: np.ndarray
    F3: np.ndarray
    branch: Optional[BranchId] = None
    pivot: Optional[int] = None
    pivot_cond: float = float("nan")
    jevd_residual: float = float("nan")
    jevd_status: str = ""

    def __post_init__(self):
        d = {np.shape(F)[1] for F in self.factors}
        if len(d) != 1:
            raise ValueError("factor matrices must have equal column counts")
        if not all(np.all(np.isfinite(F)) for F in self.factors):
            raise BranchError("non-finite entries in factor estimates")

    @property
    def factors(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (self.F1, self.F2, self.F3)

    @property
    def d(self) -> int:
        return self.F1.shape[1]

    def in_slot_order(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Factors arranged as the branch's algorithm slots see them."""
        if self.branch is None:
            return self.factors
        return tuple(self.factors[m - 1] for m in self.branch.slot_to_original)

    def diagnostics(self) -> dict:
        return {
            "branch": self.branch.label if self.branch else None,
            "pivot": self.pivot,
            "pivot_cond": self.pivot_cond,
            "jevd_residual": self.jevd_residual,
            "jevd_status": self.jevd_status,
        }


@dataclass
class SecsiEstimates:
    triples: dict = field(default_factory=dict)  # BranchId -> FactorTriple
    failures: dict = field(default_factory=dict)  # BranchId -> reason

    def __getitem__(self, branch) -> FactorTriple:
        if isinstance(branch, str):
            branch = BranchId.from_label(branch)
        return self.triples[branch]

    def __len__(self):
        return len(self.triples)

    @property
    def branches(self) -> list:
        return [b for b in ALL_BRANCHES if b in self.triples]


@dataclass
class BranchState:
    """Intermediate quantities of a branch, in the reordered frame."""

    branch: BranchId
    tensor: np.ndarray
    hosvd: TruncatedHosvd
    slices: np.ndarray
    conds: np.ndarray
    pivot: int
    matrix_set: np.ndarray
    jevd: JevdSolution
    slot_factors: tuple


def reorder_tensor(X: np.ndarray, branch: BranchId) -> np.ndarray:
    return np.transpose(X, branch.reorder)


def slices_of(core: np.ndarray) -> np.ndarray:
    """Frontal slices ``core[:, :, k]`` stacked along the first axis."""
    core = np.asarray(core)
    if core.ndim != 3 or core.shape[0] != core.shape[1]:
        raise ValueError(f"expected a d x d x M tensor, got shape {core.shape}")
    return np.ascontiguousarray(np.moveaxis(core, 2, 0))


def slice_conditions(slices) -> np.ndarray:
    S = np.asarray(slices)
    with np.errstate(all="ignore"):
        c = np.linalg.cond(S)
    return np.where(np.isfinite(c), c, np.inf)


def select_pivot(slices) -> int:
    """Index (0-based) of the best-conditioned slice; ties go to the lowest index."""
    conds = slice_conditions(slices)
    if conds.size == 0:
        raise ValueError("no slices given")
    p = int(np.argmin(conds))
    if not conds[p] <= SINGULAR_COND:
        raise BranchError("all slices are numerically singular")
    return p


def _check_pivot(Sp):
    if slice_conditions(Sp[None])[0] > SINGULAR_COND:
        raise BranchError("pivot slice is singular")


def build_rhs_set(slices, p: int) -> np.ndarray:
    """``S_k S_p^{-1}`` for every slice."""
    S = np.asarray(slices)
    _check_pivot(S[p])
    # S_k S_p^{-1} = (S_p^{-T} S_k^T)^T
    out = np.linalg.solve(S[p].T[None], np.swapaxes(S, 1, 2))
    out = np.swapaxes(out, 1, 2)
    out[p] = np.eye(S.shape[1])
    return out


def build_lhs_set(slices, p: int) -> np.ndarray:
    """``(S_p^{-1} S_k)^T`` for every slice."""
    S = np.asarray(slices)
    _check_pivot(S[p])
    out = np.swapaxes(np.linalg.solve(S[p][None], S), 1, 2)
    out[p] = np.eye(S.shape[1])
    return out


def ls_fit_factor(X, r: int, Fa, Fb) -> np.ndarray:
    """Least-squares factor for mode ``r`` given the other two.

    ``Fa`` and ``Fb`` are the factors of modes ``r+1`` and ``r+2`` (cyclic),
    so that ``[X]_(r) ~ F (Fa kr Fb)^T``.
    """
    Xr = unfold(np.asarray(X), r)
    K = khatri_rao(Fa, Fb)
    if K.shape[0] != Xr.shape[1]:
        raise ValueError("factor shapes do not match the tensor")
    s = np.linalg.svd(K, compute_uv=False)
    if s.size == 0 or s[-1] <= s[0] * K.shape[0] * np.finfo(float).eps or s[0] == 0:
        raise BranchError("Khatri-Rao product is rank deficient")
    sol, *_ = np.linalg.lstsq(K, Xr.T, rcond=None)
    return sol.T


def run_branch_detailed(
    X,
    d: int,
    branch: BranchId,
    jevd_options: Optional[JevdOptions] = None,
    hosvd: Optional[TruncatedHosvd] = None,
    pivot: Optional[int] = None,
) -> BranchState:
    """Run one branch and keep every intermediate quantity.

    ``hosvd`` may be supplied to share the decomposition between the two
    sides of a mode; it must belong to the reordered tensor.  ``pivot``
    overrides the condition-number choice.
    """
    X = as_tensor3(X)
    Y = reorder_tensor(X, branch)
    if d > min(Y.shape):
        raise ValueError(f"rank d={d} exceeds the smallest dimension of {X.shape}")
    H = hosvd if hosvd is not None else truncated_hosvd(Y, d)
    slices = slices_of(expanded_core(H, 3))
    conds = slice_conditions(slices)
    p = select_pivot(slices) if pivot is None else int(pivot)
    if branch.side == "rhs":
        mset = build_rhs_set(slices, p)
    else:
        mset = build_lhs_set(slices, p)
    sol = solve_jevd(mset, jevd_options)
    U1, U2, _ = H.U
    F3 = sol.diagonals
    if branch.side == "rhs":
        F1 = U1 @ sol.T
        F2 = ls_fit_factor(Y, 2, F3, F1)
    else:
        F2 = U2 @ sol.T
        F1 = ls_fit_factor(Y, 1, F2, F3)
    return BranchState(
        branch=branch,
        tensor=Y,
        hosvd=H,
        slices=slices,
        conds=conds,
        pivot=p,
        matrix_set=mset,
        jevd=sol,
        slot_factors=(F1, F2, F3),
    )


def _to_triple(state: BranchState) -> FactorTriple:
    orig = [None, None, None]
    for slot, m in enumerate(state.branch.slot_to_original):
        orig[m - 1] = state.slot_factors[slot]
    return FactorTriple(
        *orig,
        branch=state.branch,
        pivot=state.pivot,
        pivot_cond=float(state.conds[state.pivot]),
        jevd_residual=state.jevd.residual,
        jevd_status=state.jevd.status,
    )


def run_branch(X, d: int, branch: BranchId, jevd_options: Optional[JevdOptions] = None) -> FactorTriple:
    """Factor estimates of a single branch, in original mode order."""
    if isinstance(branch, str):
        branch = BranchId.from_label(branch)
    return _to_triple(run_branch_detailed(X, d, branch, jevd_options))


def run_all(X, d: int, jevd_options: Optional[JevdOptions] = None, branches=ALL_BRANCHES) -> SecsiEstimates:
    """Run every requested branch; failing branches are recorded, not raised."""
    X = as_tensor3(X)
    if not 1 <= d <= min(X.shape):
        raise ValueError(f"rank d={d} must lie in [1, {min(X.shape)}] for shape {X.shape}")
    out = SecsiEstimates()
    cache = {}
    for b in branches:
        try:
            if b.mode not in cache:
                cache[b.mode] = truncated_hosvd(reorder_tensor(X, b), d)
            state = run_branch_detailed(X, d, b, jevd_options, hosvd=cache[b.mode])
            out.triples[b] = _to_triple(state)
        except (BranchError, np.linalg.LinAlgError, ValueError, RuntimeError) as exc:
            logger.warning("branch %s failed: %s", b.label, exc)
            out.failures[b] = str(exc)
    return out
