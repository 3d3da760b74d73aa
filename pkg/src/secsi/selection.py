"""Choosing final factor estimates among the SECSI branches.

``pas_select`` picks, for every factor separately, the branch with the
smallest plug-in closed-form error.  The baselines score complete or mixed
triples by how well they reconstruct the data (``bm_select``,
``rec_ps_select``), use the pivot conditioning (``con_ps_select``) or pick at
random (``dummyr_select``).

Mixing factors from different branches requires a common column order and
scale.  Every branch triple is aligned as a whole to a reference branch with
one column permutation, columns are normalized, and the component amplitudes
of a candidate combination are fitted by linear least squares.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .branches import ALL_BRANCHES, BranchId, FactorTriple, SecsiEstimates, run_all
from .perturb import NoiseModel, plugin_analysis
from .tensor_ops import as_tensor3, khatri_rao, unfold, vec

SCHEMES = ("pas", "bm", "rec-ps", "con-ps", "dummyr")

REFERENCE_BRANCH = BranchId(3, "rhs")

SIDE_ORDER = {"rhs": 0, "lhs": 1}

# both sides of a mode predict the same error for the expanded-mode factor,
# so near-equal scores are ties and go to the earlier branch
TIE_RTOL = 1e-9


@dataclass
class SelectionResult:
    """Outcome of a selection scheme.

    ``chosen`` names the branch supplying each factor; ``triple`` holds the
    assembled factors (aligned columns, amplitudes absorbed into the first
    factor); ``scores`` maps every evaluated candidate to its score.
    """

    scheme: str
    chosen: tuple
    triple: FactorTriple
    scores: dict = field(default_factory=dict)
    residual: float = float("nan")

    @property
    def chosen_labels(self) -> list:
        return [b.label for b in self.chosen]


def _unit_columns(F):
    n = np.linalg.norm(F, axis=0)
    return F / np.where(n > 0, n, 1.0)


class _Aligner:
    """Branch triples with columns matched to a reference and normalized."""

    def __init__(self, X, estimates: SecsiEstimates):
        if len(estimates) == 0:
            raise ValueError("no branch estimates available")
        self.X = as_tensor3(X)
        self.x = vec(unfold(self.X, 1))
        self.x_norm = float(np.linalg.norm(self.x)) or 1.0
        self.estimates = estimates
        ref_branch = REFERENCE_BRANCH if REFERENCE_BRANCH in estimates.triples else estimates.branches[0]
        ref = [_unit_columns(F) for F in estimates[ref_branch].factors]
        self.aligned = {}
        for b in estimates.branches:
            cand = [_unit_columns(F) for F in estimates[b].factors]
            score = sum(np.abs(R.conj().T @ C) for R, C in zip(ref, cand))
            rows, cols = linear_sum_assignment(-score)
            perm = cols[np.argsort(rows)]
            self.aligned[b] = tuple(C[:, perm] for C in cand)

    def assemble(self, combo):
        """Fit amplitudes for factors taken from ``combo`` (one branch per mode)."""
        F1, F2, F3 = (self.aligned[b][r] for r, b in enumerate(combo))
        basis = khatri_rao(khatri_rao(F2, F3), F1)  # columns: vec of each rank-one term
        amp, *_ = np.linalg.lstsq(basis, self.x, rcond=None)
        resid = float(np.linalg.norm(self.x - basis @ amp)) / self.x_norm
        return (F1 * amp, F2, F3), resid

    def result(self, scheme, combo, scores):
        factors, resid = self.assemble(combo)
        triple = FactorTriple(*factors)
        return SelectionResult(scheme=scheme, chosen=tuple(combo), triple=triple, scores=scores, residual=resid)


def argmin_branch(values: dict, r: int) -> BranchId:
    """Branch with the smallest ``values[b][r]``; near ties go to the first in canonical order."""
    best = min(v[r] for v in values.values())
    for b in ALL_BRANCHES:
        if b in values and values[b][r] <= best + TIE_RTOL * abs(best):
            return b
    raise ValueError("no finite scores")


def _combo_label(combo):
    return "/".join(b.label for b in combo)


def pas_select(X, d: int, noise: Optional[NoiseModel] = None, estimates: Optional[SecsiEstimates] = None) -> SelectionResult:
    """Per-factor argmin of the plug-in closed-form rMSFE.

    Parameters
    ----------
    X : array_like
        Noisy tensor.
    d : int
        Rank.
    noise : NoiseModel, optional
        Noise statistics; defaults to unit white noise.  A common scale factor
        does not change the choice.
    estimates : SecsiEstimates, optional
        Branch results for ``X``; computed when omitted.
    """
    estimates = estimates if estimates is not None else run_all(X, d)
    if noise is not None and noise.is_white:
        noise = None  # a common variance cannot change the choice
    predicted = plugin_analysis(X, d, estimates, noise)
    if not predicted:
        raise RuntimeError("no branch could be analysed")
    chosen = tuple(argmin_branch(predicted, r) for r in range(3))
    scores = {b.label: list(v) for b, v in predicted.items()}
    return _Aligner(X, estimates).result("pas", chosen, scores)


def bm_select(X, estimates: SecsiEstimates) -> SelectionResult:
    """Best reconstruction over every cross-branch combination (216 for six branches)."""
    al = _Aligner(X, estimates)
    branches = estimates.branches
    scores = {}
    best = None
    for combo in itertools.product(branches, repeat=3):
        _, resid = al.assemble(combo)
        scores[_combo_label(combo)] = resid
        if best is None or resid < best[0]:
            best = (resid, combo)
    return al.result("bm", best[1], scores)


def rec_ps_select(X, estimates: SecsiEstimates) -> SelectionResult:
    """Best reconstruction among the complete branch triples."""
    al = _Aligner(X, estimates)
    scores = {}
    best = None
    for b in estimates.branches:
        _, resid = al.assemble((b, b, b))
        scores[b.label] = resid
        if best is None or resid < best[0]:
            best = (resid, b)
    return al.result("rec-ps", (best[1],) * 3, scores)


def con_ps_select(estimates: SecsiEstimates, X=None) -> SelectionResult:
    """Complete triple of the branch with the best-conditioned pivot slice.

    Both sides of a mode share the pivot, so the condition number picks a
    mode; when ``X`` is given the side is decided by reconstruction residual,
    otherwise the right-hand side is preferred.
    """
    branches = estimates.branches
    scores = {b.label: estimates[b].pivot_cond for b in branches}
    best_cond = min(scores.values())
    tied = [b for b in branches if scores[b.label] == best_cond]
    if X is not None and len(tied) > 1:
        al = _Aligner(X, estimates)
        pick = min(tied, key=lambda b: (al.assemble((b, b, b))[1], b))
    else:
        al = _Aligner(X if X is not None else _reconstruct(estimates[tied[0]]), estimates)
        pick = min(tied, key=lambda b: (SIDE_ORDER[b.side], b))
    return al.result("con-ps", (pick,) * 3, scores)


def _reconstruct(triple: FactorTriple):
    return np.einsum("il,jl,kl->ijk", *triple.factors)


def dummyr_select(estimates: SecsiEstimates, seed=0, X=None) -> SelectionResult:
    """Uniformly random branch per factor from a seeded generator."""
    rng = np.random.default_rng(seed)
    branches = estimates.branches
    picks = rng.integers(0, len(branches), size=3)
    combo = tuple(branches[i] for i in picks)
    ref = X if X is not None else _reconstruct(estimates[combo[0]])
    return _Aligner(ref, estimates).result("dummyr", combo, {"draw": [int(i) for i in picks]})


def select(scheme: str, X, d: int, estimates: Optional[SecsiEstimates] = None, noise=None, seed=0) -> SelectionResult:
    """Dispatch to one of :data:`SCHEMES`."""
    estimates = estimates if estimates is not None else run_all(X, d)
    if scheme == "pas":
        return pas_select(X, d, noise, estimates)
    if scheme == "bm":
        return bm_select(X, estimates)
    if scheme == "rec-ps":
        return rec_ps_select(X, estimates)
    if scheme == "con-ps":
        return con_ps_select(estimates, X)
    if scheme == "dummyr":
        return dummyr_select(estimates, seed, X)
    raise ValueError(f"unknown selection scheme {scheme!r}; expected one of {SCHEMES}")


__all__ = [
    "ALL_BRANCHES",
    "SCHEMES",
    "SelectionResult",
    "pas_select",
    "bm_select",
    "rec_ps_select",
    "con_ps_select",
    "dummyr_select",
    "select",
    "argmin_branch",
]
