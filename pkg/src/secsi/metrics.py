"""Factor error measures with the CP permutation and scaling ambiguity removed."""
from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import linear_sum_assignment


def _check_pair(F, F_hat):
    F = np.asarray(F)
    F_hat = np.asarray(F_hat)
    if F.shape != F_hat.shape or F.ndim != 2:
        raise ValueError(f"factor shapes differ: {F.shape} vs {F_hat.shape}")
    if np.any(np.linalg.norm(F_hat, axis=0) == 0):
        raise ValueError("estimated factor has a zero column")
    return F, F_hat


def _column_scales(F, G):
    # per-column scalar minimizing ||f - g * s||
    return np.sum(G.conj() * F, axis=0) / np.sum(np.abs(G) ** 2, axis=0)


def _error_for_permutation(F, F_hat, perm):
    G = F_hat[:, perm]
    return float(np.linalg.norm(F - G * _column_scales(F, G)) ** 2)


def match_columns(F, F_hat) -> np.ndarray:
    """Permutation ``perm`` so that ``F_hat[:, perm]`` best matches ``F``.

    After optimal per-column scaling the error of pairing ``f_i`` with
    ``g_j`` is ``||f_i||^2 (1 - |corr_ij|^2)``; the pairing minimizing the
    total is an assignment problem.
    """
    F, F_hat = _check_pair(F, F_hat)
    Fn = F / np.where(np.linalg.norm(F, axis=0) > 0, np.linalg.norm(F, axis=0), 1.0)
    Gn = F_hat / np.linalg.norm(F_hat, axis=0)
    corr = np.abs(Fn.conj().T @ Gn) ** 2
    cost = np.linalg.norm(F, axis=0)[:, None] ** 2 * (1.0 - corr)
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(F.shape[1], dtype=int)
    perm[rows] = cols
    return perm


def resolve_ambiguity(F, F_hat) -> np.ndarray:
    """``F_hat`` with columns permuted and scaled to best match ``F``."""
    F, F_hat = _check_pair(F, F_hat)
    G = F_hat[:, match_columns(F, F_hat)]
    return G * _column_scales(F, G)


def empirical_rmsfe(F, F_hat) -> float:
    """Relative squared factor error ``min ||F - F_hat P||^2 / ||F||^2`` over monomial ``P``."""
    F, F_hat = _check_pair(F, F_hat)
    return _error_for_permutation(F, F_hat, match_columns(F, F_hat)) / float(np.linalg.norm(F) ** 2)


def empirical_rmsfe_bruteforce(F, F_hat) -> float:
    """Same as :func:`empirical_rmsfe` by enumerating all column permutations."""
    F, F_hat = _check_pair(F, F_hat)
    best = min(
        _error_for_permutation(F, F_hat, list(p)) for p in itertools.permutations(range(F.shape[1]))
    )
    return best / float(np.linalg.norm(F) ** 2)
