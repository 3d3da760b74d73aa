"""Input checks shared by the estimator front end and the CLI."""
from __future__ import annotations

import numpy as np

from .tensor_ops import as_tensor3


def check_tensor3(X, name: str = "X") -> np.ndarray:
    """Complex 3-way array with finite entries."""
    try:
        T = as_tensor3(X)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"{name}: {exc}") from None
    if not np.all(np.isfinite(T)):
        raise ValueError(f"{name} contains NaN or infinite entries")
    return T


def check_rank(d, dims) -> int:
    if isinstance(d, bool) or not isinstance(d, (int, np.integer)):
        raise ValueError(f"rank must be an integer, got {d!r}")
    d = int(d)
    if not 1 <= d <= min(dims):
        raise ValueError(f"rank {d} must lie in [1, {min(dims)}] for a tensor of shape {tuple(dims)}")
    return d


def check_factors(factors, dims, d) -> tuple:
    if len(factors) != 3:
        raise ValueError("expected three factor matrices")
    out = []
    for r, (F, M) in enumerate(zip(factors, dims), start=1):
        F = np.asarray(F, dtype=np.complex128)
        if F.shape != (M, d):
            raise ValueError(f"factor {r} has shape {F.shape}, expected {(M, d)}")
        if not np.all(np.isfinite(F)):
            raise ValueError(f"factor {r} has non-finite entries")
        out.append(F)
    return tuple(out)
