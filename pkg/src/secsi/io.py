"""JSON containers for tensors, matrices and covariances.

Tensors are stored as ``{"dims": [M1, M2, M3], "real": [...], "imag": [...]}``
with entries listed in mode-1 vectorization order, i.e. ``T[i, j, k]``
(0-based) at position ``i + M1 * (j * M3 + k)``.  Python's float repr
round-trips exactly, so a tensor written and read back is bit-identical.
"""
from __future__ import annotations

import json

import numpy as np

from ._validation import check_tensor3
from .tensor_ops import fold, unfold, unvec, vec


def tensor_to_json(T) -> dict:
    T = check_tensor3(T)
    v = vec(unfold(T, 1))
    return {"dims": list(T.shape), "real": v.real.tolist(), "imag": v.imag.tolist()}


def tensor_from_json(data: dict) -> np.ndarray:
    try:
        dims = [int(m) for m in data["dims"]]
        real = np.asarray(data["real"], dtype=float)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed tensor JSON: {exc}") from None
    if len(dims) != 3 or min(dims) < 1:
        raise ValueError("tensor JSON needs three positive dims")
    imag = np.asarray(data.get("imag", np.zeros(real.shape)), dtype=float)
    M = dims[0] * dims[1] * dims[2]
    if real.shape != (M,) or imag.shape != (M,):
        raise ValueError(f"tensor JSON holds {real.size} entries, dims {dims} need {M}")
    v = real + 1j * imag
    return check_tensor3(fold(unvec(v, (dims[0], M // dims[0])), 1, dims))


def matrix_to_json(A) -> dict:
    A = np.asarray(A)
    return {"shape": list(A.shape), "real": A.real.tolist(), "imag": np.imag(A).tolist()}


def matrix_from_json(data: dict) -> np.ndarray:
    try:
        real = np.asarray(data["real"], dtype=float)
        imag = np.asarray(data.get("imag", np.zeros(real.shape)), dtype=float)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed matrix JSON: {exc}") from None
    if real.ndim != 2 or real.shape != imag.shape:
        raise ValueError("matrix JSON needs equally shaped 2-D real and imag parts")
    return real + 1j * imag


def _read_json(path):
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: invalid JSON ({exc})") from None


def load_tensor(path) -> np.ndarray:
    return tensor_from_json(_read_json(path))


def save_tensor(path, T):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(tensor_to_json(T), fh)
        fh.write("\n")


def load_factors(path) -> tuple:
    """Factor matrices from ``{"F1": matrix, "F2": matrix, "F3": matrix}``."""
    data = _read_json(path)
    try:
        return tuple(matrix_from_json(data[k]) for k in ("F1", "F2", "F3"))
    except KeyError as exc:
        raise ValueError(f"{path}: missing factor {exc}") from None


def load_covariance(path) -> np.ndarray:
    """Covariance from a ``.npy`` file or a matrix JSON container."""
    if str(path).endswith(".npy"):
        return np.load(path, allow_pickle=False)
    return matrix_from_json(_read_json(path))
