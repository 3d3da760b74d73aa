"""Approximate joint eigenvalue decomposition (JEVD) by similarity.

Given square slices ``S_1..S_K`` the solver searches for an invertible ``T``
such that every ``T^{-1} S_k T`` is as diagonal as possible, minimizing the
indirect least-squares cost ``sum_k ||Off(T^{-1} S_k T)||_F^2``.

The iteration works on the transformed slices ``M_k = T^{-1} S_k T`` and
applies elementary updates ``T <- T (I + Theta)`` with ``Theta`` off-diagonal.
To first order the ``(i, j)`` entry of ``M_k`` moves by
``theta_ij * (m_ii - m_jj)``, which gives a closed-form least-squares step per
index pair.  Cyclic sweeps over the pairs are followed by Gauss-Newton steps
over all off-diagonal entries jointly, so that noisy problems settle on the
minimizer of the full cost.  Every update is accepted only if it does not
increase the cost.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

_MAX_HALVINGS = 30


class JevdError(RuntimeError):
    pass


@dataclass(frozen=True)
class JevdOptions:
    max_sweeps: int = 100
    tol: float = 1e-12
    seed: int = 0
    #: a sweep whose largest accepted step is below this counts as stalled
    step_tol: float = 1e-15


@dataclass
class JevdSolution:
    T: np.ndarray
    diagonals: np.ndarray  # (K, d): diag(T^{-1} S_k T)
    residual: float
    relative_residual: float
    iterations: int
    status: str  # "converged", "stalled" or "max_sweeps"
    history: list = field(default_factory=list)

    @property
    def D(self) -> np.ndarray:
        """Diagonal matrices ``D_k`` stacked along the first axis."""
        K, d = self.diagonals.shape
        out = np.zeros((K, d, d), dtype=self.diagonals.dtype)
        out[:, np.arange(d), np.arange(d)] = self.diagonals
        return out


def _as_slices(slices) -> np.ndarray:
    S = np.asarray(slices, dtype=np.complex128)
    if S.ndim == 2:
        S = S[None]
    if S.ndim != 3 or S.shape[1] != S.shape[2] or S.shape[0] < 1:
        raise ValueError("slices must be a non-empty stack of square matrices")
    return S


def _offdiag_cost(M: np.ndarray) -> float:
    d = M.shape[-1]
    mask = ~np.eye(d, dtype=bool)
    return float(np.sum(np.abs(M[:, mask]) ** 2))


def _transform(T, S):
    return np.linalg.solve(T[None], S @ T[None])


def indirect_ls_cost(T, slices) -> float:
    """``sum_k ||Off(T^{-1} S_k T)||_F^2``."""
    T = np.asarray(T, dtype=np.complex128)
    S = _as_slices(slices)
    if np.linalg.cond(T) > 1e14:
        raise np.linalg.LinAlgError("transform matrix is singular")
    return _offdiag_cost(_transform(T, S))


def _normalize_columns(T):
    T = T / np.linalg.norm(T, axis=0)
    idx = np.argmax(np.abs(T), axis=0)
    piv = T[idx, np.arange(T.shape[1])]
    return T * (np.abs(piv) / piv)


def _initial_transform(S, rng):
    """Eigenvectors of the candidate matrix giving the lowest starting cost.

    Candidates are every slice and one seeded random combination of all
    slices; ill-conditioned eigenvector matrices are discarded.
    """
    K, d, _ = S.shape
    weights = rng.standard_normal(K)
    candidates = list(S) + [np.tensordot(weights, S, axes=1)]
    best, best_cost = np.eye(d, dtype=np.complex128), _offdiag_cost(S)
    for C in candidates:
        if not np.all(np.isfinite(C)):
            continue
        _, V = np.linalg.eig(C)
        if np.linalg.cond(V) > 1e10:
            continue
        V = _normalize_columns(V.astype(np.complex128))
        cost = _offdiag_cost(_transform(V, S))
        if cost < best_cost:
            best, best_cost = V, cost
    return best


def _pair_sweep(T, M, cost):
    K, d, _ = M.shape
    max_step = 0.0
    for i in range(d - 1):
        for j in range(i + 1, d):
            delta = M[:, i, i] - M[:, j, j]
            den = float(np.sum(np.abs(delta) ** 2))
            if den <= 1e-300:
                continue
            a = -np.sum(delta.conj() * M[:, i, j]) / den
            b = np.sum(delta.conj() * M[:, j, i]) / den
            t = 1.0
            for _ in range(_MAX_HALVINGS):
                G = np.eye(d, dtype=np.complex128)
                G[i, j] = t * a
                G[j, i] = t * b
                if abs(1.0 - t * t * a * b) < 1e-8:
                    t *= 0.5
                    continue
                T_new = T @ G
                M_new = np.linalg.solve(G[None], M @ G[None])
                c_new = _offdiag_cost(M_new)
                if c_new <= cost:
                    T, M, cost = T_new, M_new, c_new
                    max_step = max(max_step, t * abs(a), t * abs(b))
                    break
                t *= 0.5
    return T, M, cost, max_step


def _gauss_newton_step(T, M, cost, S):
    K, d, _ = M.shape
    eye = np.eye(d)
    off_idx = np.flatnonzero(~np.eye(d, dtype=bool).ravel(order="F"))
    rows, rhs = [], []
    for Mk in M:
        # vec(Off(Mk Theta - Theta Mk)) restricted to off-diagonal entries
        op = np.kron(eye, Mk) - np.kron(Mk.T, eye)
        rows.append(op[np.ix_(off_idx, off_idx)])
        rhs.append(-Mk.ravel(order="F")[off_idx])
    theta, *_ = np.linalg.lstsq(np.vstack(rows), np.concatenate(rhs), rcond=None)
    Theta = np.zeros(d * d, dtype=np.complex128)
    Theta[off_idx] = theta
    Theta = Theta.reshape((d, d), order="F")
    t = 1.0
    for _ in range(_MAX_HALVINGS):
        G = np.eye(d) + t * Theta
        if np.linalg.cond(G) < 1e8:
            T_new = T @ G
            M_new = _transform(T_new, S)
            c_new = _offdiag_cost(M_new)
            if c_new <= cost:
                return T_new, M_new, c_new, t * float(np.max(np.abs(theta), initial=0.0))
        t *= 0.5
    return T, M, cost, 0.0


def solve_jevd(slices, options: JevdOptions | None = None, **kwargs) -> JevdSolution:
    """Jointly diagonalize ``slices`` by a similarity transform.

    Parameters
    ----------
    slices : array_like, shape (K, d, d)
        Matrices assumed to share an eigenvector matrix.
    options : JevdOptions, optional
        Sweep limit, relative cost tolerance and the seed used for the
        random-combination initial guess. Keyword arguments override fields.

    Returns
    -------
    JevdSolution
        ``T`` has unit-norm columns whose largest-magnitude entry is real
        positive; ``diagonals[k]`` is ``diag(T^{-1} S_k T)``.
    """
    opts = options or JevdOptions()
    if kwargs:
        opts = JevdOptions(**{**opts.__dict__, **kwargs})
    S = _as_slices(slices)
    K, d, _ = S.shape
    ref = float(np.sum(np.abs(S) ** 2))
    if ref == 0.0 or d == 1:
        T = np.eye(d, dtype=np.complex128)
        diags = np.array([np.diag(Sk) for Sk in S])
        return JevdSolution(T, diags, 0.0, 0.0, 0, "converged", [0.0])

    rng = np.random.default_rng(opts.seed)
    T = _initial_transform(S, rng)
    M = _transform(T, S)
    cost = _offdiag_cost(M)
    history = [cost]
    status = "max_sweeps"
    sweeps = 0
    polishing = False
    while sweeps < opts.max_sweeps:
        if cost <= opts.tol * ref:
            status = "converged"
            break
        sweeps += 1
        if not polishing:
            T, M, new_cost, step = _pair_sweep(T, M, cost)
            if step < 1e-8 or new_cost > 0.5 * cost:
                polishing = True
        else:
            T, M, new_cost, step = _gauss_newton_step(T, M, cost, S)
        if new_cost > cost:
            raise JevdError("cost increased during a sweep")
        cost_drop = cost - new_cost
        cost = new_cost
        history.append(cost)
        if polishing and (step < opts.step_tol or (cost_drop <= 1e-15 * cost and step < 1e-9)):
            status = "stalled"
            break
    else:
        if cost <= opts.tol * ref:
            status = "converged"

    T = _normalize_columns(T)
    M = _transform(T, S)
    residual = _offdiag_cost(M)
    diags = np.diagonal(M, axis1=1, axis2=2).copy()
    if status == "max_sweeps":
        logger.warning("JEVD stopped after %d sweeps, relative residual %.3g", sweeps, residual / ref)
    return JevdSolution(
        T=T,
        diagonals=diags,
        residual=residual,
        relative_residual=residual / ref,
        iterations=sweeps,
        status=status,
        history=history,
    )
