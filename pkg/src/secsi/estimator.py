"""scikit-learn style wrappers around the SECSI pipeline."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_factors, check_rank, check_tensor3
from .branches import ALL_BRANCHES, run_all
from .jevd import JevdOptions
from .perturb import NoiseModel, analyze_all, plugin_analysis
from .selection import SCHEMES, select
from .tensor_ops import cp_construct


class SECSI(BaseEstimator):
    """Approximate rank-``rank`` CP decomposition of a 3-way tensor.

    All six branches are computed and one estimate per factor is kept
    according to ``selection``.

    Parameters
    ----------
    rank : int
        Number of rank-one components.
    selection : {"pas", "bm", "rec-ps", "con-ps", "dummyr"}
        Scheme choosing the final estimates.
    noise_variance : float
        White noise variance handed to the plug-in analysis; it does not
        change the choice.
    max_sweeps, tol : JEVD stopping rules.
    random_state : int
        Seed for the JEVD start and for ``dummyr``.

    Attributes
    ----------
    factors_ : tuple of ndarray
        Selected factor matrices; amplitudes are absorbed into the first.
    estimates_ : SecsiEstimates
    selection_ : SelectionResult
    """

    def __init__(self, rank=1, selection="pas", noise_variance=1.0, max_sweeps=100, tol=1e-12, random_state=0):
        self.rank = rank
        self.selection = selection
        self.noise_variance = noise_variance
        self.max_sweeps = max_sweeps
        self.tol = tol
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_tensor3(X)
        d = check_rank(self.rank, X.shape)
        if self.selection not in SCHEMES:
            raise ValueError(f"selection must be one of {SCHEMES}, got {self.selection!r}")
        opts = JevdOptions(max_sweeps=self.max_sweeps, tol=self.tol, seed=self.random_state)
        self.estimates_ = run_all(X, d, opts)
        if not self.estimates_.triples:
            raise RuntimeError(f"all branches failed: {self.estimates_.failures}")
        noise = NoiseModel.white(self.noise_variance)
        self.selection_ = select(self.selection, X, d, self.estimates_, noise, seed=self.random_state)
        self.factors_ = self.selection_.triple.factors
        self.n_components_ = d
        self.tensor_shape_ = X.shape
        return self

    def transform(self, X=None):
        """Selected factor matrices of the fitted tensor."""
        check_is_fitted(self, "factors_")
        if X is not None and check_tensor3(X).shape != self.tensor_shape_:
            raise ValueError("tensor shape differs from the fitted one")
        return self.factors_

    def fit_transform(self, X, y=None):
        return self.fit(X).factors_

    def inverse_transform(self, factors=None):
        """Tensor rebuilt from ``factors`` (default: the fitted ones)."""
        check_is_fitted(self, "factors_")
        F = self.factors_ if factors is None else check_factors(factors, self.tensor_shape_, self.n_components_)
        return cp_construct(*F)

    def score(self, X, y=None):
        """Negative relative reconstruction error."""
        X = check_tensor3(X)
        return -float(np.linalg.norm(X - self.inverse_transform()) / np.linalg.norm(X))


class PerformancePredictor(BaseEstimator):
    """Closed-form rMSFE of every branch and factor.

    With ``factors`` passed to :meth:`fit` the tensor is taken as noiseless
    and the prediction is exact to first order; otherwise noisy quantities
    are plugged in.  Predictions are returned as a ``(6, 3)`` array ordered
    like :data:`secsi.ALL_BRANCHES`; failed branches give NaN rows.
    """

    def __init__(self, rank=1, noise_variance=1.0):
        self.rank = rank
        self.noise_variance = noise_variance

    def _predict(self, X, factors=None):
        X = check_tensor3(X)
        d = check_rank(self.rank, X.shape)
        noise = NoiseModel.white(self.noise_variance)
        if factors is not None:
            pred = analyze_all(X, d, check_factors(factors, X.shape, d), noise)
        else:
            pred = plugin_analysis(X, d, run_all(X, d), noise)
        out = np.full((len(ALL_BRANCHES), 3), np.nan)
        for i, b in enumerate(ALL_BRANCHES):
            if b in pred:
                out[i] = pred[b]
        return out

    def fit(self, X, y=None, factors=None):
        self.predictions_ = self._predict(X, factors)
        self.branches_ = [b.label for b in ALL_BRANCHES]
        return self

    def predict(self, X=None, factors=None):
        if X is None:
            check_is_fitted(self, "predictions_")
            return self.predictions_
        return self._predict(X, factors)

    def best_branches(self):
        """Branch label with the smallest predicted error for each factor."""
        check_is_fitted(self, "predictions_")
        idx = np.nanargmin(self.predictions_, axis=0)
        return [self.branches_[i] for i in idx]
