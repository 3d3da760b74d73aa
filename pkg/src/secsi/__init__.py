"""SECSI: semi-algebraic CP decomposition with closed-form error prediction.

The package splits into layers that mirror the computation:

* :mod:`secsi.tensor_ops` -- unfoldings, mode products and structural matrices
* :mod:`secsi.subspace` -- per-mode SVD partitions and the truncated HOSVD
* :mod:`secsi.jevd` -- joint eigenvalue decomposition by similarity
* :mod:`secsi.branches` -- the six SECSI solution paths
* :mod:`secsi.perturb` -- first-order error prediction per branch and factor
* :mod:`secsi.selection` -- choosing final estimates among the branches
* :mod:`secsi.harness` -- Monte Carlo experiments
* :mod:`secsi.estimator` -- scikit-learn style front end
"""

__version__ = "0.1.0"

from .branches import ALL_BRANCHES, BranchId, FactorTriple, SecsiEstimates, run_all, run_branch  # noqa: E402
from .estimator import SECSI, PerformancePredictor  # noqa: E402
from .jevd import JevdOptions, solve_jevd  # noqa: E402
from .metrics import empirical_rmsfe  # noqa: E402
from .perturb import NoiseModel, analyze_all, analyze_branch, build_l_chain, prepare_inputs  # noqa: E402
from .selection import select  # noqa: E402
from .tensor_ops import cp_construct  # noqa: E402

__all__ = [
    "__version__",
    "ALL_BRANCHES",
    "BranchId",
    "FactorTriple",
    "JevdOptions",
    "NoiseModel",
    "PerformancePredictor",
    "SECSI",
    "SecsiEstimates",
    "analyze_all",
    "analyze_branch",
    "build_l_chain",
    "cp_construct",
    "empirical_rmsfe",
    "prepare_inputs",
    "run_all",
    "run_branch",
    "select",
    "solve_jevd",
]
