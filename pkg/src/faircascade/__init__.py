"""Exposure-aware linear cascading bandits with a simulation harness.

Subpackages/modules: ``kernels`` (compiled hot loops with a numpy
fallback), ``linalg`` (rank-1 PD updates and incremental inverses),
``bandit`` (policies), ``environment`` (cascade click simulation),
``data`` (ratings preprocessing and factorization), ``metrics``
(exposure fairness and regret diagnostics), ``experiment``/``cli``
(orchestration).
"""

from .kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
