"""Small dense linear algebra for symmetric positive-definite matrices.

Matrices are (d, d) float64 C-contiguous numpy arrays with symmetric
entries; vectors are (d,) float64. Dimensions up to 128 are supported.
The functions here are the pure (copying) contract surface; the hot loop
uses the in-place kernels directly.
"""

import numpy as np

from . import kernels
from .errors import SingularMatrixError


def as_matrix(m) -> np.ndarray:
    return np.ascontiguousarray(m, dtype=np.float64)


def as_vector(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.float64)


def scaled_identity(d: int, scale: float) -> np.ndarray:
    """scale * I, the usual ridge initialization."""
    return np.eye(d, dtype=np.float64) * scale


def rank1_update(m: np.ndarray, x: np.ndarray, c: float) -> np.ndarray:
    """Return m + c * outer(x, x).

    c must be positive; the result is symmetric and differs from m by a
    PSD matrix.
    """
    if c <= 0.0:
        raise ValueError(f"rank-1 coefficient must be positive, got {c}")
    if m.shape != (x.shape[0], x.shape[0]):
        raise ValueError(f"dimension mismatch: matrix {m.shape}, vector {x.shape}")
    out = as_matrix(m).copy()
    kernels.rank1_update_inplace(out, as_vector(x), c)
    return out


def sherman_morrison_inverse_update(minv: np.ndarray, x: np.ndarray, c: float) -> np.ndarray:
    """Return inv(M + c * outer(x, x)) given minv = inv(M).

    Uses minv - c (minv x)(minv x)^T / (1 + c x.minv.x). Raises
    SingularMatrixError when the denominator is not positive.
    """
    if c <= 0.0:
        raise ValueError(f"rank-1 coefficient must be positive, got {c}")
    if minv.shape != (x.shape[0], x.shape[0]):
        raise ValueError(f"dimension mismatch: matrix {minv.shape}, vector {x.shape}")
    out = as_matrix(minv).copy()
    denom = kernels.sherman_morrison_inplace(out, as_vector(x), c)
    if denom <= 0.0:
        raise SingularMatrixError(
            f"inverse update denominator {denom} <= 0; matrix would lose positive definiteness"
        )
    return out


def quad_form(minv: np.ndarray, x: np.ndarray) -> float:
    """x . minv . x (nonnegative for PSD minv)."""
    if minv.shape != (x.shape[0], x.shape[0]):
        raise ValueError(f"dimension mismatch: matrix {minv.shape}, vector {x.shape}")
    return float(kernels.quad_form(as_matrix(minv), as_vector(x)))


def mat_vec(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Matrix-vector product."""
    if m.shape[1] != v.shape[0]:
        raise ValueError(f"dimension mismatch: matrix {m.shape}, vector {v.shape}")
    return m @ v


def direct_inverse(m: np.ndarray) -> np.ndarray:
    """Inverse by direct factorization, symmetrized.

    Used for the periodic drift correction of incrementally maintained
    inverses.
    """
    inv = np.linalg.inv(m)
    return np.ascontiguousarray((inv + inv.T) / 2.0)
