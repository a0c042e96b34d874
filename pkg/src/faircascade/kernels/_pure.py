"""Pure-numpy kernel backend.

Mirrors the compiled backend in ``_native.pyx``. All inputs must be
C-contiguous float64 arrays; matrices are symmetric (d, d), item feature
blocks are (m, d) with one row per item.
"""

import numpy as np


def ucb_scores(feats, theta, minv, alpha):
    """Score every item: estimate + alpha * confidence width.

    Returns (scores, widths) where widths[i] = sqrt(x_i . minv . x_i)
    (clamped at 0 against rounding) and scores[i] = x_i . theta +
    alpha * widths[i].
    """
    est = feats @ theta
    proj = feats @ minv
    qf = np.einsum("ij,ij->i", proj, feats)
    widths = np.sqrt(np.maximum(qf, 0.0))
    return est + alpha * widths, widths


def quad_forms(feats, minv):
    """Quadratic form x_i . minv . x_i for every row of feats."""
    proj = feats @ minv
    return np.einsum("ij,ij->i", proj, feats)


def quad_form(minv, x):
    """Quadratic form x . minv . x for a single vector."""
    return float(x @ minv @ x)


def rank1_update_inplace(m, x, c):
    """m += c * outer(x, x), in place."""
    m += c * np.outer(x, x)


def sherman_morrison_inplace(minv, x, c):
    """Rank-1 inverse update of minv (the inverse of some PD matrix M).

    Applies minv -= c * (minv x)(minv x)^T / (1 + c x.minv.x), which keeps
    minv equal to inv(M + c outer(x, x)). Returns the denominator
    1 + c x.minv.x; when it is <= 0 the matrix is left untouched so the
    caller can raise.
    """
    y = minv @ x
    denom = 1.0 + c * float(x @ y)
    if denom <= 0.0:
        return denom
    minv -= (c / denom) * np.outer(y, y)
    return denom
