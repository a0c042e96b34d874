"""Exposure accounting, Gini-based fairness, and regret diagnostics.

Exposure comes in four notions: binary appearance counts, position-
discounted sums (1/log2(1+k) at position k), and each of those divided
elementwise by item merit. Fairness of a notion is 1 minus the Gini
index of its exposure distribution, so 1 is fairest.

The ledger stores integer per-position counts, which makes merging
partial ledgers exact and order-independent; the float exposure views
are derived on demand.
"""

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import UndefinedDistributionError


class ExposureNotion(enum.Enum):
    BINARY = "b"
    POSITION = "p"
    BINARY_MERIT = "bm"
    POSITION_MERIT = "pm"


def position_discounts(k: int) -> np.ndarray:
    """Discount 1/log2(1+pos) for positions 1..k."""
    return 1.0 / np.log2(np.arange(1, k + 1) + 1.0)


class ExposureLedger:
    """Accumulated per-item exposure over recorded recommendation lists.

    Internally an (items, k) integer matrix of position counts; the sum
    of binary exposure over items always equals lists_recorded * k.
    """

    def __init__(self, num_items: int, k: int, merit: np.ndarray | None = None):
        self.position_counts = np.zeros((num_items, k), dtype=np.int64)
        self.merit = None if merit is None else np.asarray(merit, dtype=np.float64)
        self._discounts = position_discounts(k)

    @property
    def num_items(self) -> int:
        return self.position_counts.shape[0]

    @property
    def k(self) -> int:
        return self.position_counts.shape[1]

    @property
    def lists_recorded(self) -> int:
        return int(self.position_counts.sum()) // self.k

    def record_list(self, items: np.ndarray) -> None:
        """Count one displayed list; items[j] sits at position j+1."""
        if items.shape[0] != self.k:
            raise ValueError(f"expected list of {self.k} items, got {items.shape[0]}")
        self.position_counts[items, np.arange(self.k)] += 1

    def merge(self, other: "ExposureLedger") -> None:
        """Fold another ledger's counts into this one (exact, order-free)."""
        self.position_counts += other.position_counts

    def copy_counts(self) -> np.ndarray:
        return self.position_counts.copy()

    def binary_exposure(self) -> np.ndarray:
        return self.position_counts.sum(axis=1)

    def position_exposure(self) -> np.ndarray:
        return self.position_counts.astype(np.float64) @ self._discounts


def exposure_distribution(ledger: ExposureLedger, notion: ExposureNotion) -> np.ndarray:
    """Per-item exposure values under the requested notion."""
    if notion is ExposureNotion.BINARY:
        return ledger.binary_exposure().astype(np.float64)
    if notion is ExposureNotion.POSITION:
        return ledger.position_exposure()
    if ledger.merit is None:
        raise ValueError(f"notion {notion.value} needs a merit vector on the ledger")
    if notion is ExposureNotion.BINARY_MERIT:
        return ledger.binary_exposure() / ledger.merit
    return ledger.position_exposure() / ledger.merit


def gini(values) -> float:
    """Population Gini index of a nonnegative distribution.

    With values sorted ascending, G = sum_i (2i - m - 1) x_(i) / (m sum x).
    0 for a uniform distribution, (m-1)/m for a one-hot one. All-zero
    input has no defined uniformity and raises.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 1 or x.size < 1:
        raise ValueError("gini expects a nonempty 1-d array")
    if np.any(x < 0):
        raise ValueError("gini expects nonnegative values")
    total = float(x.sum())
    if total <= 0.0:
        raise UndefinedDistributionError("gini of an all-zero distribution is undefined")
    xs = np.sort(x)
    m = xs.size
    coefficients = 2.0 * np.arange(1, m + 1) - m - 1
    # Shifting by any constant is exact in the mean (the coefficients sum
    # to zero) and makes uniform inputs return exactly 0.
    shifted = xs - xs[m // 2]
    return float(coefficients @ shifted / (m * total))


def fairness(ledger: ExposureLedger, notion: ExposureNotion) -> float:
    """1 - Gini of the exposure distribution; 1 is fairest."""
    return 1.0 - gini(exposure_distribution(ledger, notion))


def avg_clicks(total_clicks: int, num_users: int, num_rounds: int) -> float:
    """Clicks normalized by users and rounds; 1 means a click every round."""
    if num_users <= 0 or num_rounds <= 0:
        raise ValueError("num_users and num_rounds must be positive")
    return total_clicks / (num_users * num_rounds)


def regret_step(optimal: float, achieved: float) -> float:
    """Per-round regret increment, clamped at zero."""
    return max(0.0, optimal - achieved)


def alpha_condition(sigma: float, d: int, n: int, k: int, theta_norm: float) -> float:
    """Smallest exploration degree backed by the regret guarantee.

    (1/sigma) sqrt(d ln(1 + nK/(d sigma^2)) + 2 ln n) + ||theta*||.
    """
    inside = d * math.log(1.0 + n * k / (d * sigma**2)) + 2.0 * math.log(n)
    return math.sqrt(inside) / sigma + theta_norm


def regret_bound(alpha: float, k: int, d: int, n: int, sigma: float) -> float:
    """Closed-form worst-case cumulative regret after n rounds.

    2 alpha K sqrt(d n ln(1 + nK/(d sigma^2)) / ln(1 + 1/sigma^2)) + 1.
    """
    if n == 0:
        return 1.0
    numerator = d * n * math.log(1.0 + n * k / (d * sigma**2))
    denominator = math.log(1.0 + 1.0 / sigma**2)
    return 2.0 * alpha * k * math.sqrt(numerator / denominator) + 1.0


def delta_exposure(e_new: np.ndarray, e_base: np.ndarray) -> np.ndarray:
    """Symmetric percentage change per item, in [-200, 200].

    100 (new - base) / ((new + base) / 2); items with zero exposure on
    both sides report 0.
    """
    e_new = np.asarray(e_new, dtype=np.float64)
    e_base = np.asarray(e_base, dtype=np.float64)
    mean = (e_new + e_base) / 2.0
    out = np.zeros_like(mean)
    nonzero = mean != 0.0
    out[nonzero] = 100.0 * (e_new[nonzero] - e_base[nonzero]) / mean[nonzero]
    return out


def mean_exploration(per_user_widths) -> float:
    """Average width: mean over each user's items, then over users."""
    per_user = [float(np.mean(w)) for w in per_user_widths]
    return float(np.mean(per_user))


@dataclass
class RoundRecord:
    """Metrics snapshot after a given round, on exposure accumulated so far."""

    round: int
    cum_clicks: int
    cum_regret: float
    mean_exploration: float
    equality_b: float
    equality_p: float
    equity_b: float
    equity_p: float


@dataclass
class MetricsSeries:
    """Ordered snapshot records for one run."""

    records: list = field(default_factory=list)

    def append(self, record: RoundRecord) -> None:
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)
