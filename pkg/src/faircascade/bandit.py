"""Cascading-bandit policies over a linear relevance model.

Three policies share the same state and scoring path:

* the classic linear cascading UCB policy (``update_unweighted``),
* the exposure-aware variant (``update``), which scales the reward of a
  clicked item and the penalty of an examined-but-unclicked item by a
  position weight, and
* a post-processing re-ranker (``ears_rerank``) that randomizes the tail
  of the list below a relevance cutoff.

State is a ridge-regression accumulator: a covariance matrix M starting
at lambda * I, its incrementally maintained inverse, and a response
vector B. Items are referenced by catalog index; catalogs keep their
items sorted by external id, so "ascending index" and "ascending id"
agree (ties in top-k selection break toward the lower index).
"""

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import kernels, linalg
from .errors import ConfigError, SingularMatrixError

# Incremental inverses are recomputed from M after this many rank-1
# updates to bound accumulated rounding drift.
DRIFT_CORRECTION_INTERVAL = 1000


class WeightKind(enum.Enum):
    """Position-weight families for the exposure-aware reward."""

    CONSTANT = "constant"
    LOG = "log"
    RBP = "rbp"
    LINEAR = "linear"


@dataclass(frozen=True)
class WeightFunctionSpec:
    """Position weight F(k) applied to examined items.

    beta is the patience parameter of the RBP and Linear families and is
    ignored by the others. log_base switches the Log family away from the
    natural logarithm when set.
    """

    kind: WeightKind
    beta: float = 0.0
    log_base: float | None = None


def weight(spec: WeightFunctionSpec, k: int) -> float:
    """Evaluate the position weight F(k) at 1-based list position k.

    Constant -> 1, Log -> ln(1 + k), RBP -> beta^(k-1), Linear -> beta * k.
    Raises ConfigError when the configured weight is not positive.
    """
    if k < 1:
        raise ValueError(f"position must be >= 1, got {k}")
    if spec.kind is WeightKind.CONSTANT:
        return 1.0
    if spec.kind is WeightKind.LOG:
        if spec.log_base is None:
            return math.log(1 + k)
        return math.log(1 + k) / math.log(spec.log_base)
    if spec.kind is WeightKind.RBP:
        value = spec.beta ** (k - 1)
    else:  # LINEAR
        value = spec.beta * k
    if value <= 0.0:
        raise ConfigError(
            f"{spec.kind.value} weight at position {k} is {value}; beta must be positive"
        )
    return value


def weight_vector(spec: WeightFunctionSpec, k_max: int) -> np.ndarray:
    """F(k) for k = 1..k_max as a float64 array."""
    return np.array([weight(spec, k) for k in range(1, k_max + 1)], dtype=np.float64)


def gamma_admissible_bound(spec: WeightFunctionSpec, k_max: int) -> float:
    """Largest penalty coefficient compatible with the regret guarantee.

    Returns min over k in [1, k_max] of 1/F(k) - 1. A negative value means
    no nonnegative penalty coefficient satisfies the guarantee for this
    weight family; runs still proceed, with a diagnostic.
    """
    if k_max < 1:
        raise ValueError(f"k_max must be >= 1, got {k_max}")
    return min(1.0 / weight(spec, k) - 1.0 for k in range(1, k_max + 1))


@dataclass
class PolicyConfig:
    """Hyperparameters shared by the policies.

    alpha scales the exploration bonus, sigma the learning rate (rank-1
    covariance updates use sigma^-2), lam the ridge regularizer, gamma
    the penalty on examined-but-unclicked items, k the list size.
    """

    k: int
    alpha: float
    gamma: float = 0.0
    lam: float = 1.0
    sigma: float = 1.0
    weight_fn: WeightFunctionSpec = field(
        default_factory=lambda: WeightFunctionSpec(WeightKind.CONSTANT)
    )

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"list size k must be >= 1, got {self.k}")
        if self.alpha < 0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        if self.gamma < 0:
            raise ConfigError(f"gamma must be >= 0, got {self.gamma}")
        if self.lam <= 0:
            raise ConfigError(f"lambda must be > 0, got {self.lam}")
        if self.sigma <= 0:
            raise ConfigError(f"sigma must be > 0, got {self.sigma}")

    @cached_property
    def position_weights(self) -> np.ndarray:
        """F(k) for the configured list size, validated positive."""
        return weight_vector(self.weight_fn, self.k)


@dataclass
class BanditState:
    """Per-user ridge accumulator: M, its inverse, and B."""

    m: np.ndarray
    m_inv: np.ndarray
    b: np.ndarray
    update_count: int = 0

    @classmethod
    def fresh(cls, d: int, lam: float) -> "BanditState":
        """Initial state M = lambda * I, B = 0."""
        return cls(
            m=linalg.scaled_identity(d, lam),
            m_inv=linalg.scaled_identity(d, 1.0 / lam),
            b=np.zeros(d, dtype=np.float64),
        )

    @property
    def dim(self) -> int:
        return self.b.shape[0]

    def apply_examined(self, x: np.ndarray, c: float) -> None:
        """Rank-1 update of M (and its inverse) with coefficient c."""
        kernels.rank1_update_inplace(self.m, x, c)
        denom = kernels.sherman_morrison_inplace(self.m_inv, x, c)
        if denom <= 0.0:
            raise SingularMatrixError(
                f"inverse update denominator {denom} <= 0 after {self.update_count} updates"
            )
        self.update_count += 1
        if self.update_count % DRIFT_CORRECTION_INTERVAL == 0:
            self.m_inv = linalg.direct_inverse(self.m)


@dataclass
class RecommendationList:
    """Ordered list of catalog indices with their selection scores.

    Lists produced by ``recommend`` have non-increasing scores with ties
    broken by ascending index; re-ranked lists keep scores aligned to
    items but not sorted.
    """

    items: np.ndarray
    scores: np.ndarray

    def __len__(self) -> int:
        return self.items.shape[0]


@dataclass(frozen=True)
class Feedback:
    """Click position in 1..K, or K+1 for no click."""

    click_position: int


def estimate_theta(state: BanditState, sigma: float) -> np.ndarray:
    """Point estimate of the preference vector: sigma^-2 M^-1 B."""
    return (state.m_inv @ state.b) * sigma**-2


def ucb_score(state: BanditState, x: np.ndarray, alpha: float, sigma: float) -> float:
    """Optimistic score of one item: theta_hat . x + alpha ||x||_{M^-1}.

    Scores are used raw; they are not clipped to [0, 1].
    """
    theta = estimate_theta(state, sigma)
    qf = kernels.quad_form(state.m_inv, linalg.as_vector(x))
    return float(theta @ x) + alpha * math.sqrt(max(qf, 0.0))


def top_k_by_score(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest scores, descending, ties by ascending index."""
    m = scores.shape[0]
    if k < m:
        threshold = np.partition(scores, m - k)[m - k]
        above = np.flatnonzero(scores > threshold)
        ties = np.flatnonzero(scores == threshold)[: k - above.size]
        selected = np.concatenate([above, ties])
    else:
        selected = np.arange(m)
    order = np.lexsort((selected, -scores[selected]))
    return selected[order]


def recommend(
    state: BanditState, features: np.ndarray, config: PolicyConfig
) -> RecommendationList:
    """Select the k items with the largest optimistic scores.

    features is the full (m, d) catalog feature block; requires m >= k.
    """
    m = features.shape[0]
    if m < config.k:
        raise ConfigError(f"catalog has {m} items, fewer than list size {config.k}")
    theta = estimate_theta(state, config.sigma)
    scores, _ = kernels.ucb_scores(features, theta, state.m_inv, config.alpha)
    items = top_k_by_score(scores, config.k)
    return RecommendationList(items=items, scores=scores[items])


def selected_widths(
    state: BanditState, features: np.ndarray, items: np.ndarray, alpha: float
) -> np.ndarray:
    """Exploration widths alpha ||x||_{M^-1} of the given items."""
    qf = kernels.quad_forms(np.ascontiguousarray(features[items]), state.m_inv)
    return alpha * np.sqrt(np.maximum(qf, 0.0))


def _validate_click(fb: Feedback, list_len: int) -> None:
    if not 1 <= fb.click_position <= list_len + 1:
        raise ValueError(
            f"click position {fb.click_position} outside 1..{list_len + 1}"
        )


def update(
    state: BanditState,
    rec_list: RecommendationList,
    fb: Feedback,
    config: PolicyConfig,
    features: np.ndarray,
) -> None:
    """Exposure-aware parameter update after observing a click position.

    For each examined position k (1..min(K, click)): M gains
    sigma^-2 outer(x, x); B gains F(k) x for the clicked item and loses
    gamma F(k) x for examined-but-unclicked items. Unobserved items below
    the click are untouched.
    """
    _validate_click(fb, len(rec_list))
    weights = config.position_weights
    c = config.sigma**-2
    click = fb.click_position
    for pos in range(1, min(len(rec_list), click) + 1):
        x = features[rec_list.items[pos - 1]]
        state.apply_examined(x, c)
        if click == pos:
            state.b += weights[pos - 1] * x
        elif config.gamma:
            state.b -= config.gamma * weights[pos - 1] * x


def update_unweighted(
    state: BanditState,
    rec_list: RecommendationList,
    fb: Feedback,
    config: PolicyConfig,
    features: np.ndarray,
) -> None:
    """Classic cascading update: every examined item grows M, the clicked
    item adds its raw features to B, unclicked items leave B alone."""
    _validate_click(fb, len(rec_list))
    c = config.sigma**-2
    click = fb.click_position
    for pos in range(1, min(len(rec_list), click) + 1):
        x = features[rec_list.items[pos - 1]]
        state.apply_examined(x, c)
        if click == pos:
            state.b += x


def ears_rerank(
    rec_list: RecommendationList,
    theta_hat: np.ndarray,
    features: np.ndarray,
    relevance_cutoff: float | None,
    rng: np.random.Generator,
) -> RecommendationList:
    """Shuffle the less relevant part of a list to the bottom.

    Items with estimated relevance theta_hat . x >= cutoff keep their
    relative order at the head; the rest are uniformly permuted at the
    tail. A cutoff of None uses the median relevance of the list, keeping
    about half of it stable.
    """
    rel = features[rec_list.items] @ theta_hat
    cutoff = float(np.median(rel)) if relevance_cutoff is None else relevance_cutoff
    keep = rel >= cutoff
    head = np.flatnonzero(keep)
    tail = np.flatnonzero(~keep)
    order = np.concatenate([head, rng.permutation(tail)]).astype(np.intp)
    return RecommendationList(
        items=rec_list.items[order], scores=rec_list.scores[order]
    )
