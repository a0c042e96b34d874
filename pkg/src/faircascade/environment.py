"""Simulated users following the cascade click model.

Two ground-truth modes: dataset-backed binary attraction (deterministic
clicks on held-out positives) and synthetic linear attraction (Bernoulli
clicks with probability clamp(theta* . x, 0, 1)). Also provides the
optimal list reward needed for regret accounting.
"""

import enum
from dataclasses import dataclass

import numpy as np

from .bandit import Feedback, RecommendationList


class GroundTruthMode(enum.Enum):
    DATASET_BINARY = "dataset_binary"
    SYNTHETIC_LINEAR = "synthetic_linear"


@dataclass(frozen=True)
class ItemCatalog:
    """Item universe: external ids, unit-norm feature rows, merit scores.

    item_ids are sorted ascending, so catalog index order equals external
    id order; all policy-level tie-breaking happens on indices.
    """

    item_ids: np.ndarray
    features: np.ndarray
    merit: np.ndarray

    @property
    def count(self) -> int:
        return self.item_ids.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @classmethod
    def build(cls, item_ids, features, merit) -> "ItemCatalog":
        """Sort by external id and normalize feature rows to unit length."""
        item_ids = np.asarray(item_ids, dtype=np.int64)
        order = np.argsort(item_ids, kind="stable")
        features = unit_rows(np.asarray(features, dtype=np.float64)[order])
        return cls(
            item_ids=item_ids[order],
            features=np.ascontiguousarray(features),
            merit=np.asarray(merit, dtype=np.float64)[order],
        )


def unit_rows(features: np.ndarray) -> np.ndarray:
    """Scale each row to unit L2 norm; rows that are exactly zero stay zero."""
    norms = np.linalg.norm(features, axis=1, keepdims=True)
    safe = np.where(norms < 1e-12, 1.0, norms)
    return features / safe


@dataclass(frozen=True)
class UserGroundTruth:
    """True attraction behind one simulated user.

    Dataset mode stores the set of positive catalog indices; synthetic
    mode stores the preference vector (norm at most 1) and the cached
    per-item attraction probabilities.
    """

    mode: GroundTruthMode
    positives: frozenset | None = None
    theta_star: np.ndarray | None = None
    omega: np.ndarray | None = None

    @classmethod
    def from_positives(cls, positives) -> "UserGroundTruth":
        return cls(mode=GroundTruthMode.DATASET_BINARY, positives=frozenset(positives))

    @classmethod
    def from_theta(cls, theta_star: np.ndarray, features: np.ndarray) -> "UserGroundTruth":
        norm = float(np.linalg.norm(theta_star))
        if norm > 1.0 + 1e-9:
            raise ValueError(f"preference vector norm {norm} exceeds 1")
        omega = np.clip(features @ theta_star, 0.0, 1.0)
        return cls(
            mode=GroundTruthMode.SYNTHETIC_LINEAR,
            theta_star=np.asarray(theta_star, dtype=np.float64),
            omega=omega,
        )


def sample_preference_vector(d: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform direction on the unit sphere, scaled to norm 0.9."""
    while True:
        v = rng.standard_normal(d)
        norm = np.linalg.norm(v)
        if norm > 1e-12:
            return 0.9 * v / norm


def simulate_click(
    user: UserGroundTruth, rec_list: RecommendationList, rng: np.random.Generator
) -> Feedback:
    """Scan the list top-down and click the first attractive item.

    Returns the 1-based click position, or K+1 when nothing attracts.
    Items below the click are never inspected: dataset mode performs one
    membership test per examined position, synthetic mode draws one
    Bernoulli per examined position.
    """
    items = rec_list.items
    if user.mode is GroundTruthMode.DATASET_BINARY:
        for pos in range(len(items)):
            if int(items[pos]) in user.positives:
                return Feedback(pos + 1)
    else:
        omega = user.omega
        for pos in range(len(items)):
            if rng.random() < omega[items[pos]]:
                return Feedback(pos + 1)
    return Feedback(len(items) + 1)


def attraction_vector(user: UserGroundTruth, count: int) -> np.ndarray:
    """True attraction probability of every catalog item."""
    if user.mode is GroundTruthMode.DATASET_BINARY:
        omega = np.zeros(count, dtype=np.float64)
        if user.positives:
            omega[np.fromiter(user.positives, dtype=np.int64)] = 1.0
        return omega
    return user.omega


def expected_reward_from_probs(probs: np.ndarray) -> float:
    """Expected cascade reward 1 - prod(1 - p) of a list of attractions.

    Factors are multiplied in a canonical (sorted) order so that lists
    holding the same attraction multiset get bit-identical rewards.
    """
    q = np.sort(1.0 - np.asarray(probs, dtype=np.float64))
    return 1.0 - float(np.prod(q))


def expected_list_reward(user: UserGroundTruth, items: np.ndarray, count: int) -> float:
    """Expected reward of a concrete list under the user's true attraction."""
    omega = attraction_vector(user, count)
    return expected_reward_from_probs(omega[items])


def optimal_reward(user: UserGroundTruth, catalog: ItemCatalog, k: int) -> float:
    """Expected reward of the best list: the k items of largest attraction.

    In dataset mode this is 1 exactly when the user has any positive item.
    """
    omega = attraction_vector(user, catalog.count)
    if k >= omega.shape[0]:
        top = omega
    else:
        top = np.partition(omega, omega.shape[0] - k)[omega.shape[0] - k :]
    return expected_reward_from_probs(top)


def realized_reward(fb: Feedback, k: int) -> int:
    """1 when the click landed inside the list, 0 on no-click."""
    return 1 if fb.click_position <= k else 0
