"""Ratings ingestion, preprocessing, and matrix factorization.

The pipeline: parse a ratings file (``user::item::rating::timestamp`` or
tab/comma separated, auto-detected), binarize at rating >= 4, keep the
most active users (and optionally most rated items), split each user's
interactions 50/50 into train/test, factorize the train half with
alternating least squares, and derive item merit as the mean estimated
relevance across users.
"""

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataFormatError, FactorizationError

logger = logging.getLogger(__name__)

MERIT_FLOOR = 1e-6
FLOAT_FORMAT = "%.6g"


@dataclass
class RatingsTable:
    """Deduplicated (user, item, rating) triples; latest rating wins."""

    user_ids: np.ndarray
    item_ids: np.ndarray
    ratings: np.ndarray
    malformed_lines: int = 0

    def __len__(self) -> int:
        return self.user_ids.shape[0]


@dataclass
class BinaryInteractions:
    """(user, item, label) triples with label 1 for ratings >= 4."""

    user_ids: np.ndarray
    item_ids: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return self.user_ids.shape[0]


@dataclass
class FactorizationResult:
    """Embeddings from alternating least squares plus the run settings."""

    user_ids: np.ndarray
    item_ids: np.ndarray
    user_embeddings: np.ndarray
    item_embeddings: np.ndarray
    d: int
    regularization: float
    iterations: int
    seed: int
    objective_history: list


def _detect_delimiter(line: str) -> str:
    if "::" in line:
        return "::"
    if "\t" in line:
        return "\t"
    return ","


def parse_ratings(path) -> RatingsTable:
    """Load a ratings file, counting and skipping malformed lines.

    A line is malformed when it has fewer than three fields, non-numeric
    ids or rating, or a rating outside [1, 5]. More than 1% malformed
    lines raises DataFormatError. Duplicate (user, item) pairs keep the
    latest entry (by timestamp when present, else file order).
    """
    latest: dict = {}
    malformed = 0
    parsed = 0
    delimiter = None
    with open(path, "r", encoding="utf-8") as handle:
        for index, raw in enumerate(handle):
            line = raw.strip()
            if not line:
                continue
            if delimiter is None:
                delimiter = _detect_delimiter(line)
            parsed += 1
            fields = line.split(delimiter)
            try:
                user = int(fields[0])
                item = int(fields[1])
                rating = float(fields[2])
                timestamp = int(fields[3]) if len(fields) > 3 else None
            except (ValueError, IndexError):
                malformed += 1
                continue
            if not 1.0 <= rating <= 5.0:
                malformed += 1
                continue
            sort_key = timestamp if timestamp is not None else index
            previous = latest.get((user, item))
            if previous is None or sort_key >= previous[0]:
                latest[(user, item)] = (sort_key, rating)
    if parsed == 0:
        logger.warning("ratings file %s is empty", path)
    elif malformed > 0.01 * parsed:
        raise DataFormatError(
            f"{malformed} of {parsed} lines malformed in {path} (over the 1% budget)"
        )
    elif malformed:
        logger.warning("skipped %d malformed lines in %s", malformed, path)
    users = np.fromiter((u for u, _ in latest), dtype=np.int64, count=len(latest))
    items = np.fromiter((i for _, i in latest), dtype=np.int64, count=len(latest))
    ratings = np.fromiter((v for _, v in latest.values()), dtype=np.float64, count=len(latest))
    return RatingsTable(users, items, ratings, malformed_lines=malformed)


def binarize(ratings: RatingsTable) -> BinaryInteractions:
    """Ratings of 4 and 5 become label 1, everything else 0."""
    return BinaryInteractions(
        user_ids=ratings.user_ids.copy(),
        item_ids=ratings.item_ids.copy(),
        labels=(ratings.ratings >= 4.0).astype(np.int64),
    )


def _top_by_count(ids: np.ndarray, top: int) -> np.ndarray:
    unique, counts = np.unique(ids, return_counts=True)
    order = np.lexsort((unique, -counts))
    return unique[order[:top]]


def filter_active(
    data: BinaryInteractions, top_users: int, top_items: int | None = None
) -> BinaryInteractions:
    """Keep interactions of the most active users (and most rated items).

    Both rankings are computed on the input data; ties break toward the
    smaller id. Asking for more users/items than exist keeps everything.
    """
    mask = np.isin(data.user_ids, _top_by_count(data.user_ids, top_users))
    if top_items is not None:
        mask &= np.isin(data.item_ids, _top_by_count(data.item_ids, top_items))
    return BinaryInteractions(
        user_ids=data.user_ids[mask],
        item_ids=data.item_ids[mask],
        labels=data.labels[mask],
    )


def split_train_test(data: BinaryInteractions, seed: int):
    """Partition each user's interactions 50/50 uniformly at random.

    Odd interaction counts send the extra row to train. Deterministic for
    a given seed.
    """
    rng = np.random.default_rng(seed)
    train_mask = np.zeros(len(data), dtype=bool)
    for user in np.unique(data.user_ids):
        rows = np.flatnonzero(data.user_ids == user)
        perm = rng.permutation(rows)
        n_train = (rows.size + 1) // 2
        train_mask[perm[:n_train]] = True

    def subset(mask):
        return BinaryInteractions(
            user_ids=data.user_ids[mask],
            item_ids=data.item_ids[mask],
            labels=data.labels[mask],
        )

    return subset(train_mask), subset(~train_mask)


def factorize(
    train: BinaryInteractions,
    d: int,
    regularization: float = 0.1,
    iterations: int = 20,
    seed: int = 0,
) -> FactorizationResult:
    """Alternating least squares on the observed binary labels.

    Minimizes sum over observed (u, i) of (label - u_emb . i_emb)^2 plus
    regularization * (||U||_F^2 + ||V||_F^2). The objective is monotone
    non-increasing across sweeps; three consecutive increases raise
    FactorizationError. Bitwise reproducible for a given seed.
    """
    if d < 1:
        raise ConfigError(f"embedding dimension must be >= 1, got {d}")
    if len(train) == 0:
        raise ConfigError("cannot factorize an empty interaction set")

    user_ids, user_index = np.unique(train.user_ids, return_inverse=True)
    item_ids, item_index = np.unique(train.item_ids, return_inverse=True)
    labels = train.labels.astype(np.float64)

    by_user = _group_rows(user_index, user_ids.size)
    by_item = _group_rows(item_index, item_ids.size)

    rng = np.random.default_rng(seed)
    user_emb = rng.standard_normal((user_ids.size, d)) * 0.1
    item_emb = rng.standard_normal((item_ids.size, d)) * 0.1

    reg_eye = regularization * np.eye(d)

    def solve_side(target, target_groups, source, source_index):
        for row, obs in enumerate(target_groups):
            feats = source[source_index[obs]]
            gram = feats.T @ feats + reg_eye
            rhs = feats.T @ labels[obs]
            target[row] = np.linalg.solve(gram, rhs)

    def objective():
        predicted = np.einsum(
            "ij,ij->i", user_emb[user_index], item_emb[item_index]
        )
        fit = float(np.sum((labels - predicted) ** 2))
        penalty = regularization * (
            float(np.sum(user_emb**2)) + float(np.sum(item_emb**2))
        )
        return fit + penalty

    history = []
    increases = 0
    for _ in range(iterations):
        solve_side(user_emb, by_user, item_emb, item_index)
        solve_side(item_emb, by_item, user_emb, user_index)
        value = objective()
        if history and value > history[-1]:
            increases += 1
            if increases >= 3:
                raise FactorizationError(
                    f"objective increased over 3 consecutive sweeps (last {value:.6g})"
                )
        else:
            increases = 0
        history.append(value)

    return FactorizationResult(
        user_ids=user_ids,
        item_ids=item_ids,
        user_embeddings=user_emb,
        item_embeddings=item_emb,
        d=d,
        regularization=regularization,
        iterations=iterations,
        seed=seed,
        objective_history=history,
    )


def _group_rows(index: np.ndarray, size: int) -> list:
    order = np.argsort(index, kind="stable")
    boundaries = np.searchsorted(index[order], np.arange(size + 1))
    return [order[boundaries[i] : boundaries[i + 1]] for i in range(size)]


def compute_merit(fr: FactorizationResult) -> np.ndarray:
    """Mean estimated relevance of each item across users, floored.

    The floor keeps merit strictly positive so merit-weighted exposure
    notions never divide by zero.
    """
    mean_user = fr.user_embeddings.mean(axis=0)
    return np.maximum(MERIT_FLOOR, fr.item_embeddings @ mean_user)


def write_item_features(path, item_ids: np.ndarray, features: np.ndarray) -> None:
    """CSV with header item_id,f_1..f_d."""
    d = features.shape[1]
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["item_id"] + [f"f_{j + 1}" for j in range(d)])
        for item, row in zip(item_ids, features):
            writer.writerow([int(item)] + [FLOAT_FORMAT % value for value in row])


def read_item_features(path):
    """Inverse of write_item_features; returns (item_ids, features)."""
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        d = len(header) - 1
        ids, rows = [], []
        for record in reader:
            ids.append(int(record[0]))
            rows.append([float(value) for value in record[1:]])
    if not ids:
        raise DataFormatError(f"no feature rows in {path}")
    features = np.array(rows, dtype=np.float64).reshape(len(ids), d)
    return np.array(ids, dtype=np.int64), features


def write_merit(path, item_ids: np.ndarray, merit: np.ndarray) -> None:
    """CSV with header item_id,merit."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["item_id", "merit"])
        for item, value in zip(item_ids, merit):
            writer.writerow([int(item), FLOAT_FORMAT % value])


def read_merit(path):
    """Inverse of write_merit; returns (item_ids, merit)."""
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        next(reader)
        ids, values = [], []
        for record in reader:
            ids.append(int(record[0]))
            values.append(float(record[1]))
    if not ids:
        raise DataFormatError(f"no merit rows in {path}")
    return np.array(ids, dtype=np.int64), np.array(values, dtype=np.float64)


def write_interactions(path, interactions: BinaryInteractions) -> None:
    """CSV with header user_id,item_id,label."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["user_id", "item_id", "label"])
        for user, item, label in zip(
            interactions.user_ids, interactions.item_ids, interactions.labels
        ):
            writer.writerow([int(user), int(item), int(label)])


def read_interactions(path) -> BinaryInteractions:
    """Inverse of write_interactions."""
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        next(reader)
        rows = [(int(r[0]), int(r[1]), int(r[2])) for r in reader]
    if not rows:
        raise DataFormatError(f"no interaction rows in {path}")
    array = np.array(rows, dtype=np.int64)
    return BinaryInteractions(array[:, 0], array[:, 1], array[:, 2])


def positives_by_user(test: BinaryInteractions) -> dict:
    """Positive item ids per user in the held-out half."""
    result: dict = {}
    positive = test.labels == 1
    for user, item in zip(test.user_ids[positive], test.item_ids[positive]):
        result.setdefault(int(user), set()).add(int(item))
    return result


def user_activity_ranking(data: BinaryInteractions) -> np.ndarray:
    """User ids sorted by interaction count descending, ties ascending id."""
    unique, counts = np.unique(data.user_ids, return_counts=True)
    order = np.lexsort((unique, -counts))
    return unique[order]
