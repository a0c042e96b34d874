"""End-to-end experiment orchestration.

A run wires the pieces together: build a catalog and simulated users
(synthetic or dataset-backed), advance every user one recommendation
round at a time, and snapshot accumulated metrics into CSV files.

Determinism: every random stream is derived from the master seed (setup
streams for catalog/split/factorization, one click stream per user), and
all cross-user aggregation happens either on integer counts or on arrays
indexed by user, so results are byte-identical for any worker count.
"""

import csv
import itertools
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace

import numpy as np

from . import bandit, data, environment, metrics
from .errors import ConfigError

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.6g"

ALGORITHMS = ("linucb", "ealinucb", "ears")
WEIGHT_KINDS = tuple(kind.value for kind in bandit.WeightKind)

# Mirrors the hyperparameter grids used throughout the experiments.
DEFAULT_ALPHA_GRID = (0.25, 0.75, 1.0, 2.0, 5.0)
DEFAULT_GAMMA_GRID = (0.0, 0.001, 0.005, 0.01, 0.05, 0.1, 0.2)
DEFAULT_BETA_LINEAR = 0.05
DEFAULT_BETA_RBP = 0.9

SUMMARY_CONFIG_FIELDS = (
    "mode",
    "algorithm",
    "weight_kind",
    "beta",
    "alpha",
    "gamma",
    "lam",
    "sigma",
    "d",
    "k",
    "rounds",
    "num_users",
    "num_items",
    "seed",
    "snapshot_interval",
)
SUMMARY_METRIC_FIELDS = (
    "gamma_bound",
    "theoretical_regret_bound",
    "avg_clicks",
    "cum_regret",
    "equality_b",
    "equality_p",
    "equity_b",
    "equity_p",
)

ROUNDS_HEADER = (
    "round",
    "cum_clicks",
    "cum_regret",
    "mean_exploration",
    "equality_b",
    "equality_p",
    "equity_b",
    "equity_p",
)


@dataclass
class ExperimentConfig:
    """Everything one run needs; flags and config files map onto this."""

    mode: str = "synthetic"  # synthetic | dataset
    ratings: str | None = None
    features_path: str | None = None
    merit_path: str | None = None
    top_users: int = 1000
    top_items: int | None = None
    num_items: int = 100
    d: int = 10
    k: int = 5
    algorithm: str = "linucb"
    weight_kind: str = "constant"
    beta: float | None = None
    alpha: float = 0.25
    gamma: float = 0.0
    lam: float = 1.0
    sigma: float = 1.0
    rounds: int = 50000
    num_users: int = 1000
    seed: int = 0
    snapshot_interval: int = 50
    out_dir: str = "out"
    workers: int = 1
    log_recommendations: bool = False
    relevance_cutoff: float | None = None
    mf_regularization: float = 0.1
    mf_iterations: int = 20

    def validate(self) -> None:
        if self.mode not in ("synthetic", "dataset"):
            raise ConfigError(f"mode must be synthetic or dataset, got {self.mode!r}")
        if self.mode == "dataset" and not self.ratings:
            raise ConfigError("ratings: a dataset run needs a ratings file")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.weight_kind not in WEIGHT_KINDS:
            raise ConfigError(
                f"weight_kind must be one of {WEIGHT_KINDS}, got {self.weight_kind!r}"
            )
        for name in ("d", "k", "rounds", "num_users", "snapshot_interval", "workers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name}: must be >= 1, got {getattr(self, name)}")
        if self.mode == "synthetic" and self.num_items < self.k:
            raise ConfigError(f"num_items: need at least k={self.k} items")
        for name in ("lam", "sigma"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name}: must be > 0, got {getattr(self, name)}")
        for name in ("alpha", "gamma"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name}: must be >= 0, got {getattr(self, name)}")

    def weight_spec(self) -> bandit.WeightFunctionSpec:
        kind = bandit.WeightKind(self.weight_kind)
        beta = self.beta
        if beta is None:
            beta = DEFAULT_BETA_RBP if kind is bandit.WeightKind.RBP else DEFAULT_BETA_LINEAR
        return bandit.WeightFunctionSpec(kind=kind, beta=beta)

    def policy(self) -> bandit.PolicyConfig:
        spec = (
            self.weight_spec()
            if self.algorithm == "ealinucb"
            else bandit.WeightFunctionSpec(bandit.WeightKind.CONSTANT)
        )
        gamma = self.gamma if self.algorithm == "ealinucb" else 0.0
        return bandit.PolicyConfig(
            k=self.k,
            alpha=self.alpha,
            gamma=gamma,
            lam=self.lam,
            sigma=self.sigma,
            weight_fn=spec,
        )


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Config file (JSON object) with optional flag overrides on top."""
    with open(path, "r", encoding="utf-8") as handle:
        raw = json.load(handle)
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    config = ExperimentConfig(**raw)
    if overrides:
        config = replace(config, **overrides)
    return config


def snapshot_rounds(n: int, interval: int) -> list:
    """Rounds at which metrics are recorded: 1, every interval, and n."""
    marks = {1, n}
    marks.update(range(interval, n + 1, interval))
    return sorted(marks)


@dataclass
class _World:
    """Catalog plus simulated users, ready to run."""

    catalog: environment.ItemCatalog
    user_ids: np.ndarray
    truths: list
    optimal: np.ndarray  # per-user optimal reward (expected or realized)
    expected_mode: bool  # True: regret uses expected rewards under true omega


def _build_synthetic_world(config: ExperimentConfig) -> _World:
    root = np.random.SeedSequence(config.seed)
    setup_ss, _ = root.spawn(2)
    rng = np.random.default_rng(setup_ss)
    features = environment.unit_rows(rng.standard_normal((config.num_items, config.d)))
    item_ids = np.arange(config.num_items, dtype=np.int64)
    truths = []
    for _ in range(config.num_users):
        theta = environment.sample_preference_vector(config.d, rng)
        truths.append(environment.UserGroundTruth.from_theta(theta, features))
    # Merit mirrors the dataset definition: mean true relevance across the
    # simulated users, floored to stay positive.
    omega_matrix = np.stack([t.omega for t in truths])
    merit = np.maximum(data.MERIT_FLOOR, omega_matrix.mean(axis=0))
    catalog = environment.ItemCatalog.build(item_ids, features, merit)
    optimal = np.array(
        [environment.optimal_reward(t, catalog, config.k) for t in truths]
    )
    user_ids = np.arange(config.num_users, dtype=np.int64)
    return _World(catalog, user_ids, truths, optimal, expected_mode=True)


def _build_dataset_world(config: ExperimentConfig) -> _World:
    root = np.random.SeedSequence(config.seed)
    setup_ss, _ = root.spawn(2)
    split_seed, mf_seed = (int(s.generate_state(1)[0]) for s in setup_ss.spawn(2))

    table = data.parse_ratings(config.ratings)
    interactions = data.filter_active(
        data.binarize(table), config.top_users, config.top_items
    )
    if len(interactions) == 0:
        raise ConfigError("ratings: no interactions left after filtering")
    train, test = data.split_train_test(interactions, split_seed)

    if config.features_path and config.merit_path:
        item_ids, features = data.read_item_features(config.features_path)
        merit_ids, merit = data.read_merit(config.merit_path)
        if not np.array_equal(np.sort(item_ids), np.sort(merit_ids)):
            raise ConfigError("features_path/merit_path: item id sets differ")
        by_id = np.argsort(merit_ids)
        merit = merit[by_id][np.searchsorted(merit_ids[by_id], item_ids)]
    else:
        fr = data.factorize(
            train,
            config.d,
            regularization=config.mf_regularization,
            iterations=config.mf_iterations,
            seed=mf_seed,
        )
        item_ids, features, merit = fr.item_ids, fr.item_embeddings, data.compute_merit(fr)
    if features.shape[1] != config.d:
        raise ConfigError(
            f"d: item features have dimension {features.shape[1]}, expected {config.d}"
        )
    catalog = environment.ItemCatalog.build(item_ids, features, merit)
    if catalog.count < config.k:
        raise ConfigError(f"k: catalog has only {catalog.count} items")

    ranking = data.user_activity_ranking(interactions)
    selected = np.sort(ranking[: config.num_users])
    positives = data.positives_by_user(test)
    id_set = catalog.item_ids
    truths = []
    for user in selected:
        indices = []
        for item in positives.get(int(user), ()):
            pos = int(np.searchsorted(id_set, item))
            if pos < id_set.size and id_set[pos] == item:
                indices.append(pos)
        truths.append(environment.UserGroundTruth.from_positives(indices))
    optimal = np.array(
        [environment.optimal_reward(t, catalog, config.k) for t in truths]
    )
    return _World(catalog, selected, truths, optimal, expected_mode=False)


def build_world(config: ExperimentConfig) -> _World:
    if config.mode == "synthetic":
        return _build_synthetic_world(config)
    return _build_dataset_world(config)


def _user_click_streams(config: ExperimentConfig, num_users: int) -> list:
    root = np.random.SeedSequence(config.seed)
    _, clicks_ss = root.spawn(2)
    return [np.random.default_rng(ss) for ss in clicks_ss.spawn(num_users)]


@dataclass
class _ChunkResult:
    ledger_snapshots: list  # (m, k) int64 counts per snapshot
    clicks: np.ndarray  # (chunk, snapshots) int64 cumulative
    regret: np.ndarray  # (chunk, snapshots) float64 cumulative
    widths: np.ndarray  # (chunk, snapshots) float64, that round's mean width
    item_clicks: np.ndarray  # (m,) int64
    rec_rows: list  # (round, user_index, position, item_index, clicked)


def _run_chunk(
    config: ExperimentConfig,
    world: _World,
    policy: bandit.PolicyConfig,
    user_slice: np.ndarray,
    rngs: list,
    snapshots: list,
) -> _ChunkResult:
    features = world.catalog.features
    count = world.catalog.count
    k = config.k
    algorithm = config.algorithm
    exposure = metrics.ExposureLedger(count, k)
    n_snap = len(snapshots)
    result = _ChunkResult(
        ledger_snapshots=[],
        clicks=np.zeros((user_slice.size, n_snap), dtype=np.int64),
        regret=np.zeros((user_slice.size, n_snap), dtype=np.float64),
        widths=np.zeros((user_slice.size, n_snap), dtype=np.float64),
        item_clicks=np.zeros(count, dtype=np.int64),
        rec_rows=[],
    )
    states = [bandit.BanditState.fresh(config.d, config.lam) for _ in user_slice]
    cum_clicks = np.zeros(user_slice.size, dtype=np.int64)
    cum_regret = np.zeros(user_slice.size, dtype=np.float64)
    snapshot_set = set(snapshots)
    snap_index = 0
    for t in range(1, config.rounds + 1):
        at_snapshot = t in snapshot_set
        for local, user in enumerate(user_slice):
            state = states[local]
            truth = world.truths[user]
            rng = rngs[user]
            rec = bandit.recommend(state, features, policy)
            if algorithm == "ears":
                theta = bandit.estimate_theta(state, policy.sigma)
                rec = bandit.ears_rerank(
                    rec, theta, features, config.relevance_cutoff, rng
                )
            if at_snapshot:
                result.widths[local, snap_index] = float(
                    np.mean(bandit.selected_widths(state, features, rec.items, config.alpha))
                )
            fb = environment.simulate_click(truth, rec, rng)
            clicked = fb.click_position <= k
            if world.expected_mode:
                achieved = environment.expected_list_reward(truth, rec.items, count)
            else:
                achieved = float(environment.realized_reward(fb, k))
            cum_regret[local] += metrics.regret_step(float(world.optimal[user]), achieved)
            if clicked:
                cum_clicks[local] += 1
                result.item_clicks[rec.items[fb.click_position - 1]] += 1
            exposure.record_list(rec.items)
            if config.log_recommendations:
                for position in range(k):
                    result.rec_rows.append(
                        (
                            t,
                            int(user),
                            position + 1,
                            int(rec.items[position]),
                            1 if fb.click_position == position + 1 else 0,
                        )
                    )
            if algorithm == "ealinucb":
                bandit.update(state, rec, fb, policy, features)
            else:
                bandit.update_unweighted(state, rec, fb, policy, features)
        if at_snapshot:
            result.clicks[:, snap_index] = cum_clicks
            result.regret[:, snap_index] = cum_regret
            result.ledger_snapshots.append(exposure.copy_counts())
            snap_index += 1
    return result


def run_experiment(config: ExperimentConfig):
    """Execute one full run and write its CSV outputs.

    Returns (summary dict, MetricsSeries). Output files in config.out_dir:
    rounds.csv, summary.csv, exposure.csv, and recommendations.csv when
    recommendation logging is on.
    """
    config.validate()
    policy = config.policy()
    world = build_world(config)
    num_users = world.user_ids.size
    if num_users == 0:
        raise ConfigError("num_users: no users available")

    weight_spec = config.weight_spec()
    gamma_bound = bandit.gamma_admissible_bound(
        weight_spec if config.algorithm == "ealinucb" else policy.weight_fn, config.k
    )
    theory_bound = metrics.regret_bound(
        config.alpha, config.k, config.d, config.rounds, config.sigma
    )
    if config.algorithm == "ealinucb" and config.gamma > gamma_bound:
        logger.warning(
            "penalty gamma=%g exceeds the admissible bound %g for this weight "
            "function; the regret guarantee does not apply",
            config.gamma,
            gamma_bound,
        )
    logger.info("theoretical regret bound for this configuration: %.6g", theory_bound)

    snapshots = snapshot_rounds(config.rounds, config.snapshot_interval)
    rngs = _user_click_streams(config, num_users)
    user_indices = np.arange(num_users)
    chunks = [c for c in np.array_split(user_indices, config.workers) if c.size]

    if len(chunks) == 1:
        results = [_run_chunk(config, world, policy, chunks[0], rngs, snapshots)]
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            results = list(
                pool.map(
                    lambda c: _run_chunk(config, world, policy, c, rngs, snapshots),
                    chunks,
                )
            )

    # Merge chunk results; all reductions are order-independent (integer
    # counts) or happen on arrays assembled by absolute user index.
    n_snap = len(snapshots)
    count = world.catalog.count
    clicks = np.zeros((num_users, n_snap), dtype=np.int64)
    regret = np.zeros((num_users, n_snap), dtype=np.float64)
    widths = np.zeros((num_users, n_snap), dtype=np.float64)
    item_clicks = np.zeros(count, dtype=np.int64)
    merged_counts = [np.zeros((count, config.k), dtype=np.int64) for _ in range(n_snap)]
    rec_rows = []
    for chunk, res in zip(chunks, results):
        clicks[chunk] = res.clicks
        regret[chunk] = res.regret
        widths[chunk] = res.widths
        item_clicks += res.item_clicks
        for s in range(n_snap):
            merged_counts[s] += res.ledger_snapshots[s]
        rec_rows.extend(res.rec_rows)
    rec_rows.sort(key=lambda row: (row[0], row[1], row[2]))

    series = metrics.MetricsSeries()
    ledger = metrics.ExposureLedger(count, config.k, merit=world.catalog.merit)
    for s, round_number in enumerate(snapshots):
        ledger.position_counts = merged_counts[s]
        series.append(
            metrics.RoundRecord(
                round=round_number,
                cum_clicks=int(clicks[:, s].sum()),
                cum_regret=float(regret[:, s].sum()),
                mean_exploration=float(widths[:, s].mean()),
                equality_b=metrics.fairness(ledger, metrics.ExposureNotion.BINARY),
                equality_p=metrics.fairness(ledger, metrics.ExposureNotion.POSITION),
                equity_b=metrics.fairness(ledger, metrics.ExposureNotion.BINARY_MERIT),
                equity_p=metrics.fairness(ledger, metrics.ExposureNotion.POSITION_MERIT),
            )
        )

    final = series.records[-1]
    summary = {
        "mode": config.mode,
        "algorithm": config.algorithm,
        "weight_kind": config.weight_kind if config.algorithm == "ealinucb" else "-",
        "beta": weight_spec.beta if config.algorithm == "ealinucb" else 0.0,
        "alpha": config.alpha,
        "gamma": config.gamma if config.algorithm == "ealinucb" else 0.0,
        "lam": config.lam,
        "sigma": config.sigma,
        "d": config.d,
        "k": config.k,
        "rounds": config.rounds,
        "num_users": num_users,
        "num_items": count,
        "seed": config.seed,
        "snapshot_interval": config.snapshot_interval,
        "gamma_bound": gamma_bound,
        "theoretical_regret_bound": theory_bound,
        "avg_clicks": metrics.avg_clicks(final.cum_clicks, num_users, config.rounds),
        "cum_regret": final.cum_regret,
        "equality_b": final.equality_b,
        "equality_p": final.equality_p,
        "equity_b": final.equity_b,
        "equity_p": final.equity_p,
    }

    _write_outputs(config, world, series, ledger, item_clicks, rec_rows, summary)
    return summary, series


def _fmt(value) -> str:
    if isinstance(value, float):
        return FLOAT_FORMAT % value
    return str(value)


def _write_outputs(config, world, series, ledger, item_clicks, rec_rows, summary):
    os.makedirs(config.out_dir, exist_ok=True)

    with open(
        os.path.join(config.out_dir, "rounds.csv"), "w", encoding="utf-8", newline=""
    ) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(ROUNDS_HEADER)
        for record in series.records:
            writer.writerow(
                [
                    record.round,
                    record.cum_clicks,
                    _fmt(record.cum_regret),
                    _fmt(record.mean_exploration),
                    _fmt(record.equality_b),
                    _fmt(record.equality_p),
                    _fmt(record.equity_b),
                    _fmt(record.equity_p),
                ]
            )

    with open(
        os.path.join(config.out_dir, "exposure.csv"), "w", encoding="utf-8", newline=""
    ) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["item_id", "e_b", "e_p", "e_bm", "e_pm", "clicks"])
        e_b = ledger.binary_exposure()
        e_p = ledger.position_exposure()
        merit = world.catalog.merit
        for row in range(world.catalog.count):
            writer.writerow(
                [
                    int(world.catalog.item_ids[row]),
                    int(e_b[row]),
                    _fmt(float(e_p[row])),
                    _fmt(float(e_b[row] / merit[row])),
                    _fmt(float(e_p[row] / merit[row])),
                    int(item_clicks[row]),
                ]
            )

    with open(
        os.path.join(config.out_dir, "summary.csv"), "w", encoding="utf-8", newline=""
    ) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        keys = list(SUMMARY_CONFIG_FIELDS) + list(SUMMARY_METRIC_FIELDS)
        writer.writerow(keys)
        writer.writerow([_fmt(summary[key]) for key in keys])

    if config.log_recommendations:
        with open(
            os.path.join(config.out_dir, "recommendations.csv"),
            "w",
            encoding="utf-8",
            newline="",
        ) as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["round", "user_id", "position", "item_id", "clicked"])
            for row in rec_rows:
                writer.writerow(row)


def derived_seeds(master_seed: int, n: int) -> list:
    """Independent integer seeds for grid points, reproducible standalone."""
    children = np.random.SeedSequence(master_seed).spawn(n)
    return [int(child.generate_state(1)[0]) for child in children]


def run_grid(base: ExperimentConfig, sweep: dict):
    """Cartesian sweep over config fields; one summary row per point.

    Each point runs in out_dir/point_XXXX with a seed derived from
    (master seed, point index); failures become error rows instead of
    aborting the sweep. Returns the list of row dicts.
    """
    if not sweep:
        raise ConfigError("sweep: at least one field=values pair is required")
    known = {f.name for f in fields(ExperimentConfig)}
    for name in sweep:
        if name not in known:
            raise ConfigError(f"sweep: unknown config field {name!r}")
        if not sweep[name]:
            raise ConfigError(f"sweep: empty value list for {name!r}")
    names = list(sweep)
    points = list(itertools.product(*(sweep[name] for name in names)))
    seeds = derived_seeds(base.seed, len(points))

    rows = []
    for index, values in enumerate(points):
        overrides = dict(zip(names, values))
        overrides["seed"] = seeds[index]
        overrides["out_dir"] = os.path.join(base.out_dir, f"point_{index:04d}")
        point_config = replace(base, **overrides)
        row = {"grid_index": index, "derived_seed": seeds[index]}
        row.update({name: overrides[name] for name in names})
        try:
            summary, _ = run_experiment(point_config)
            row["status"] = "ok"
            row["error"] = ""
            row.update(summary)
        except Exception as exc:  # keep sweeping; the row records the failure
            logger.warning("grid point %d failed: %s", index, exc)
            row["status"] = "error"
            row["error"] = str(exc)
        rows.append(row)

    os.makedirs(base.out_dir, exist_ok=True)
    header = ["grid_index", "derived_seed", *names, "status", "error"]
    header += [k for k in SUMMARY_CONFIG_FIELDS + SUMMARY_METRIC_FIELDS if k not in names]
    with open(
        os.path.join(base.out_dir, "grid_summary.csv"), "w", encoding="utf-8", newline=""
    ) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(row.get(key, "")) for key in header])
    return rows


EXPOSURE_COLUMNS = {"b": "e_b", "p": "e_p", "bm": "e_bm", "pm": "e_pm"}


def _read_exposure(run_dir):
    path = os.path.join(run_dir, "exposure.csv")
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        rows = list(reader)
    ids = np.array([int(r["item_id"]) for r in rows], dtype=np.int64)
    table = {
        key: np.array([float(r[key]) for r in rows]) for key in ("e_b", "e_p", "e_bm", "e_pm")
    }
    table["clicks"] = np.array([float(r["clicks"]) for r in rows])
    return ids, table


def compare_exposure(run_a_dir, run_b_dir, notion: str):
    """Per-item exposure change of run A relative to baseline run B.

    Both runs must share a catalog. Rows are sorted by the baseline's
    exposure descending (ties by ascending id) and carry the symmetric
    percentage change in exposure and in clicks.
    """
    if notion not in EXPOSURE_COLUMNS:
        raise ConfigError(f"notion must be one of {sorted(EXPOSURE_COLUMNS)}, got {notion!r}")
    ids_a, table_a = _read_exposure(run_a_dir)
    ids_b, table_b = _read_exposure(run_b_dir)
    if not np.array_equal(ids_a, ids_b):
        raise ConfigError("catalog mismatch: the two runs expose different item sets")
    column = EXPOSURE_COLUMNS[notion]
    e_a = table_a[column]
    e_b = table_b[column]
    delta_e = metrics.delta_exposure(e_a, e_b)
    delta_clicks = metrics.delta_exposure(table_a["clicks"], table_b["clicks"])
    order = np.lexsort((ids_b, -e_b))
    rows = [
        (
            int(ids_a[i]),
            float(e_b[i]),
            float(e_a[i]),
            float(delta_e[i]),
            float(delta_clicks[i]),
        )
        for i in order
    ]
    return rows


def write_comparison(path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(
            ["item_id", "exposure_base", "exposure_new", "delta_exposure_pct", "delta_clicks_pct"]
        )
        for item, base_value, new_value, d_e, d_c in rows:
            writer.writerow([item, _fmt(base_value), _fmt(new_value), _fmt(d_e), _fmt(d_c)])
