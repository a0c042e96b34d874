"""Command-line harness.

Subcommands: ingest (preprocess a ratings file), factorize (train item
embeddings and merit), run (one experiment), grid (hyperparameter
sweep), compare (per-item exposure change between two runs), bound
(print the theoretical diagnostics for a configuration).

Exit codes: 0 success, 1 usage, 2 I/O, 3 numeric failure.
"""

import argparse
import json
import logging
import os
import sys

from . import bandit, data, experiment, metrics
from .errors import (
    ConfigError,
    DataFormatError,
    FactorizationError,
    SingularMatrixError,
    UndefinedDistributionError,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_NUMERIC = 3

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    # default=SUPPRESS keeps the namespace free of untouched flags so a
    # config file is only overridden by what was actually passed.
    s = argparse.SUPPRESS
    parser.add_argument("--config", help="JSON config file; flags override its fields")
    parser.add_argument("--mode", choices=["synthetic", "dataset"], default=s)
    parser.add_argument("--ratings", default=s, help="ratings file (dataset mode)")
    parser.add_argument("--features", dest="features_path", default=s,
                        help="reuse item features CSV instead of factorizing")
    parser.add_argument("--merit", dest="merit_path", default=s,
                        help="reuse merit CSV instead of factorizing")
    parser.add_argument("--top-users", dest="top_users", type=int, default=s)
    parser.add_argument("--top-items", dest="top_items", type=int, default=s)
    parser.add_argument("--num-items", dest="num_items", type=int, default=s,
                        help="catalog size (synthetic mode)")
    parser.add_argument("--d", type=int, default=s, help="feature dimension")
    parser.add_argument("--k", type=int, default=s, help="recommendation list size")
    parser.add_argument("--algorithm", choices=list(experiment.ALGORITHMS), default=s)
    parser.add_argument("--weight-fn", dest="weight_kind",
                        choices=list(experiment.WEIGHT_KINDS), default=s)
    parser.add_argument("--beta", type=float, default=s, help="patience parameter")
    parser.add_argument("--alpha", type=float, default=s, help="exploration degree")
    parser.add_argument("--gamma", type=float, default=s, help="penalty coefficient")
    parser.add_argument("--lambda", dest="lam", type=float, default=s,
                        help="ridge regularizer")
    parser.add_argument("--sigma", type=float, default=s, help="learning-rate scale")
    parser.add_argument("--rounds", type=int, default=s)
    parser.add_argument("--num-users", dest="num_users", type=int, default=s)
    parser.add_argument("--seed", type=int, default=s)
    parser.add_argument("--snapshot-interval", dest="snapshot_interval", type=int, default=s)
    parser.add_argument("--out", dest="out_dir", default=s, help="output directory")
    parser.add_argument("--workers", type=int, default=s)
    parser.add_argument("--log-recommendations", dest="log_recommendations",
                        action="store_true", default=s)
    parser.add_argument("--relevance-cutoff", dest="relevance_cutoff", type=float,
                        default=s, help="ears cutoff; default is the per-list median")
    parser.add_argument("--mf-regularization", dest="mf_regularization", type=float, default=s)
    parser.add_argument("--mf-iterations", dest="mf_iterations", type=int, default=s)


def _config_from_args(args) -> experiment.ExperimentConfig:
    overrides = {
        key: value
        for key, value in vars(args).items()
        if key not in ("command", "config", "sweep", "func")
    }
    if args.config:
        return experiment.load_config(args.config, overrides)
    return experiment.ExperimentConfig(**overrides)


def _cmd_ingest(args) -> int:
    table = data.parse_ratings(args.ratings)
    interactions = data.filter_active(data.binarize(table), args.top_users, args.top_items)
    train, test = data.split_train_test(interactions, args.seed)
    os.makedirs(args.out_dir, exist_ok=True)
    data.write_interactions(os.path.join(args.out_dir, "train.csv"), train)
    data.write_interactions(os.path.join(args.out_dir, "test.csv"), test)
    print(
        f"ingested {len(table)} ratings -> {len(interactions)} filtered interactions "
        f"({len(train)} train / {len(test)} test), {table.malformed_lines} malformed lines"
    )
    return EXIT_OK


def _cmd_factorize(args) -> int:
    train = data.read_interactions(args.train)
    result = data.factorize(
        train,
        args.d,
        regularization=args.mf_regularization,
        iterations=args.mf_iterations,
        seed=args.seed,
    )
    merit = data.compute_merit(result)
    os.makedirs(args.out_dir, exist_ok=True)
    data.write_item_features(
        os.path.join(args.out_dir, "item_features.csv"), result.item_ids, result.item_embeddings
    )
    data.write_merit(os.path.join(args.out_dir, "merit.csv"), result.item_ids, merit)
    print(
        f"factorized {len(train)} interactions into {result.item_ids.size} item embeddings "
        f"(d={args.d}), final objective {result.objective_history[-1]:.6g}"
    )
    return EXIT_OK


def _cmd_run(args) -> int:
    config = _config_from_args(args)
    summary, _ = experiment.run_experiment(config)
    print(
        f"run complete: avg_clicks={summary['avg_clicks']:.6g} "
        f"cum_regret={summary['cum_regret']:.6g} "
        f"equality_b={summary['equality_b']:.6g} equality_p={summary['equality_p']:.6g} "
        f"equity_b={summary['equity_b']:.6g} equity_p={summary['equity_p']:.6g}"
    )
    print(f"outputs in {config.out_dir}")
    return EXIT_OK


def _parse_sweep(entries) -> dict:
    sweep = {}
    for entry in entries:
        if "=" not in entry:
            raise ConfigError(f"sweep: expected FIELD=V1,V2,... got {entry!r}")
        name, _, values = entry.partition("=")
        parsed = []
        for token in values.split(","):
            token = token.strip()
            if not token:
                continue
            try:
                parsed.append(json.loads(token))
            except json.JSONDecodeError:
                parsed.append(token)
        sweep[name.strip()] = parsed
    return sweep


def _cmd_grid(args) -> int:
    base = _config_from_args(args)
    sweep = _parse_sweep(args.sweep or [])
    rows = experiment.run_grid(base, sweep)
    failures = sum(1 for row in rows if row["status"] != "ok")
    print(f"grid complete: {len(rows)} points, {failures} failures")
    print(f"summary in {os.path.join(base.out_dir, 'grid_summary.csv')}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    rows = experiment.compare_exposure(args.run_a, args.run_b, args.notion)
    if args.out:
        experiment.write_comparison(args.out, rows)
        print(f"wrote {len(rows)} item rows to {args.out}")
    else:
        print("item_id,exposure_base,exposure_new,delta_exposure_pct,delta_clicks_pct")
        for item, base_value, new_value, d_e, d_c in rows:
            print(f"{item},{base_value:.6g},{new_value:.6g},{d_e:.6g},{d_c:.6g}")
    return EXIT_OK


def _cmd_bound(args) -> int:
    alpha_min = metrics.alpha_condition(args.sigma, args.d, args.rounds, args.k, args.theta_norm)
    alpha = args.alpha if args.alpha is not None else alpha_min
    bound = metrics.regret_bound(alpha, args.k, args.d, args.rounds, args.sigma)
    print(f"minimal admissible alpha: {alpha_min:.6g}")
    print(f"regret bound at alpha={alpha:.6g}: {bound:.6g}")
    if args.weight_fn is not None:
        spec = bandit.WeightFunctionSpec(bandit.WeightKind(args.weight_fn), beta=args.beta)
        gamma_bound = bandit.gamma_admissible_bound(spec, args.k)
        print(f"admissible gamma bound for {args.weight_fn}: {gamma_bound:.6g}")
        if gamma_bound < 0:
            print("warning: no nonnegative gamma satisfies the guarantee for this weight function")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="faircascade", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="parse, binarize, filter, and split a ratings file")
    p.add_argument("--ratings", required=True)
    p.add_argument("--top-users", dest="top_users", type=int, default=1000)
    p.add_argument("--top-items", dest="top_items", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", dest="out_dir", required=True)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("factorize", help="train item embeddings and merit from train.csv")
    p.add_argument("--train", required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--mf-regularization", dest="mf_regularization", type=float, default=0.1)
    p.add_argument("--mf-iterations", dest="mf_iterations", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", dest="out_dir", required=True)
    p.set_defaults(func=_cmd_factorize)

    p = sub.add_parser("run", help="run one experiment")
    _add_run_flags(p)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("grid", help="Cartesian hyperparameter sweep")
    _add_run_flags(p)
    p.add_argument("--sweep", action="append", metavar="FIELD=V1,V2,...",
                   help="repeatable; e.g. --sweep alpha=0.25,0.75,1")
    p.set_defaults(func=_cmd_grid)

    p = sub.add_parser("compare", help="per-item exposure change of run A vs baseline run B")
    p.add_argument("run_a", help="output directory of the new run")
    p.add_argument("run_b", help="output directory of the baseline run")
    p.add_argument("--notion", choices=sorted(experiment.EXPOSURE_COLUMNS), default="p")
    p.add_argument("--out", default=None, help="write CSV here instead of stdout")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("bound", help="print theoretical diagnostics for a configuration")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--rounds", type=int, required=True)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--theta-norm", dest="theta_norm", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--weight-fn", dest="weight_fn",
                   choices=list(experiment.WEIGHT_KINDS), default=None)
    p.add_argument("--beta", type=float, default=0.0)
    p.set_defaults(func=_cmd_bound)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        logger.error("usage error: %s", exc)
        return EXIT_USAGE
    except (OSError, DataFormatError) as exc:
        logger.error("I/O error: %s", exc)
        return EXIT_IO
    except (SingularMatrixError, FactorizationError, UndefinedDistributionError) as exc:
        logger.error("numeric failure: %s", exc)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
