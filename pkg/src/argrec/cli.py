"""Batch command line: prepare, train, eval, explain, check-axioms, cluster, serve.

Exit codes: 0 success, 1 check/validation failure, 2 usage error. Any flag can
also be supplied through a JSON config file (``--config``); explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import analysis, argumentation, explanation
from .data import (
    Catalog,
    Dataset,
    IngestError,
    RatingScale,
    k_core_filter,
    load_catalog,
    load_interactions,
    log_transform_counts,
    split_dataset,
)
from .model import (
    Checkpoint,
    ModelConfig,
    VARIANTS,
    load_checkpoint,
    predict,
    save_checkpoint,
)
from .training import (
    TrainConfig,
    TrainingDiverged,
    evaluate,
    evaluate_mf,
    train,
    train_mf,
)

logger = logging.getLogger(__name__)


class CliError(Exception):
    """Validation failure reported with exit code 1."""


def _emit(doc) -> None:
    print(json.dumps(doc, sort_keys=True))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="argrec")
    parser.add_argument("--config", type=Path, default=None,
                        help="JSON file of flag defaults (CLI values take precedence)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="preprocess raw files into catalog + dataset artifacts")
    p.add_argument("--interactions", type=Path, required=True)
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--schema", type=Path, required=True)
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--log-transform", action="store_true",
                   help="treat values as usage counts and apply ln(1 + count)")
    p.add_argument("--k-core", type=int, default=0, metavar="K")
    p.add_argument("--scale", type=float, nargs=2, default=None, metavar=("MIN", "MAX"),
                   help="raw rating range; defaults to the observed min/max")
    p.add_argument("--ratios", type=float, nargs=3, default=(0.8, 0.1, 0.1),
                   metavar=("TRAIN", "VALID", "TEST"))
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="fit a model variant and write a checkpoint")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--catalog", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--variant", choices=VARIANTS + ("mf",), default="ca-fata")
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--l2", type=float, default=1e-5)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--log", type=Path, default=None, help="per-epoch JSON-lines training log")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="report RMSE/MAE of a checkpoint on a dataset split")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--split", choices=("train", "valid", "test"), default="test")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("explain", help="explain one prediction or contrast two items")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--user", required=True)
    p.add_argument("--item", default=None)
    p.add_argument("--context", nargs="*", default=[], metavar="FACTOR=CONDITION")
    p.add_argument("--contrastive", action="store_true")
    p.add_argument("--dataset", type=Path, default=None,
                   help="dataset whose train interactions mark items as consumed")
    p.add_argument("--neutral-eps", type=float, default=0.05)
    p.add_argument("--thresholds", type=float, nargs=2, default=explanation.DEFAULT_THRESHOLDS,
                   metavar=("LOW", "HIGH"))
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("check-axioms", help="run the randomized argumentation property suites")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checkpoint", type=Path, default=None,
                   help="check a trained model instead of fresh random models per trial")
    p.set_defaults(func=cmd_check_axioms)

    p = sub.add_parser("cluster", help="cluster users by contextual-factor importance")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=None, help="per-user CSV output path")
    p.add_argument("--report", type=Path, default=None, help="per-cluster CSV output path")
    p.add_argument("--sweep", type=int, nargs=2, default=None, metavar=("KMIN", "KMAX"),
                   help="also report inertia for k in [KMIN, KMAX]")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("serve", help="serve recommendations over HTTP")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--journal", type=Path, default=None)
    p.add_argument("--interactions", type=Path, default=None,
                   help="raw interactions CSV used to mark items as consumed per user")
    p.add_argument("--cors", default="*")
    p.set_defaults(func=cmd_serve)
    return parser


def _apply_config_file(parser: argparse.ArgumentParser, args: argparse.Namespace,
                       argv: list[str]) -> None:
    """Overlay values from --config for flags not given explicitly on argv."""
    if args.config is None:
        return
    try:
        overrides = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        parser.error(f"cannot read config file {args.config}: {exc}")
    if not isinstance(overrides, dict):
        parser.error(f"config file {args.config} must hold a JSON object")
    explicit = set()
    for action_parser in parser._subparsers._group_actions[0].choices.values():  # noqa: SLF001
        for action in action_parser._actions:  # noqa: SLF001
            if any(opt in argv for opt in action.option_strings):
                explicit.add(action.dest)
    for key, value in overrides.items():
        if hasattr(args, key) and key not in explicit and key != "config":
            if key in ("out", "out_dir", "checkpoint", "dataset", "catalog", "interactions",
                       "features", "schema", "log", "journal", "report"):
                value = Path(value)
            setattr(args, key, value)


def cmd_prepare(args) -> int:
    catalog = load_catalog(args.features, args.schema)
    interactions = load_interactions(args.interactions, catalog)
    if args.log_transform:
        interactions = log_transform_counts(interactions)
    if args.k_core > 0:
        interactions = k_core_filter(interactions, args.k_core)
    if not interactions:
        raise CliError("no interactions left after preprocessing")
    if args.scale is None:
        values = [i.value for i in interactions]
        scale = RatingScale(min(values), max(values))
    else:
        scale = RatingScale(args.scale[0], args.scale[1])
    dataset = split_dataset(interactions, catalog, scale, tuple(args.ratios), args.seed)

    args.out_dir.mkdir(parents=True, exist_ok=True)
    catalog_path = args.out_dir / "catalog.json"
    dataset_path = args.out_dir / "dataset.json"
    catalog.save(catalog_path)
    dataset.save(dataset_path)
    _emit(
        {
            "catalog": str(catalog_path),
            "dataset": str(dataset_path),
            "n_interactions": len(dataset),
            "n_users": catalog.n_users,
            "n_items": catalog.n_items,
            "n_features": catalog.n_features,
            "scale": [scale.raw_min, scale.raw_max],
            "splits": {
                "train": len(dataset.train_idx),
                "valid": len(dataset.valid_idx),
                "test": len(dataset.test_idx),
            },
        }
    )
    return 0


def cmd_train(args) -> int:
    dataset = Dataset.load(args.dataset)
    catalog = Catalog.load(args.catalog)
    train_config = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        l2_reg=args.l2,
        seed=args.seed,
        early_stop_patience=args.patience,
    )
    if args.variant == "mf":
        mf, log = train_mf(dataset, catalog, args.dim, train_config, log_path=args.log)
        checkpoint = Checkpoint(kind="mf", catalog=catalog, scale=dataset.scale, mf_space=mf)
    else:
        model_config = ModelConfig(dim=args.dim, variant=args.variant, seed=args.seed)
        space, log = train(dataset, catalog, model_config, train_config, log_path=args.log)
        checkpoint = Checkpoint(
            kind="factor", catalog=catalog, scale=dataset.scale, config=model_config, space=space
        )
    save_checkpoint(args.out, checkpoint)
    best = min(log, key=lambda r: r["valid_rmse_raw"])
    _emit(
        {
            "checkpoint": str(args.out),
            "variant": args.variant,
            "epochs_run": len(log),
            "best_epoch": best["epoch"],
            "best_valid_rmse_raw": best["valid_rmse_raw"],
        }
    )
    return 0


def cmd_eval(args) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    dataset = Dataset.load(args.dataset)
    if checkpoint.kind == "mf":
        report = evaluate_mf(checkpoint.mf_space, dataset, split=args.split)
    else:
        report = evaluate(checkpoint.space, dataset, checkpoint.catalog, checkpoint.config,
                          split=args.split)
    _emit(report.to_dict())
    return 0


def _parse_context(pairs: list[str], checkpoint: Checkpoint) -> dict[int, int]:
    catalog = checkpoint.catalog
    situation: dict[int, int] = {}
    for pair in pairs:
        if "=" not in pair:
            raise CliError(f"context must be FACTOR=CONDITION, got {pair!r}")
        factor_name, condition_name = pair.split("=", 1)
        if factor_name not in catalog.factors:
            raise CliError(f"unknown contextual factor {factor_name!r}")
        factor = catalog.factors.index(factor_name)
        try:
            cond = catalog.condition_index(factor_name, condition_name)
        except KeyError:
            raise CliError(
                f"unknown condition {condition_name!r} for factor {factor_name!r}"
            ) from None
        situation[factor] = cond
    if checkpoint.kind == "factor" and checkpoint.config.context_aware:
        missing = [
            catalog.factors.names[f] for f in range(catalog.n_factors) if f not in situation
        ]
        if missing:
            raise CliError(
                "this checkpoint is context-aware: supply a full contextual situation "
                f"(missing factors: {', '.join(missing)})"
            )
    return situation


def cmd_explain(args) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    if checkpoint.kind == "mf":
        raise CliError("the factorization baseline has no argumentation structure to explain")
    catalog = checkpoint.catalog
    if args.user not in catalog.users:
        raise CliError(f"unknown user {args.user!r}")
    user = catalog.users.index(args.user)
    situation = _parse_context(args.context, checkpoint)

    if args.contrastive:
        consumed: set[int] = set()
        if args.dataset is not None:
            dataset = Dataset.load(args.dataset)
            consumed = set(int(i) for i in dataset.item_idx[dataset.user_idx == user])
        candidates = [i for i in range(catalog.n_items) if i not in consumed]
        if len(candidates) < 2:
            raise CliError("contrastive explanation needs at least 2 candidate items")
        result = explanation.contrastive_explanation(
            user, situation, candidates, checkpoint.space, catalog, checkpoint.config
        )
    else:
        if args.item is None:
            raise CliError("--item is required unless --contrastive is given")
        if args.item not in catalog.items:
            raise CliError(f"unknown item {args.item!r}")
        item = catalog.items.index(args.item)
        breakdown = predict(user, item, situation, checkpoint.space, catalog, checkpoint.config)
        taf = argumentation.build_taf(breakdown, catalog, neutral_eps=args.neutral_eps)
        result = explanation.template_explanation(
            breakdown, taf, catalog, thresholds=tuple(args.thresholds)
        )
    _emit(result.to_dict())
    print(result.text)
    return 0


def cmd_check_axioms(args) -> int:
    model = None
    if args.checkpoint is not None:
        checkpoint = load_checkpoint(args.checkpoint)
        if checkpoint.kind == "mf":
            raise CliError("the factorization baseline has no argumentation structure to check")
        model = (checkpoint.space, checkpoint.catalog, checkpoint.config)
    reports = [
        argumentation.check_weak_balance(args.trials, seed=args.seed, model=model),
        argumentation.check_weak_monotonicity(args.trials, seed=args.seed + 1, model=model),
        argumentation.check_feedback_monotonicity(args.trials, seed=args.seed + 2, model=model),
    ]
    failed = False
    for report in reports:
        doc = report.to_dict()
        if report.passed:
            doc["counterexamples"] = []
        _emit(doc)
        failed = failed or not report.passed
    return 1 if failed else 0


def cmd_cluster(args) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    if checkpoint.kind == "mf":
        raise CliError("the factorization baseline has no context parameters to cluster")
    matrix = analysis.export_importance(checkpoint.space, checkpoint.catalog, checkpoint.config)
    result = analysis.kmeans(matrix.rows, args.k, seed=args.seed)
    report = analysis.cluster_report(result.assignments, matrix.rows, matrix.factors)
    if args.out is not None:
        args.out.write_text(analysis.importance_csv(matrix, result.assignments))
    if args.report is not None:
        args.report.write_text(analysis.report_to_csv(report, matrix.factors))
    summary = {
        "k": args.k,
        "inertia": result.inertia,
        "cluster_sizes": {str(r["cluster"]): r["size"] for r in report},
    }
    if args.sweep is not None:
        lo, hi = args.sweep
        summary["inertia_sweep"] = {
            str(k): v
            for k, v in analysis.inertia_sweep(matrix.rows, range(lo, hi + 1), seed=args.seed).items()
        }
    _emit(summary)
    print(analysis.format_report(report, matrix.factors), file=sys.stderr)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(
        args.checkpoint,
        journal_path=args.journal,
        interactions_path=args.interactions,
        cors_origins=[args.cors],
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=logging.INFO, stream=sys.stderr, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "check-axioms" and args.trials < 1:
        parser.error("--trials must be >= 1")
    if args.command == "prepare" and args.k_core < 0:
        parser.error("--k-core must be >= 0")
    _apply_config_file(parser, args, argv)
    try:
        return args.func(args)
    except (CliError, IngestError, TrainingDiverged, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
