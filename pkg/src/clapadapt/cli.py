"""Command-line surface: synth, ingest, adapt, run, sweep, report.

Every subcommand resolves its options in three layers: built-in defaults,
then a JSON config file given with --config, then explicit flags (flags win).
The fully resolved config is logged to stderr, hashed, and the hash is
embedded in every file the command writes, so any output can be traced back
to the exact invocation that produced it. Environment variables are read for
paths only (CLAPADAPT_OUT_DIR), never for numeric settings.

Exit codes: 2 for usage problems, 3 for data problems (bad files, bad
values, refused merges), 4 for numeric failures.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import reporting
from .adapters import TrainConfig, adapt_store, default_head, init_head, save_head, train_projection
from .datastore import (
    EmbeddingRecord,
    EmbeddingStore,
    SyntheticSpec,
    make_synthetic,
    read_store,
    sample_support,
    store_hash,
    write_store,
)
from .errors import ClapAdaptError, DataError, ManifestError, NumericError
from .experiments import (
    DEFAULT_SWEEP_STRATEGIES,
    SETTINGS,
    SHOTS,
    STRATEGIES,
    ExperimentConfig,
    ResultTable,
    SweepCell,
    cell_seed,
    lolo_delta,
    mark_best_rows,
    run_experiment,
    sweep,
)
from .losses import SupConBatch
from .veccore import Rng

CONFIG_SCHEMA_NOTE = (
    "config file: a flat JSON object; keys are the long option names with "
    "dashes as underscores (e.g. {\"learning_rate\": 0.001}); explicit flags "
    "override file values"
)

# option name -> (type, default, help); shared by run/sweep/adapt where noted
_TRAIN_OPTS = {
    "epochs": (int, 50, "projection training epochs (default: 50)"),
    "learning_rate": (float, 1e-4, "projection AdamW learning rate (default: 1e-4)"),
    "temperature": (float, 0.07, "contrastive temperature (default: 0.07)"),
    "weight_decay": (float, 0.01, "projection AdamW weight decay (default: 0.01)"),
    "warmup_epochs": (int, 0, "linear warmup epochs (default: 0)"),
    "batch_size": (int, None, "minibatch size (default: full batch up to 256, then 64)"),
    "head_hidden": (int, None, "projection hidden width (default: input dim)"),
}
_CLS_OPTS = {
    "svm_c": (float, 1.0, "SVM box constraint C (default: 1.0)"),
    "svm_gamma": (str, "scale", "RBF gamma, a float or 'scale' (default: scale)"),
    "svm_tol": (float, 1e-3, "SMO KKT tolerance (default: 1e-3)"),
    "svm_max_passes": (int, 10_000, "SMO pass cap (default: 10000)"),
    "mlp_hidden": (int, 100, "MLP hidden units (default: 100)"),
    "mlp_max_epochs": (int, 200, "MLP epoch cap (default: 200)"),
    "mlp_learning_rate": (float, 1e-3, "MLP AdamW learning rate (default: 1e-3)"),
    "mlp_weight_decay": (float, 1e-4, "MLP AdamW weight decay (default: 1e-4)"),
}


class UsageError(Exception):
    pass


def _add_opts(parser: argparse.ArgumentParser, opts: dict) -> None:
    for name, (typ, _default, help_text) in opts.items():
        parser.add_argument(f"--{name.replace('_', '-')}", dest=name, type=typ,
                            default=None, help=help_text)


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise DataError(f"config file {path} must hold a JSON object")
    return cfg


def _resolve(args: argparse.Namespace, opts: dict, extra_keys: tuple = ()) -> dict:
    """defaults <- config file <- flags; unknown config keys are errors."""
    file_cfg = _load_config_file(getattr(args, "config", None))
    known = set(opts) | set(extra_keys)
    unknown = [k for k in file_cfg if k not in known]
    if unknown:
        raise DataError(f"unknown config file keys {unknown}; known: {sorted(known)}")
    resolved = {}
    for name, (_typ, default, _help) in opts.items():
        flag = getattr(args, name, None)
        if flag is not None:
            resolved[name] = flag
        elif name in file_cfg:
            resolved[name] = file_cfg[name]
        else:
            resolved[name] = default
    for name in extra_keys:
        flag = getattr(args, name, None)
        if flag is not None:
            resolved[name] = flag
        elif name in file_cfg:
            resolved[name] = file_cfg[name]
    return resolved


def _log_config(name: str, resolved: dict, chash: str) -> None:
    blob = json.dumps(resolved, sort_keys=True, default=str)
    print(f"[clapadapt {name}] config_hash={chash} resolved={blob}", file=sys.stderr)


def _int_list(value, flag: str) -> list[int]:
    """Comma string from a flag, or a JSON array from a config file."""
    if isinstance(value, (list, tuple)):
        return [int(v) for v in value]
    try:
        return [int(tok) for tok in str(value).split(",") if tok.strip() != ""]
    except ValueError as exc:
        raise UsageError(f"{flag} expects comma-separated integers, got {value!r}") from exc


def _str_list(value) -> list[str]:
    if isinstance(value, (list, tuple)):
        return [str(v) for v in value]
    return [tok.strip() for tok in str(value).split(",") if tok.strip()]


def _out_dir(args) -> str:
    if getattr(args, "out_dir", None):
        return args.out_dir
    env = os.environ.get("CLAPADAPT_OUT_DIR")
    if env:
        return env
    raise UsageError("--out-dir required (or set CLAPADAPT_OUT_DIR)")


# subcommands


def cmd_synth(args) -> int:
    opts = {
        "languages": (int, 4, "number of languages (default: 4)"),
        "dim": (int, 12, "embedding dimension (default: 12)"),
        "train": (int, 12, "train samples per class per language (default: 12)"),
        "test": (int, 8, "test samples per class per language (default: 8)"),
        "separation": (float, 6.0, "class mean separation in noise sigmas (default: 6.0)"),
        "offset_scale": (float, 0.5, "language offset norm (default: 0.5)"),
        "label_noise": (float, 0.0, "label flip probability (default: 0.0)"),
        "seed": (int, 0, "generator seed (default: 0)"),
    }
    resolved = _resolve(args, opts, extra_keys=("normalize",))
    if args.no_normalize:
        resolved["normalize"] = False
    resolved.setdefault("normalize", True)
    chash = reporting.config_hash(resolved)
    _log_config("synth", resolved, chash)
    spec = SyntheticSpec(
        languages=resolved["languages"],
        dim=resolved["dim"],
        per_class_train=resolved["train"],
        per_class_test=resolved["test"],
        separation=resolved["separation"],
        language_offset_scale=resolved["offset_scale"],
        label_noise=resolved["label_noise"],
        seed=resolved["seed"],
        normalize=resolved["normalize"],
    )
    store = make_synthetic(spec)
    store = EmbeddingStore(store.dim, store.languages, store.records,
                           {**store.meta, "config_hash": chash})
    digest = write_store(store, args.out)
    print(f"wrote {args.out} ({len(store)} records, dim {store.dim}, store_hash {digest})")
    return 0


def _read_ingest_manifest(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest {path} is not valid JSON: {exc}") from exc
    for key in ("languages", "records"):
        if key not in manifest:
            raise ManifestError(f"manifest {path} lacks {key!r}")
    return manifest


def cmd_ingest(args) -> int:
    if bool(args.store) == bool(args.matrix):
        raise UsageError("ingest needs exactly one of --store or --matrix/--manifest")
    resolved = {"store": args.store, "matrix": args.matrix, "manifest": args.manifest}
    chash = reporting.config_hash(resolved)
    _log_config("ingest", resolved, chash)
    if args.store:
        store = read_store(args.store)  # full format + consistency validation
    else:
        if not args.manifest:
            raise UsageError("--matrix requires --manifest")
        manifest = _read_ingest_manifest(args.manifest)
        try:
            matrix = np.load(args.matrix, allow_pickle=False)
        except (OSError, ValueError) as exc:
            raise DataError(f"cannot load matrix {args.matrix}: {exc}") from exc
        if matrix.ndim != 2:
            raise DataError(f"matrix must be 2-D, got shape {matrix.shape}")
        recs = manifest["records"]
        if len(recs) != matrix.shape[0]:
            raise ManifestError(f"{len(recs)} manifest records vs {matrix.shape[0]} matrix rows")
        records = []
        for i, rec in enumerate(recs):
            for key in ("id", "language", "split", "label"):
                if key not in rec:
                    raise ManifestError(f"record {i} lacks {key!r}")
            records.append(EmbeddingRecord(
                id=str(rec["id"]), language=str(rec["language"]), split=str(rec["split"]),
                label=int(rec["label"]), vector=matrix[i].astype(np.float32),
            ))
        store = EmbeddingStore(int(matrix.shape[1]), [str(l) for l in manifest["languages"]],
                               records, dict(manifest.get("meta") or {}))
        store.validate()
    store = EmbeddingStore(store.dim, store.languages, store.records,
                           {**store.meta, "config_hash": chash})
    digest = write_store(store, args.out)
    print(f"wrote {args.out} ({len(store)} records, dim {store.dim}, store_hash {digest})")
    return 0


def cmd_adapt(args) -> int:
    opts = dict(_TRAIN_OPTS)
    opts["shot"] = (int, 5, "support examples per class per language (default: 5)")
    opts["seed"] = (int, 0, "adaptation seed (default: 0)")
    resolved = _resolve(args, opts)
    if resolved["shot"] < 1:
        raise UsageError("adapt needs --shot >= 1; shot 0 is the unadapted store")
    store = read_store(args.store)
    resolved["store_hash"] = store_hash(store)
    chash = reporting.config_hash(resolved)
    _log_config("adapt", resolved, chash)

    rng = Rng(resolved["seed"])
    support = sample_support(store, resolved["shot"], rng.split("support").seed)
    ids = support.all_ids()
    if not ids:
        raise DataError("support set is empty; the store has no train records")
    hidden = resolved["head_hidden"]
    head = (init_head(store.dim, hidden, 128, rng.split("head-init").seed)
            if hidden else default_head(store.dim, rng.split("head-init").seed))
    tcfg = TrainConfig(
        epochs=resolved["epochs"],
        learning_rate=resolved["learning_rate"],
        temperature=resolved["temperature"],
        weight_decay=resolved["weight_decay"],
        seed=rng.split("train").seed,
        batch_size=resolved["batch_size"],
        warmup_epochs=resolved["warmup_epochs"],
    )
    trained, report = train_projection(
        head, SupConBatch.build(store.vectors(ids), store.labels(ids)), tcfg)
    adapted = adapt_store(trained, store)
    adapted = EmbeddingStore(adapted.dim, adapted.languages, adapted.records,
                             {**adapted.meta, "config_hash": chash})
    digest = write_store(adapted, args.out_store)
    save_head(trained, args.out_head)
    with open(f"{args.out_head}.manifest.json", "w", encoding="utf-8") as fh:
        json.dump({"config_hash": chash, "input_store_hash": resolved["store_hash"],
                   "final_loss": report.final_loss}, fh, sort_keys=True)
        fh.write("\n")
    print(f"wrote {args.out_store} (store_hash {digest}) and {args.out_head} "
          f"(final loss {report.final_loss:.4f}, {len(ids)} support rows)")
    return 0


def _experiment_config(resolved: dict, setting: str, language: str, shot: int,
                       strategy: str, classifier: str, master_seed: int,
                       ft_store_path=None) -> ExperimentConfig:
    return ExperimentConfig(
        setting=setting, target_language=language, shot=shot, strategy=strategy,
        classifier=classifier, master_seed=master_seed,
        temperature=resolved["temperature"], epochs=resolved["epochs"],
        learning_rate=resolved["learning_rate"], weight_decay=resolved["weight_decay"],
        warmup_epochs=resolved["warmup_epochs"], batch_size=resolved["batch_size"],
        head_hidden=resolved["head_hidden"],
        svm_c=resolved["svm_c"], svm_gamma=_gamma(resolved["svm_gamma"]),
        svm_tol=resolved["svm_tol"], svm_max_passes=resolved["svm_max_passes"],
        mlp_hidden=resolved["mlp_hidden"], mlp_max_epochs=resolved["mlp_max_epochs"],
        mlp_learning_rate=resolved["mlp_learning_rate"],
        mlp_weight_decay=resolved["mlp_weight_decay"],
        ft_store_path=ft_store_path,
    )


def _gamma(value):
    if isinstance(value, str) and value != "scale":
        try:
            return float(value)
        except ValueError as exc:
            raise UsageError(f"--svm-gamma expects a float or 'scale', got {value!r}") from exc
    return value


def _run_sweep_opts() -> dict:
    opts = dict(_TRAIN_OPTS)
    opts.update(_CLS_OPTS)
    opts["seed"] = (int, 0, "master seed; every cell derives its own (default: 0)")
    return opts


def cmd_run(args) -> int:
    opts = _run_sweep_opts()
    resolved = _resolve(args, opts)
    store = read_store(args.store)
    resolved.update(setting=args.setting, language=args.language, shot=args.shot,
                    strategy=args.strategy, classifier=args.classifier,
                    store_hash=store_hash(store))
    if args.ft_store:
        resolved["ft_store"] = args.ft_store
    chash = reporting.config_hash(resolved)
    _log_config("run", resolved, chash)

    cfg = _experiment_config(resolved, args.setting, args.language, args.shot,
                             args.strategy, args.classifier, resolved["seed"],
                             ft_store_path=args.ft_store)
    cfg.validate()
    if args.dry_run:
        plan = {"cell": {"setting": args.setting, "language": args.language,
                         "shot": args.shot, "strategy": args.strategy},
                "seed": f"{cfg.seed():016x}", "config_hash": chash,
                "store_hash": resolved["store_hash"]}
        print(json.dumps(plan, indent=2, sort_keys=True))
        return 0
    result = run_experiment(cfg, store)
    cell = SweepCell(setting=args.setting, language=args.language,
                     strategy=args.strategy, shot=args.shot, result=result)
    mark_best_rows([cell])
    table = ResultTable([cell], resolved["store_hash"], resolved["seed"], 0)
    rows = reporting.rows_from_table(table)
    reporting.write_results(rows, args.out, meta={
        "config_hash": chash, "store_hash": resolved["store_hash"],
        "master_seed": resolved["seed"],
    })
    print(f"{args.setting}/{args.language}/{args.strategy}/{args.shot}-shot: "
          f"macro-F1 {result.macro_f1:.2f}, accuracy {result.accuracy:.2f} "
          f"({result.chosen_classifier}); wrote {args.out}")
    return 0


def cmd_sweep(args) -> int:
    opts = _run_sweep_opts()
    extra = ("languages", "shots", "settings", "strategies", "classifier",
             "jobs", "anchor_shot")
    resolved = _resolve(args, opts, extra_keys=extra)
    store = read_store(args.store)
    languages = _str_list(resolved.get("languages") or list(store.languages))
    shots = (_int_list(resolved["shots"], "--shots")
             if resolved.get("shots") is not None else list(SHOTS))
    settings = _str_list(resolved.get("settings") or list(SETTINGS))
    strategies = _str_list(resolved.get("strategies") or list(DEFAULT_SWEEP_STRATEGIES))
    classifier = resolved.get("classifier") or "auto"
    jobs = int(resolved.get("jobs") or 1)
    anchor_shot = int(resolved.get("anchor_shot") or 0)

    for s in settings:
        if s not in SETTINGS:
            raise UsageError(f"unknown setting {s!r}; choose from {SETTINGS}")
    for s in strategies:
        if s not in STRATEGIES:
            raise UsageError(f"unknown strategy {s!r}; choose from {STRATEGIES}")
    unknown = [l for l in languages if l not in store.languages]
    if unknown:
        raise DataError(f"languages not in store: {unknown}")

    # jobs and output paths never enter the config hash: they cannot change
    # a single computed number
    hashed = {k: v for k, v in resolved.items() if k not in ("jobs",)}
    hashed.update(languages=languages, shots=shots, settings=settings,
                  strategies=strategies, classifier=classifier,
                  anchor_shot=anchor_shot, store_hash=store_hash(store))
    chash = reporting.config_hash(hashed)
    _log_config("sweep", hashed, chash)

    if args.dry_run:
        cells = [
            {"setting": s, "language": l, "strategy": st, "shot": k,
             "seed": f"{cell_seed(resolved['seed'], s, l, k, st):016x}"}
            for s in settings for l in languages for st in strategies for k in shots
        ]
        print(json.dumps({"config_hash": chash, "store_hash": hashed["store_hash"],
                          "cells": cells}, indent=2, sort_keys=True))
        return 0

    out_dir = _out_dir(args)
    os.makedirs(out_dir, exist_ok=True)
    overrides = {k: resolved[k] for k in list(_TRAIN_OPTS) + list(_CLS_OPTS)}
    overrides["svm_gamma"] = _gamma(overrides["svm_gamma"])
    table = sweep(
        store, languages=languages, shots=shots, settings=settings,
        strategies=strategies, master_seed=resolved["seed"], classifier=classifier,
        anchor_shot=anchor_shot, jobs=jobs, config_overrides=overrides,
    )
    rows = reporting.rows_from_table(table)
    meta = {"config_hash": chash, "store_hash": table.store_hash,
            "master_seed": table.master_seed, "anchor_shot": table.anchor_shot}
    results_path = os.path.join(out_dir, "results.csv")
    reporting.write_results(rows, results_path, meta)
    written = [results_path]

    table_path = os.path.join(out_dir, "table.txt")
    reporting.write_table_text(reporting.render_report(rows, include_deltas=False),
                               table_path, meta)
    written.append(table_path)

    if {"lolo", "crosslingual"} <= set(settings):
        try:
            deltas, _ = lolo_delta(table)
            delta_path = os.path.join(out_dir, "deltas.csv")
            reporting.write_deltas(deltas, delta_path, meta)
            written.append(delta_path)
        except ClapAdaptError as exc:
            print(f"[clapadapt sweep] skipping deltas: {exc}", file=sys.stderr)
    curves_path = os.path.join(out_dir, "curves.csv")
    reporting.write_curves(reporting.compute_curves(rows), curves_path, meta)
    written.append(curves_path)

    failed = [c for c in table.cells if c.status != "ok"]
    print(f"swept {len(table.cells)} cells ({len(failed)} failed); wrote "
          + ", ".join(written))
    return 0


def cmd_report(args) -> int:
    resolved = {"results": list(args.results)}
    parsed = [reporting.read_results(p) for p in args.results]
    merged = reporting.merge_results(parsed)
    hashes = {m["store_hash"] for _, m in parsed if "store_hash" in m}
    resolved["store_hash"] = sorted(hashes)[0] if hashes else ""
    chash = reporting.config_hash(resolved)
    _log_config("report", resolved, chash)
    text = reporting.render_report(merged)
    meta = {"config_hash": chash}
    if resolved["store_hash"]:
        meta["store_hash"] = resolved["store_hash"]
    if args.out:
        reporting.write_table_text(text, args.out, meta)
        print(f"wrote {args.out}")
    print(text, end="")
    return 0


# parser assembly


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clapadapt",
        description="Few-shot contrastive adaptation and cross-lingual "
                    "evaluation over embedding stores.",
        epilog=CONFIG_SCHEMA_NOTE,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic embedding store",
                       epilog=CONFIG_SCHEMA_NOTE)
    p.add_argument("--out", required=True, help="output store path")
    p.add_argument("--config", help="JSON config file overlay")
    p.add_argument("--no-normalize", action="store_true",
                   help="keep raw vectors instead of L2-normalizing (default: normalize)")
    _add_opts(p, {
        "languages": (int, None, "number of languages (default: 4)"),
        "dim": (int, None, "embedding dimension (default: 12)"),
        "train": (int, None, "train samples per class per language (default: 12)"),
        "test": (int, None, "test samples per class per language (default: 8)"),
        "separation": (float, None, "class mean separation in noise sigmas (default: 6.0)"),
        "offset_scale": (float, None, "language offset norm (default: 0.5)"),
        "label_noise": (float, None, "label flip probability (default: 0.0)"),
        "seed": (int, None, "generator seed (default: 0)"),
    })
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="build a store from a matrix + manifest, "
                                      "or validate and re-emit an existing store",
                       epilog=CONFIG_SCHEMA_NOTE)
    p.add_argument("--out", required=True, help="output store path")
    p.add_argument("--store", help="existing store to validate and re-emit")
    p.add_argument("--matrix", help=".npy matrix, rows aligned with manifest records")
    p.add_argument("--manifest", help="JSON manifest: languages, records, meta")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("adapt", help="train a projection head on a support set "
                                     "and dump the adapted store",
                       epilog=CONFIG_SCHEMA_NOTE)
    p.add_argument("--store", required=True, help="input store path")
    p.add_argument("--out-store", required=True, help="adapted store path")
    p.add_argument("--out-head", required=True, help="trained head path")
    p.add_argument("--config", help="JSON config file overlay")
    _add_opts(p, dict(_TRAIN_OPTS))
    _add_opts(p, {"shot": (int, None, "support examples per class per language (default: 5)"),
                  "seed": (int, None, "adaptation seed (default: 0)")})
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("run", help="run one experiment cell",
                       epilog=CONFIG_SCHEMA_NOTE)
    p.add_argument("--store", required=True, help="input store path")
    p.add_argument("--setting", required=True, choices=SETTINGS)
    p.add_argument("--language", required=True, help="target language tag")
    p.add_argument("--shot", required=True, type=int, help="support size per class per language")
    p.add_argument("--strategy", default="projection_only", choices=STRATEGIES)
    p.add_argument("--classifier", default="auto", choices=("svm", "mlp", "auto"))
    p.add_argument("--ft-store", help="externally adapted store (projection_ft)")
    p.add_argument("--out", required=True, help="output results file")
    p.add_argument("--config", help="JSON config file overlay")
    p.add_argument("--dry-run", action="store_true",
                   help="print the resolved plan without executing")
    _add_opts(p, _run_sweep_opts())
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run the cross product of languages, "
                                     "shots, settings, and strategies",
                       epilog=CONFIG_SCHEMA_NOTE)
    p.add_argument("--store", required=True, help="input store path")
    p.add_argument("--out-dir", help="output directory (or CLAPADAPT_OUT_DIR)")
    p.add_argument("--languages", help="comma list (default: all store languages)")
    p.add_argument("--shots", help=f"comma list (default: {','.join(map(str, SHOTS))})")
    p.add_argument("--settings", help=f"comma list (default: {','.join(SETTINGS)})")
    p.add_argument("--strategies",
                   help=f"comma list (default: {','.join(DEFAULT_SWEEP_STRATEGIES)})")
    p.add_argument("--classifier", choices=("svm", "mlp", "auto"),
                   help="classifier per cell (default: auto)")
    p.add_argument("--jobs", type=int, help="worker threads; results identical (default: 1)")
    p.add_argument("--anchor-shot", dest="anchor_shot", type=int,
                   help="shot anchoring the per-language classifier choice (default: 0)")
    p.add_argument("--config", help="JSON config file overlay")
    p.add_argument("--dry-run", action="store_true",
                   help="print the resolved cell plan without executing")
    _add_opts(p, _run_sweep_opts())
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="render tables from result files",
                       epilog=CONFIG_SCHEMA_NOTE)
    p.add_argument("--results", required=True, nargs="+", help="result files to merge")
    p.add_argument("--out", help="write the report here as well as stdout")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4
    except ClapAdaptError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
