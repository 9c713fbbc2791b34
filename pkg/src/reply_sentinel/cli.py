"""Command-line surface orchestrating the pipeline end to end.

Every run writes its outputs plus a ``run_manifest.json`` capturing the
resolved configuration and input digests. Exit codes: 0 success, 1 data or
validation failure (single-line JSON error on stdout), 2 usage error.
Progress goes to stderr only, so stdout stays machine-parsable.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import CorpusError, corpus_summary, load_corpus
from .dataset_builder import (
    DatasetError,
    build_dataset,
    read_classification_dataset,
    rq1_report,
    select_controls,
    select_targeted,
    write_classification_dataset,
    write_rq1_report,
)
from .evaluate import (
    EvalError,
    cross_campaign,
    engagement_correlation,
    evaluate_downsampled,
    fit_cv,
    imbalance_sweep,
    kfold_cv,
    permutation_importance,
    threshold_sweep,
)
from .features import (
    REPLIER_FEATURE_GROUPS,
    REPLIER_FEATURE_NAMES,
    TWEET_FEATURE_GROUPS,
    TWEET_FEATURE_NAMES,
    FeatureError,
    build_replier_matrix,
    build_tweet_matrix,
    detect_feature_kind,
    load_feature_csv,
    save_feature_csv,
)
from .models import (
    MODEL_KINDS,
    ModelError,
    apply_scaler,
    fit_scaler,
    save_model,
    train,
)
from .similarity import (
    FileEmbeddingProvider,
    HashingEmbedder,
    PairsCsvWriter,
    SimilarityError,
    compute_reply_embeddings,
    coreply_pair_join,
    join_from_pairs,
    load_pairs_csv,
    write_gap_report,
)
from .synth import GenerationError, SynthConfig, generate, write_synthetic

_DATA_ERRORS = (
    CorpusError, DatasetError, FeatureError, ModelError, EvalError,
    GenerationError, SimilarityError, FileNotFoundError, ValueError,
)


def _progress(msg: str) -> None:
    print(msg, file=sys.stderr)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(path: Path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _write_manifest(args: argparse.Namespace, outdir: Path) -> None:
    config = {
        k: (str(v) if isinstance(v, Path) else v)
        for k, v in sorted(vars(args).items())
        if not k.startswith("_") and k != "func"
    }
    inputs = {}
    for p in getattr(args, "input", None) or []:
        inputs[str(p)] = _sha256(Path(p))
    for attr in ("features", "dataset", "stopwords"):
        p = getattr(args, attr, None)
        if p:
            inputs[str(p)] = _sha256(Path(p))
    _write_json(outdir / "run_manifest.json", {
        "command": args.subcommand,
        "config": config,
        "inputs": inputs,
        "version": __version__,
        "created_utc": datetime.now(timezone.utc).isoformat(),
    })


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(args):
    result = load_corpus(args.input)
    _progress(
        f"loaded {len(result.corpus.replies)} replies, "
        f"{len(result.corpus.posts)} posts, {len(result.corpus.accounts)} accounts "
        f"({len(result.report.rejects)} rejected rows)"
    )
    return result


def _parse_range(spec: str, step: int) -> list[int]:
    try:
        lo, hi = spec.split("..")
        return list(range(int(lo), int(hi) + 1, step))
    except ValueError:
        raise ValueError(f"bad sweep range {spec!r}, expected a..b")


def _embedder_vectors(args, corpus, scope):
    choice = args.embedder
    if choice == "hashing":
        return compute_reply_embeddings(corpus, HashingEmbedder(), scope=scope), None
    if choice.startswith("file:"):
        provider = FileEmbeddingProvider(choice[5:])
        return provider.vectors, None
    if choice.startswith("pairs:"):
        grouped, _ = load_pairs_csv(choice[6:])
        return None, grouped
    raise ValueError(f"unknown embedder {choice!r}")


def _join_for(args, corpus, scope):
    vectors, pairs = _embedder_vectors(args, corpus, scope)
    if pairs is not None:
        return join_from_pairs(pairs, scope=scope)
    return coreply_pair_join(corpus, vectors, scope, seed=args.seed)


# --- subcommand handlers ----------------------------------------------------------

def _cmd_ingest(args) -> None:
    outdir = _outdir(args)
    result = _load(args)
    result.report.write_csv(outdir / "validation_report.csv")
    _write_json(outdir / "corpus_summary.json",
                corpus_summary(result.corpus, args.min_io_replies))
    _write_json(outdir / "provenance.json", [
        {"path": fp.path, "schema": fp.schema, "rows": fp.total_rows,
         "loaded": fp.loaded_rows, "rejected": fp.rejected_rows}
        for fp in result.corpus.provenance
    ])
    _write_manifest(args, outdir)


def _cmd_build_dataset(args) -> None:
    outdir = _outdir(args)
    corpus = _load(args).corpus
    dataset = build_dataset(corpus, args.min_io_replies, args.min_total_replies)
    write_classification_dataset(dataset, outdir / "classification_dataset.csv")
    with open(outdir / "dropped_authors.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["entity", "reason"])
        w.writerows(dataset.dropped_authors)
    _progress(f"dataset: {len(dataset.positives)} targeted / {len(dataset.negatives)} control")
    _write_manifest(args, outdir)


def _scope_from_args(args, corpus):
    if args.dataset:
        ds = read_classification_dataset(args.dataset)
        return ds.positives | ds.negatives, ds
    targeted = select_targeted(corpus, args.min_io_replies)
    ds = select_controls(corpus, targeted, args.min_total_replies)
    return ds.positives | ds.negatives, ds


def _cmd_similarity(args) -> None:
    outdir = _outdir(args)
    corpus = _load(args).corpus
    scope, _ = _scope_from_args(args, corpus)
    vectors, pairs = _embedder_vectors(args, corpus, scope)
    if pairs is not None:
        raise ValueError("the similarity subcommand computes pairs; use --embedder hashing or file:")
    sink = PairsCsvWriter(outdir / "pairs.csv")
    try:
        result = coreply_pair_join(corpus, vectors, scope, seed=args.seed, pairs_sink=sink)
    finally:
        sink.close()
    write_gap_report(result.gap_report, outdir / "gap_report.csv")
    _write_json(outdir / "join_stats.json", {
        "expected_pairs": result.stats.expected_pairs,
        "emitted_pairs": result.stats.emitted_pairs,
        "missing_skipped": result.stats.missing_skipped,
        "self_excluded": result.stats.self_excluded,
        "subsampled_posts": result.stats.subsampled_posts,
    })
    _write_manifest(args, outdir)


def _cmd_features(args) -> None:
    outdir = _outdir(args)
    corpus = _load(args).corpus
    scope, ds = _scope_from_args(args, corpus)
    join = _join_for(args, corpus, scope)
    tweet_matrix = build_tweet_matrix(
        corpus, ds.positives, ds.negatives, join.tweet_samples,
        min_total_replies=args.min_total_replies,
    )
    save_feature_csv(tweet_matrix, outdir / "tweet_features.csv")
    targeted = set(ds.positives)
    replier_join = _join_for(args, corpus, targeted)
    replier_matrix = build_replier_matrix(corpus, targeted, replier_join.replier_samples)
    save_feature_csv(replier_matrix, outdir / "replier_features.csv")
    write_gap_report(join.gap_report, outdir / "gap_report.csv")
    _write_json(outdir / "feature_report.json", {
        "tweet_rows": len(tweet_matrix.ids),
        "tweet_excluded": list(tweet_matrix.excluded),
        "replier_rows": len(replier_matrix.ids),
        "replier_excluded": list(replier_matrix.excluded),
        "replier_imputed": list(replier_matrix.imputed_ids),
    })
    _progress(
        f"features: {len(tweet_matrix.ids)} posts x {len(tweet_matrix.names)}, "
        f"{len(replier_matrix.ids)} repliers x {len(replier_matrix.names)}"
    )
    _write_manifest(args, outdir)


def _expected_names(kind: str):
    return {"tweet": TWEET_FEATURE_NAMES, "replier": REPLIER_FEATURE_NAMES}.get(kind)


def _cmd_train(args) -> None:
    outdir = _outdir(args)
    matrix = load_feature_csv(args.features)
    X, y = matrix.X, matrix.y
    if args.sampling == "downsample":
        from .evaluate import downsample_balanced

        rows = downsample_balanced(y, n_datasets=1, seed=args.seed)[0]
        X, y = X[rows], y[rows]
    cv = fit_cv(X, y, args.model, k=args.folds, seed=args.seed,
                sampling="oversample" if args.sampling == "oversample" else "none")
    scaler = fit_scaler(X)
    model = train(args.model, apply_scaler(scaler, X), y, args.seed,
                  feature_names=matrix.names)
    model.scaler = scaler
    model.threshold = cv.threshold
    save_model(model, outdir / "model.json")
    _write_json(outdir / "train_report.json", cv.report.as_dict())
    _progress(f"trained {args.model}: threshold {cv.threshold:.2f}, "
              f"CV F1 {cv.report.mean.f1:.3f}")
    _write_manifest(args, outdir)


def _cmd_evaluate(args) -> None:
    outdir = _outdir(args)
    matrix = load_feature_csv(args.features)
    kinds = list(MODEL_KINDS) if args.model == "all" else [args.model]
    table = {}
    for kind in kinds:
        if args.sampling == "downsample":
            report = evaluate_downsampled(matrix.X, matrix.y, kind,
                                          n_datasets=args.n_datasets,
                                          k=args.folds, seed=args.seed)
        else:
            report = kfold_cv(matrix.X, matrix.y, kind, k=args.folds, seed=args.seed,
                              sampling=args.sampling)
        table[kind] = report.as_dict()
        m, s = report.mean, report.stderr
        _progress(
            f"{kind}: P {m.precision:.2f}±{s.precision:.2f} R {m.recall:.2f}±{s.recall:.2f} "
            f"F1 {m.f1:.2f}±{s.f1:.2f} AUC {m.auc:.2f}±{s.auc:.2f}"
        )
    _write_json(outdir / "table2.json", table)
    _write_manifest(args, outdir)


def _cmd_importance(args) -> None:
    outdir = _outdir(args)
    matrix = load_feature_csv(args.features)
    kind = detect_feature_kind(matrix.names)
    groups = {"tweet": TWEET_FEATURE_GROUPS, "replier": REPLIER_FEATURE_GROUPS}.get(kind)
    if groups is None:
        raise FeatureError("feature file matches neither the post nor the replier schema")
    cv = fit_cv(matrix.X, matrix.y, args.model, k=args.folds, seed=args.seed)
    rows = permutation_importance(cv, matrix.X, matrix.y, groups, matrix.names,
                                  repeats=args.repeats, seed=args.seed)
    name = "fig4_importance.csv" if kind == "tweet" else "fig9_importance.csv"
    with open(outdir / name, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["group", "median_f1_drop"] + [f"drop_{i}" for i in range(args.repeats)])
        for row in rows:
            w.writerow([row.group, repr(row.median_drop)] + [repr(d) for d in row.drops])
    _progress("importance ranking: " + ", ".join(r.group for r in rows[:3]) + ", ...")
    _write_manifest(args, outdir)


def _sweep_report_rows(rows):
    out = []
    for row in rows:
        if row.report is None:
            out.append([row.parameter, "", "", "", "", row.note])
        else:
            m = row.report.mean
            out.append([row.parameter, repr(m.precision), repr(m.recall),
                        repr(m.f1), repr(m.auc), row.note])
    return out


def _cmd_sweep(args) -> None:
    outdir = _outdir(args)
    if args.mode == "threshold" and not args.input:
        raise ValueError("threshold sweep needs --input corpus files")
    if args.mode == "imbalance" and not args.features:
        raise ValueError("imbalance sweep needs --features")
    if args.mode == "threshold":
        corpus = _load(args).corpus
        all_posts = set(corpus.posts)
        vectors, pairs = _embedder_vectors(args, corpus, all_posts)

        def samples_for(scope):
            if pairs is not None:
                return join_from_pairs(pairs, scope=scope).tweet_samples
            return coreply_pair_join(corpus, vectors, scope, seed=args.seed).tweet_samples

        rows = threshold_sweep(
            corpus, samples_for,
            thresholds=_parse_range(args.sweep_range or "5..20", step=1),
            kind=args.model, k=args.folds, seed=args.seed,
            min_total_replies=args.min_total_replies,
        )
        name = "fig6_sweep.csv"
        header = ["min_io_replies", "precision", "recall", "f1", "auc", "note"]
    else:
        matrix = load_feature_csv(args.features)
        rows = imbalance_sweep(
            matrix.X, matrix.y,
            ratios=_parse_range(args.sweep_range or "5..45", step=5),
            kind=args.model, k=args.folds, seed=args.seed,
        )
        name = "fig10_sweep.csv"
        header = ["negative_ratio", "precision", "recall", "f1", "auc", "note"]
    with open(outdir / name, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(_sweep_report_rows(rows))
    _write_manifest(args, outdir)


def _cmd_cross_campaign(args) -> None:
    outdir = _outdir(args)
    matrix = load_feature_csv(args.features)
    if matrix.campaigns is None:
        raise FeatureError("cross-campaign evaluation needs a campaign column")
    datasets = {}
    for campaign in sorted(set(matrix.campaigns)):
        rows = np.array([i for i, c in enumerate(matrix.campaigns) if c == campaign])
        datasets[campaign] = (matrix.X[rows], matrix.y[rows])
    result = cross_campaign(datasets, kind=args.model, k=args.folds, seed=args.seed)
    _write_json(outdir / "table4.json", result.as_dict())
    with open(outdir / "table4_matrix.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["train\\test"] + result.campaigns)
        for i, name in enumerate(result.campaigns):
            w.writerow([name] + [repr(float(v)) for v in result.f1_matrix[i]])
    _write_manifest(args, outdir)


def _cmd_synth(args) -> None:
    outdir = _outdir(args)
    overrides = {
        k: v for k, v in vars(args).items()
        if k in SynthConfig.__dataclass_fields__ and v is not None
    }
    config = SynthConfig(**{**{"seed": args.seed}, **overrides})
    corpus, truth = generate(config)
    files = write_synthetic(corpus, truth, outdir)
    _progress(f"synthetic corpus: {len(corpus.posts)} posts, {len(corpus.replies)} replies "
              f"-> {', '.join(files)}")
    _write_manifest(args, outdir)


def _cmd_rq1_report(args) -> None:
    outdir = _outdir(args)
    corpus = _load(args).corpus
    stopwords = None
    if args.stopwords:
        stopwords = Path(args.stopwords).read_text(encoding="utf-8").split()
    report = rq1_report(corpus, min_io_replies=args.min_io_replies, stopwords=stopwords)
    write_rq1_report(report, outdir)
    try:
        corr = engagement_correlation(corpus, samples=10, seed=args.seed)
        _write_json(outdir / "engagement_correlation.json", corr)
    except EvalError as exc:
        _progress(f"engagement correlation skipped: {exc}")
    _write_manifest(args, outdir)


# --- parser -----------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser, *, inputs=False, features=False) -> None:
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None,
                   help="key=value file; entries override command-line flags")
    if inputs:
        p.add_argument("--input", nargs="+", required=True, help="corpus CSV files")
        p.add_argument("--min-io-replies", type=int, default=5, dest="min_io_replies")
        p.add_argument("--min-total-replies", type=int, default=5, dest="min_total_replies")
    if features:
        p.add_argument("--features", required=True, help="feature matrix CSV")
    if inputs or features:
        p.add_argument("--model", default="random_forest",
                       choices=list(MODEL_KINDS) + ["all"])
        p.add_argument("--folds", type=int, default=10)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reply-sentinel",
        description="Coordinated reply attack detection pipeline",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("ingest", help="load and validate corpus CSVs")
    _add_common(p, inputs=True)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("build-dataset", help="construct the targeted/control dataset")
    _add_common(p, inputs=True)
    p.set_defaults(func=_cmd_build_dataset)

    p = sub.add_parser("similarity", help="pairwise cosine join over co-replies")
    _add_common(p, inputs=True)
    p.add_argument("--dataset", default=None, help="classification_dataset.csv scope")
    p.add_argument("--embedder", default="hashing",
                   help="hashing | file:<vectors.csv> | pairs:<pairs.csv>")
    p.set_defaults(func=_cmd_similarity)

    p = sub.add_parser("features", help="assemble post and replier feature matrices")
    _add_common(p, inputs=True)
    p.add_argument("--dataset", default=None, help="classification_dataset.csv scope")
    p.add_argument("--embedder", default="hashing",
                   help="hashing | file:<vectors.csv> | pairs:<pairs.csv>")
    p.set_defaults(func=_cmd_features)

    p = sub.add_parser("train", help="train one classifier on a feature matrix")
    _add_common(p, features=True)
    p.add_argument("--sampling", default="none",
                   choices=["downsample", "oversample", "none"])
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="cross-validated evaluation of classifiers")
    _add_common(p, features=True)
    p.add_argument("--sampling", default="none",
                   choices=["downsample", "oversample", "none"])
    p.add_argument("--n-datasets", type=int, default=10, dest="n_datasets",
                   help="balanced datasets used with --sampling downsample")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("importance", help="grouped permutation feature importance")
    _add_common(p, features=True)
    p.add_argument("--repeats", type=int, default=10)
    p.set_defaults(func=_cmd_importance)

    p = sub.add_parser("sweep", help="threshold or imbalance sweep")
    p.add_argument("--mode", required=True, choices=["threshold", "imbalance"])
    p.add_argument("--sweep-range", default=None, dest="sweep_range",
                   help="a..b (threshold default 5..20, imbalance 5..45 step 5)")
    p.add_argument("--input", nargs="*", default=None, help="corpus CSVs (threshold mode)")
    p.add_argument("--features", default=None, help="feature CSV (imbalance mode)")
    p.add_argument("--embedder", default="hashing")
    p.add_argument("--min-io-replies", type=int, default=5, dest="min_io_replies")
    p.add_argument("--min-total-replies", type=int, default=5, dest="min_total_replies")
    p.add_argument("--model", default="random_forest", choices=list(MODEL_KINDS))
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("cross-campaign", help="train/test transfer across campaigns")
    _add_common(p, features=True)
    p.set_defaults(func=_cmd_cross_campaign)

    p = sub.add_parser("synth", help="generate a synthetic labeled campaign")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--config", default=None)
    for fname, f in SynthConfig.__dataclass_fields__.items():
        if fname in ("seed", "campaign"):
            continue
        flag = "--" + fname.replace("_", "-")
        p.add_argument(flag, type=type(f.default), default=None, dest=fname)
    p.add_argument("--campaign", default=None)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("rq1-report", help="exploratory distribution tables")
    _add_common(p, inputs=True)
    p.add_argument("--stopwords", default=None, help="file with one stop word per line")
    p.set_defaults(func=_cmd_rq1_report)

    return parser


def _apply_config_file(args: argparse.Namespace) -> None:
    if not getattr(args, "config", None):
        return
    for line_no, line in enumerate(Path(args.config).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"bad config line {line_no}: {line!r}")
        key, _, raw = line.partition("=")
        key = key.strip().replace("-", "_")
        raw = raw.strip()
        if not hasattr(args, key):
            raise ValueError(f"unknown config key {key!r}")
        current = getattr(args, key)
        if isinstance(current, bool):
            value = raw.lower() in ("1", "true", "yes")
        elif isinstance(current, int):
            value = int(raw)
        elif isinstance(current, float):
            value = float(raw)
        elif current is None:
            for cast in (int, float):
                try:
                    value = cast(raw)
                    break
                except ValueError:
                    continue
            else:
                value = raw
        else:
            value = raw
        setattr(args, key, value)


def run(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    try:
        _apply_config_file(args)
        args.func(args)
    except _DATA_ERRORS as exc:
        print(json.dumps({"error": {"type": type(exc).__name__, "message": str(exc)}}))
        return 1
    return 0


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
