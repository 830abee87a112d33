"""Command-line entry point.

Subcommands: fetch, preprocess, features, train-objective, train-priority,
predict, evaluate, agreement. A JSON config file provides defaults; flags
override it. Every run writes a reproducibility manifest (config snapshot,
seeds, input checksums) next to its primary output, and all artifacts are
byte-identical across re-runs with the same config and seed.

Exit codes: 0 success, 1 validation/usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import agreement as agreement_mod
from . import evalkit, features, ingest, labelmap, learn
from .corpus import Corpus, CorpusError, FilterConfig, filter_corpus, load_corpus, save_corpus
from .evalkit import ModelSpec, PriorityPipeline, train_pipeline
from .features import FeaturePipeline, ScalerParams, TfidfModel
from .learn import ChecksumMismatchError, TrainedModel, TrainingError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

DEFAULT_SEARCH_SPACE = {
    "n_trees": [20, 40, 60, 120],
    "max_depth": {"low": 4, "high": 16},
    "min_leaf": [1, 2, 4],
}


class ValidationError(Exception):
    pass


# ---------------------------------------------------------------------------
# Config and manifest plumbing

def load_config(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        raise ValidationError(f"config file not found: {p}")
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config file {p} is not valid JSON: {exc}")


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(primary_output: Path, command: str, config: dict,
                   seed: int | None, inputs: Sequence[Path],
                   outputs: Sequence[Path]) -> None:
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "inputs": {str(p): _sha256_file(Path(p)) for p in inputs if Path(p).exists()},
        "outputs": [str(p) for p in outputs],
    }
    path = Path(str(primary_output) + ".manifest.json")
    path.write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def _json_dump(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, sort_keys=True, indent=1, default=_np_default) + "\n",
                    encoding="utf-8")


def _np_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _load_input_corpus(path: str, strict: bool) -> Corpus:
    corpus, report = load_corpus(path, strict=strict)
    for lineno, message in report.errors:
        print(f"warning: {path}:{lineno}: {message}", file=sys.stderr)
    return corpus


def model_spec_from(config: dict, args: argparse.Namespace) -> ModelSpec:
    model_cfg = dict(config.get("model", {}))
    spec = ModelSpec(
        classifier=getattr(args, "classifier", None) or model_cfg.get("classifier", "forest"),
        balancing=getattr(args, "balancing", None) or model_cfg.get("balancing", "weights"),
        weights_i=(getattr(args, "weights_i", None)
                   if getattr(args, "weights_i", None) is not None
                   else model_cfg.get("weights_i")),
        stage1=getattr(args, "stage1", None) or model_cfg.get("stage1", "internal"),
        hyperparams=model_cfg.get("hyperparams", {}),
        title_max_features=model_cfg.get("title_max_features", features.TITLE_MAX_FEATURES),
        desc_max_features=model_cfg.get("desc_max_features", features.DESC_MAX_FEATURES),
        seed=args.seed,
    )
    if getattr(args, "objective_probs", None):
        spec = replace(spec, stage1="file")
    return spec


def search_space_from(config: dict) -> dict:
    """JSON search space: lists are choices, {"low","high"} objects are ranges."""
    raw = config.get("search_space", DEFAULT_SEARCH_SPACE)
    space = {}
    for name, entry in raw.items():
        if isinstance(entry, dict):
            space[name] = (entry["low"], entry["high"])
        elif isinstance(entry, list):
            space[name] = entry
        else:
            raise ValidationError(f"bad search space entry for {name!r}")
    return space


# ---------------------------------------------------------------------------
# Asset (preprocessing) bundle persistence

def save_assets(path: Path, pipeline: FeaturePipeline,
                stage1_model: TrainedModel | None) -> None:
    doc = {
        "format": "issuetriage-assets",
        "version": 1,
        "tfidf_title": pipeline.tfidf_title.to_doc(),
        "tfidf_desc": pipeline.tfidf_desc.to_doc(),
        "scaler": pipeline.scaler.to_doc(),
        "label_checksums": pipeline.maps.checksums(),
        "stage1_model": None if stage1_model is None else {
            "kind": stage1_model.kind,
            "classes": list(stage1_model.classes),
            "params": stage1_model.params,
            "metadata": stage1_model.metadata,
        },
    }
    _json_dump(path, doc)


def load_assets(path: Path) -> tuple[FeaturePipeline, TrainedModel | None]:
    doc = json.loads(path.read_text(encoding="utf-8"))
    if doc.get("format") != "issuetriage-assets":
        raise ValidationError(f"{path}: not an assets bundle")
    maps = labelmap.load_label_maps()
    recorded = doc.get("label_checksums", {})
    current = maps.checksums()
    for name, checksum in recorded.items():
        if current.get(name) != checksum:
            raise ChecksumMismatchError(
                f"label table {name!r} changed since the assets were built")
    pipeline = FeaturePipeline(
        tfidf_title=TfidfModel.from_doc(doc["tfidf_title"]),
        tfidf_desc=TfidfModel.from_doc(doc["tfidf_desc"]),
        scaler=ScalerParams.from_doc(doc["scaler"]),
        maps=maps,
        lexicon=None,
    )
    stage1 = None
    if doc.get("stage1_model"):
        s = doc["stage1_model"]
        stage1 = TrainedModel(kind=s["kind"], classes=tuple(s["classes"]),
                              params=s["params"], metadata=s.get("metadata", {}))
    return pipeline, stage1


def assets_path_for(model_path: Path) -> Path:
    return Path(str(model_path) + ".assets.json")


def load_probs_file(path: Path) -> dict[str, np.ndarray]:
    """Imported stage-one probabilities: TSV of issue_id and one column per
    objective class."""
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValidationError(f"{path}: empty probabilities file")
    header = lines[0].split("\t")
    expected = ["issue_id", *learn.OBJECTIVE_CLASS_ORDER]
    if header != expected:
        raise ValidationError(f"{path}: header must be {expected}, got {header}")
    probs = {}
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split("\t")
        if len(cells) != 4:
            raise ValidationError(f"{path}:{lineno}: expected 4 columns")
        vec = np.array([float(c) for c in cells[1:]])
        if abs(vec.sum() - 1.0) > 1e-6:
            raise ValidationError(f"{path}:{lineno}: probabilities sum to {vec.sum()}")
        probs[cells[0]] = vec
    return probs


# ---------------------------------------------------------------------------
# Commands

def cmd_fetch(args, config) -> int:
    out = Path(args.out)
    cfg = ingest.ClientConfig(
        cache_dir=Path(args.cache_dir or config.get("paths", {}).get("cache", ".cache")),
        max_parallel_requests=args.parallel,
        refresh=args.refresh,
    )
    query = ingest.FetchQuery(repo=args.repo, state=args.state,
                              include_pull_requests=not args.no_pull_requests,
                              created_before=args.created_before)
    client = ingest.IssueClient(cfg)
    issues = ingest.fetch_issues(cfg, query, client=client)
    corpus, failures = ingest.hydrate(
        cfg, issues, client=client,
        provenance={"source": f"api:{args.repo}", "state": query.state})
    save_corpus(corpus, out)
    for failure in failures:
        print(f"warning: issue {failure.issue_id}: {failure.resource}: {failure.error}",
              file=sys.stderr)
    print(f"fetched {len(corpus)} issues from {args.repo} "
          f"({client.network_requests} network requests)")
    write_manifest(out, "fetch", config, args.seed, [], [out])
    return EXIT_OK


def cmd_preprocess(args, config) -> int:
    out = Path(args.out)
    corpus = _load_input_corpus(args.input, args.strict)
    filter_cfg = config.get("filter", {})
    rules = FilterConfig(
        min_text_chars=filter_cfg.get("min_text_chars", 3),
        non_english_threshold=filter_cfg.get("non_english_threshold", 0.5),
        excluded_clusters=tuple(filter_cfg.get(
            "excluded_clusters", FilterConfig().excluded_clusters)),
    )
    maps = labelmap.load_label_maps()
    filtered, report = filter_corpus(corpus, rules, cluster_of=maps.clusters.cluster_of)
    save_corpus(filtered, out)
    _json_dump(Path(str(out) + ".report.json"), report.as_dict())
    print(f"kept {len(filtered)} / {len(corpus)} issues "
          f"(removed: {report.as_dict()})")
    write_manifest(out, "preprocess", config, args.seed, [Path(args.input)], [out])
    return EXIT_OK


def _format_float(x: float) -> str:
    return format(float(x), ".12g")


def cmd_features(args, config) -> int:
    out = Path(args.out)
    corpus = _load_input_corpus(args.input, args.strict)
    maps = labelmap.load_label_maps()
    spec = model_spec_from(config, args)
    if not len(corpus):
        out.write_text("", encoding="utf-8")
        write_manifest(out, "features", config, args.seed, [Path(args.input)], [out])
        print("empty corpus; wrote empty matrix")
        return EXIT_OK
    pipeline = features.fit_feature_pipeline(
        corpus.issues, maps,
        title_max_features=spec.title_max_features,
        desc_max_features=spec.desc_max_features)
    stage1 = evalkit.train_objective_model(corpus.issues, maps, pipeline, seed=args.seed)
    bundle = PriorityPipeline(pipeline, classifier=None, stage1_model=stage1, spec=spec)  # type: ignore[arg-type]
    header = ["issue_id"]
    header += [f"nf:{n}" for n in features.FEATURE_NAMES]
    header += [f"lf:{rep}" for rep in maps.clusters.representatives]
    header += ["tf"]
    lines = ["\t".join(header)]
    for issue in corpus.issues:
        vec = pipeline.assemble(issue, bundle.objective_probs(issue))
        tf_dense_offset = 0
        pairs = []
        for sparse in (vec.tf_title, vec.tf_desc):
            pairs.extend((idx + tf_dense_offset, val) for idx, val in sparse.pairs())
            tf_dense_offset += sparse.size
        pairs.extend((tf_dense_offset + j, float(p))
                     for j, p in enumerate(vec.objective_probs))
        cells = [issue.id]
        cells += [_format_float(v) for v in vec.nf]
        cells += [str(int(v)) for v in vec.lf]
        cells.append(" ".join(f"{i}:{_format_float(v)}" for i, v in pairs))
        lines.append("\t".join(cells))
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote feature matrix for {len(corpus)} issues to {out}")
    write_manifest(out, "features", config, args.seed, [Path(args.input)], [out])
    return EXIT_OK


def cmd_train_objective(args, config) -> int:
    out = Path(args.model)
    corpus = _load_input_corpus(args.input, args.strict)
    maps = labelmap.load_label_maps()
    spec = model_spec_from(config, args)
    pipeline = features.fit_feature_pipeline(
        corpus.issues, maps,
        title_max_features=spec.title_max_features,
        desc_max_features=spec.desc_max_features)
    model = evalkit.train_objective_model(
        corpus.issues, maps, pipeline,
        classifier=args.classifier or "nb", seed=args.seed)
    if model is None:
        print("error: fewer than two objective classes in the corpus", file=sys.stderr)
        return EXIT_RUNTIME
    model.asset_fingerprints = pipeline.fingerprints()
    model.metadata["seed"] = args.seed
    learn.save_model(model, out)
    save_assets(assets_path_for(out), pipeline, None)
    print(f"trained stage-one {model.kind} model -> {out}")
    write_manifest(out, "train-objective", config, args.seed,
                   [Path(args.input)], [out, assets_path_for(out)])
    return EXIT_OK


def cmd_train_priority(args, config) -> int:
    out = Path(args.model)
    corpus = _load_input_corpus(args.input, args.strict)
    maps = labelmap.load_label_maps()
    spec = model_spec_from(config, args)
    probs_file = load_probs_file(Path(args.objective_probs)) if args.objective_probs else None
    issues = [i for i in corpus.issues
              if labelmap.priority_of(i.labels, maps.priority) is not None]
    dropped = len(corpus) - len(issues)
    if dropped:
        print(f"warning: {dropped} issues without priority labels excluded from training",
              file=sys.stderr)
    if args.tune:
        space = search_space_from(config)
        labels = [labelmap.priority_of(i.labels, maps.priority).value for i in issues]
        probe = train_pipeline(issues, spec, maps, probs_file=probs_file)
        X = probe.vectorize(issues, probs_file)

        def fit(cfg, X_train, y_train, seed):
            weights = learn.compute_class_weights(y_train) \
                if spec.balancing == "weights" else None
            return learn.fit_random_forest(
                X_train, y_train, weights=weights, seed=seed,
                classes=learn.PRIORITY_CLASS_ORDER,
                n_trees=cfg.get("n_trees", 60), max_depth=cfg.get("max_depth", 12),
                min_leaf=cfg.get("min_leaf", 1))

        best, trace = learn.random_search(
            space, budget=args.tune, cv_folds=args.cv_folds, seed=args.seed,
            X=X, labels=labels, fit=fit,
            objective=evalkit.macro_f1 if args.tune_metric == "macro-f1" else None)
        spec = replace(spec, hyperparams={**spec.hyperparams, **best})
        _json_dump(Path(str(out) + ".search.json"), {"best": best, "trace": trace})
    bundle = train_pipeline(issues, spec, maps, probs_file=probs_file)
    learn.save_model(bundle.classifier, out)
    save_assets(assets_path_for(out), bundle.feature_pipeline, bundle.stage1_model)
    for note in bundle.notes:
        print(f"note: {note}", file=sys.stderr)
    print(f"trained priority {bundle.classifier.kind} model on {len(issues)} issues -> {out}")
    write_manifest(out, "train-priority", config, args.seed,
                   [Path(args.input)], [out, assets_path_for(out)])
    return EXIT_OK


def cmd_predict(args, config) -> int:
    out = Path(args.out)
    model = learn.load_model(args.model)
    pipeline, stage1 = load_assets(assets_path_for(Path(args.model)))
    model.verify_assets(pipeline.fingerprints())
    corpus = _load_input_corpus(args.input, args.strict)
    probs_file = load_probs_file(Path(args.objective_probs)) if args.objective_probs else None
    fingerprint = model.fingerprint()

    if tuple(model.classes) == learn.OBJECTIVE_CLASS_ORDER:
        # stage-one model: emit the importable objective-probabilities format
        lines = ["\t".join(["issue_id", *learn.OBJECTIVE_CLASS_ORDER])]
        for issue in corpus.issues:
            counts = evalkit._stage1_counts(pipeline, issue)
            probs = model.predict_proba(counts[None, :])[0]
            lines.append("\t".join([issue.id, *(_format_float(p) for p in probs)]))
    else:
        spec = model_spec_from(config, args)
        bundle = PriorityPipeline(pipeline, classifier=model, stage1_model=stage1, spec=spec)
        lines = ["\t".join(["issue_id", "predicted",
                            *(f"p_{c}" for c in model.classes), "model_fingerprint"])]
        if len(corpus):
            predicted, probs = bundle.predict(list(corpus.issues), probs_file)
            for issue, label, row in zip(corpus.issues, predicted, probs):
                lines.append("\t".join(
                    [issue.id, label, *(_format_float(p) for p in row), fingerprint]))
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote predictions for {len(corpus)} issues to {out}")
    write_manifest(out, "predict", config, args.seed,
                   [Path(args.input), Path(args.model)], [out])
    return EXIT_OK


def cmd_evaluate(args, config) -> int:
    report_path = Path(args.report)
    corpus = _load_input_corpus(args.input, args.strict)
    maps = labelmap.load_label_maps()
    spec = model_spec_from(config, args)
    outputs = [report_path]
    if args.mode == "cv":
        result = evalkit.cross_validate(corpus, spec, k=args.cv_folds,
                                        seed=args.seed, maps=maps)
        doc = result.as_dict()
        print(f"cv accuracy: {result.mean['accuracy']:.3f} "
              f"(+/- {result.std['accuracy']:.3f})")
    elif args.mode == "project":
        result = evalkit.evaluate_project_based(corpus, spec, maps=maps)
        doc = result.as_dict()
        for repo, rep in sorted(result.per_repo.items()):
            print(f"{repo:<40} accuracy={rep.accuracy:.3f} n={rep.n}")
        for repo, reason in sorted(result.skipped.items()):
            print(f"{repo:<40} skipped: {reason}")
        print(f"mean accuracy: {result.mean_accuracy:.3f}  "
              f"pooled accuracy: {result.pooled_accuracy:.3f}")
        if args.emit_csv:
            csv_path = report_path.with_suffix(".csv")
            rows = ["repo,n,accuracy," + ",".join(
                f"{m}_{c}" for c in learn.PRIORITY_CLASS_ORDER
                for m in ("precision", "recall", "f1"))]
            for repo, rep in sorted(result.per_repo.items()):
                cells = [repo, str(rep.n), _format_float(rep.accuracy)]
                for cls in learn.PRIORITY_CLASS_ORDER:
                    c = rep.per_class[cls]
                    cells += [_format_float(c.precision), _format_float(c.recall),
                              _format_float(c.f1)]
                rows.append(",".join(cells))
            csv_path.write_text("\n".join(rows) + "\n", encoding="utf-8")
            outputs.append(csv_path)
    elif args.mode == "cross-project":
        report = evalkit.evaluate_cross_project(corpus, spec, seed=args.seed, maps=maps)
        doc = report.as_dict()
        print(f"cross-project accuracy: {report.accuracy:.3f} on "
              f"{len(report.metadata['test_repos'])} held-out repos")
        for cls, rep in report.per_class.items():
            print(f"  {cls:<6} precision={rep.precision:.3f} recall={rep.recall:.3f} "
                  f"f1={rep.f1:.3f} support={rep.support}")
    else:
        raise ValidationError(f"unknown evaluate mode {args.mode!r}")
    _json_dump(report_path, doc)
    write_manifest(report_path, f"evaluate:{args.mode}", config, args.seed,
                   [Path(args.input)], outputs)
    return EXIT_OK


def cmd_agreement(args, config) -> int:
    report_path = Path(args.report)
    matrix = agreement_mod.load_rating_matrix(args.ratings)
    reports = agreement_mod.compute_agreement_by_group(matrix, mode=args.agreement_mode)
    doc = {name: rep.as_dict() for name, rep in reports.items()}
    _json_dump(report_path, doc)
    overall = reports["overall"]
    print(f"percent agreement: {overall.percent_agreement:.3f}")
    print(f"randolph kappa:    {overall.randolph_kappa:.3f} ({overall.band})")
    if overall.fleiss_kappa is not None:
        print(f"fleiss kappa:      {overall.fleiss_kappa:.3f}")
    if overall.outliers:
        print(f"outlier raters:    {', '.join(overall.outliers)}")
    write_manifest(report_path, "agreement", config, args.seed,
                   [Path(args.ratings)], [report_path])
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing

class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        raise ValidationError(message)


def _add_global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    # attached to the main parser and to every subcommand so the flags work
    # in either position; SUPPRESS keeps the subcommand copy from clobbering
    # a value given before the command name
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=d, help="JSON config file")
    parser.add_argument("--seed", type=int, default=d, help="master RNG seed")
    parser.add_argument("--strict", action="store_true",
                        default=argparse.SUPPRESS if suppress else False,
                        help="fail on the first malformed corpus line")
    parser.add_argument("--refresh", action="store_true",
                        default=argparse.SUPPRESS if suppress else False,
                        help="bypass the response cache when fetching")
    parser.add_argument("--emit-csv", action="store_true", dest="emit_csv",
                        default=argparse.SUPPRESS if suppress else False,
                        help="also write per-repo results as CSV")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="issuetriage",
                     description="Classify issue objectives and predict priorities.")
    _add_global_flags(parser, suppress=False)
    common = _Parser(add_help=False)
    _add_global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", metavar="command",
                                parser_class=_Parser)

    p = sub.add_parser("fetch", parents=[common],
                       help="fetch and hydrate issues from the REST API")
    p.add_argument("--repo", required=True)
    p.add_argument("--state", default="closed", choices=["open", "closed", "all"])
    p.add_argument("--out", required=True)
    p.add_argument("--cache-dir", dest="cache_dir")
    p.add_argument("--parallel", type=int, default=4)
    p.add_argument("--no-pull-requests", action="store_true")
    p.add_argument("--created-before")

    p = sub.add_parser("preprocess", parents=[common], help="filter a corpus")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("features", parents=[common], help="dump the assembled feature matrix")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train-objective", parents=[common], help="train the stage-one objective model")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--classifier", choices=["nb", "logreg"])

    p = sub.add_parser("train-priority", parents=[common], help="train the stage-two priority model")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--classifier", choices=["forest", "logreg", "nb", "knn"])
    p.add_argument("--balancing", choices=["weights", "smote", "none"])
    p.add_argument("--weights-i", dest="weights_i", type=int)
    p.add_argument("--stage1", choices=["internal", "file", "uniform"])
    p.add_argument("--objective-probs", dest="objective_probs")
    p.add_argument("--tune", type=int, default=0,
                   help="random-search budget (0 disables tuning)")
    p.add_argument("--tune-metric", dest="tune_metric", default="accuracy",
                   choices=["accuracy", "macro-f1"])
    p.add_argument("--cv-folds", dest="cv_folds", type=int, default=3)

    p = sub.add_parser("predict", parents=[common], help="score a corpus with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--objective-probs", dest="objective_probs")

    p = sub.add_parser("evaluate", parents=[common], help="run an experiment protocol")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--mode", required=True, choices=["cv", "project", "cross-project"])
    p.add_argument("--report", required=True)
    p.add_argument("--cv-folds", dest="cv_folds", type=int, default=5)
    p.add_argument("--classifier", choices=["forest", "logreg", "nb", "knn"])
    p.add_argument("--balancing", choices=["weights", "smote", "none"])
    p.add_argument("--weights-i", dest="weights_i", type=int)
    p.add_argument("--stage1", choices=["internal", "file", "uniform"])

    p = sub.add_parser("agreement", parents=[common], help="inter-rater agreement statistics")
    p.add_argument("--ratings", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--mode", dest="agreement_mode", default="pairwise",
                   choices=["pairwise", "majority"])
    return parser


_COMMANDS = {
    "fetch": cmd_fetch,
    "preprocess": cmd_preprocess,
    "features": cmd_features,
    "train-objective": cmd_train_objective,
    "train-priority": cmd_train_priority,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "agreement": cmd_agreement,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        config = load_config(args.config)
        if args.seed is None:
            args.seed = config.get("seed", 0)
        for attr in ("input", "ratings"):
            value = getattr(args, attr, None)
            if value and not Path(value).exists():
                raise ValidationError(f"input file not found: {value}")
        return _COMMANDS[args.command](args, config)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CorpusError, TrainingError, ChecksumMismatchError,
            ingest.IngestError, agreement_mod.RatingMatrixError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
