"""Evaluation: metrics, cross-validation, experiment drivers, importance.

Also home of the end-to-end priority pipeline glue (fit preprocessing,
resolve stage-one objective probabilities, train, predict) shared by the
experiment drivers and the CLI. Preprocessing is always refit inside each
fold or split on its training side only; held-out issues never influence
the vocabulary or the scaler.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from . import features, labelmap, learn, sentiment, textnorm
from .corpus import Corpus, IssueRecord, PriorityClass, stratified_split, subset
from .features import FeaturePipeline, fit_feature_pipeline
from .labelmap import LabelMaps
from .learn import ClassWeights, TrainedModel, TrainingError

UNIFORM_OBJECTIVE_PROBS = np.full(3, 1.0 / 3.0)


# ---------------------------------------------------------------------------
# Confusion matrix and metrics

@dataclass(frozen=True)
class ConfusionMatrix:
    classes: tuple[str, ...]
    counts: np.ndarray  # rows = truth, columns = prediction

    @classmethod
    def from_pairs(cls, truth: Sequence[str], predicted: Sequence[str],
                   classes: tuple[str, ...] | None = None) -> "ConfusionMatrix":
        if len(truth) != len(predicted):
            raise ValueError("truth/prediction length mismatch")
        classes = classes or tuple(sorted(set(truth) | set(predicted)))
        index = {c: i for i, c in enumerate(classes)}
        counts = np.zeros((len(classes), len(classes)), dtype=int)
        for t, p in zip(truth, predicted):
            counts[index[t], index[p]] += 1
        return cls(classes, counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def one_vs_rest(self, cls: str) -> tuple[int, int, int, int]:
        """(TP, FP, TN, FN) for the one-vs-rest reduction of ``cls``."""
        i = self.classes.index(cls)
        tp = int(self.counts[i, i])
        fp = int(self.counts[:, i].sum() - tp)
        fn = int(self.counts[i, :].sum() - tp)
        tn = self.total - tp - fp - fn
        return tp, fp, tn, fn


@dataclass
class ClassReport:
    precision: float
    recall: float
    f1: float
    ovr_accuracy: float
    support: int
    flags: list[str] = field(default_factory=list)


@dataclass
class EvalReport:
    accuracy: float
    per_class: dict[str, ClassReport]
    n: int
    flags: list[str] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "n": self.n,
            "per_class": {
                cls: {"precision": r.precision, "recall": r.recall, "f1": r.f1,
                      "ovr_accuracy": r.ovr_accuracy, "support": r.support,
                      "flags": r.flags}
                for cls, r in self.per_class.items()},
            "flags": self.flags,
            "metadata": self.metadata,
        }


def _safe_div(num: float, den: float, flags: list[str], label: str) -> float:
    if den == 0:
        flags.append(f"zero_division:{label}")
        return 0.0
    return num / den


def metrics(cm: ConfusionMatrix) -> EvalReport:
    """Precision, recall, F1 and accuracy from the confusion counts;
    zero denominators score 0 and raise a flag instead of dividing."""
    per_class: dict[str, ClassReport] = {}
    report_flags: list[str] = []
    for cls in cm.classes:
        tp, fp, tn, fn = cm.one_vs_rest(cls)
        flags: list[str] = []
        precision = _safe_div(tp, tp + fp, flags, f"precision:{cls}")
        recall = _safe_div(tp, tp + fn, flags, f"recall:{cls}")
        f1 = _safe_div(2 * precision * recall, precision + recall, flags, f"f1:{cls}")
        ovr_acc = _safe_div(tp + tn, tp + fp + tn + fn, flags, f"accuracy:{cls}")
        per_class[cls] = ClassReport(precision, recall, f1, ovr_acc, tp + fn, flags)
        report_flags.extend(flags)
    accuracy = _safe_div(float(np.trace(cm.counts)), cm.total, report_flags, "accuracy")
    return EvalReport(accuracy=accuracy, per_class=per_class, n=cm.total,
                      flags=report_flags)


def accuracy_score(truth: Sequence[str], predicted: Sequence[str]) -> float:
    if not truth:
        return 0.0
    return float(np.mean([t == p for t, p in zip(truth, predicted)]))


def macro_f1(truth: Sequence[str], predicted: Sequence[str]) -> float:
    report = metrics(ConfusionMatrix.from_pairs(truth, predicted))
    return float(np.mean([r.f1 for r in report.per_class.values()]))


# ---------------------------------------------------------------------------
# Model specification and the fitted pipeline bundle

@dataclass(frozen=True)
class ModelSpec:
    classifier: str = "forest"        # forest | logreg | nb | knn
    balancing: str = "weights"        # weights | smote | none
    weights_i: int | None = None      # manual override grid index (1..9)
    stage1: str = "internal"          # internal | file | uniform
    hyperparams: dict = field(default_factory=dict)
    title_max_features: int = features.TITLE_MAX_FEATURES
    desc_max_features: int = features.DESC_MAX_FEATURES
    seed: int = 0


@dataclass
class PriorityPipeline:
    """Everything needed to score unseen issues: fitted preprocessing,
    optional stage-one objective model, and the priority classifier."""

    feature_pipeline: FeaturePipeline
    classifier: TrainedModel
    stage1_model: TrainedModel | None
    spec: ModelSpec
    notes: list[str] = field(default_factory=list)

    def objective_probs(self, issue: IssueRecord,
                        probs_file: Mapping[str, np.ndarray] | None = None) -> np.ndarray:
        if probs_file is not None and issue.id in probs_file:
            return np.asarray(probs_file[issue.id], dtype=float)
        if self.stage1_model is not None:
            counts = _stage1_counts(self.feature_pipeline, issue)
            return self.stage1_model.predict_proba(counts[None, :])[0]
        return UNIFORM_OBJECTIVE_PROBS

    def vectorize(self, issues: Sequence[IssueRecord],
                  probs_file: Mapping[str, np.ndarray] | None = None) -> np.ndarray:
        rows = [self.feature_pipeline.assemble(i, self.objective_probs(i, probs_file)).to_dense()
                for i in issues]
        return np.vstack(rows) if rows else np.empty((0, 0))

    def predict(self, issues: Sequence[IssueRecord],
                probs_file: Mapping[str, np.ndarray] | None = None
                ) -> tuple[list[str], np.ndarray]:
        if not issues:
            return [], np.empty((0, len(self.classifier.classes)))
        X = self.vectorize(issues, probs_file)
        return self.classifier.predict(X), self.classifier.predict_proba(X)


def priority_label(issue: IssueRecord, maps: LabelMaps) -> PriorityClass | None:
    return labelmap.priority_of(issue.labels, maps.priority)


def _counts_vector(model: features.TfidfModel, doc: textnorm.TokenizedDoc) -> np.ndarray:
    vec = np.zeros(model.size)
    for gram in features.ngrams(doc.tokens, model.ngram_range):
        idx = model.vocabulary.get(gram)
        if idx is not None:
            vec[idx] += 1.0
    return vec


def _stage1_counts(pipeline: FeaturePipeline, issue: IssueRecord) -> np.ndarray:
    """Raw term counts of title ++ description (multinomial NB input)."""
    title_doc = textnorm.normalize_pipeline(issue.title, source="title")
    desc_doc = textnorm.normalize_pipeline(issue.description, source="description")
    return np.concatenate([
        _counts_vector(pipeline.tfidf_title, title_doc),
        _counts_vector(pipeline.tfidf_desc, desc_doc),
    ])


def train_objective_model(
    issues: Sequence[IssueRecord],
    maps: LabelMaps,
    pipeline: FeaturePipeline,
    classifier: str = "nb",
    alpha: float = 1.0,
    seed: int = 0,
) -> TrainedModel | None:
    """Stage-one model over issues carrying a mono objective label; None when
    fewer than two objective classes are represented."""
    labeled = [(i, labelmap.objective_of(i.labels, maps.objective)) for i in issues]
    labeled = [(i, obj) for i, obj in labeled if obj is not None]
    present = {obj for _, obj in labeled}
    if len(present) < 2:
        return None
    X = np.vstack([_stage1_counts(pipeline, i) for i, _ in labeled])
    y = [obj.value for _, obj in labeled]
    if classifier == "nb":
        return learn.fit_multinomial_nb(X, y, alpha=alpha,
                                        classes=learn.OBJECTIVE_CLASS_ORDER)
    if classifier == "logreg":
        return learn.fit_logreg(X, y, seed=seed, classes=learn.OBJECTIVE_CLASS_ORDER)
    raise TrainingError(f"unsupported stage-one classifier {classifier!r}")


def _resolve_weights(spec: ModelSpec, labels: Sequence[str]) -> ClassWeights | None:
    if spec.balancing != "weights":
        return None
    if spec.weights_i is not None:
        return learn.manual_priority_weights(spec.weights_i)
    return learn.compute_class_weights(labels)


def _fit_classifier(spec: ModelSpec, X: np.ndarray, labels: Sequence[str],
                    weights: ClassWeights | None) -> TrainedModel:
    hp = dict(spec.hyperparams)
    classes = learn.PRIORITY_CLASS_ORDER
    if spec.classifier == "forest":
        return learn.fit_random_forest(
            X, labels, weights=weights, seed=spec.seed, classes=classes,
            n_trees=hp.get("n_trees", 60), max_depth=hp.get("max_depth", 12),
            min_leaf=hp.get("min_leaf", 1), max_features=hp.get("max_features", "sqrt"))
    if spec.classifier == "logreg":
        return learn.fit_logreg(
            X, labels, weights=weights, seed=spec.seed, classes=classes,
            lr=hp.get("lr", 0.5), l2=hp.get("l2", 1e-4), epochs=hp.get("epochs", 300))
    if spec.classifier == "nb":
        # NB consumes count-like inputs; shift is unnecessary because every
        # block of the assembled vector is already non-negative
        return learn.fit_multinomial_nb(X, labels, alpha=hp.get("alpha", 1.0),
                                        classes=classes)
    if spec.classifier == "knn":
        return learn.fit_knn(X, labels, k=hp.get("k", 5), classes=classes)
    raise TrainingError(f"unsupported classifier {spec.classifier!r}")


def train_pipeline(
    issues: Sequence[IssueRecord],
    spec: ModelSpec,
    maps: LabelMaps,
    lex: sentiment.Lexicon | None = None,
    probs_file: Mapping[str, np.ndarray] | None = None,
) -> PriorityPipeline:
    """Fit preprocessing + stage one + the priority classifier on ``issues``.

    Every issue must carry a priority label; callers filter first.
    """
    issues = list(issues)
    labels = []
    for issue in issues:
        cls = labelmap.priority_of(issue.labels, maps.priority)
        if cls is None:
            raise TrainingError(f"issue {issue.id} has no priority label")
        labels.append(cls.value)
    if len(set(labels)) < 2:
        raise TrainingError("training data must contain both priority classes")

    notes: list[str] = []
    fp = fit_feature_pipeline(
        issues, maps, lex,
        title_max_features=spec.title_max_features,
        desc_max_features=spec.desc_max_features)

    stage1_model = None
    if spec.stage1 == "internal":
        stage1_model = train_objective_model(issues, maps, fp, seed=spec.seed)
        if stage1_model is None:
            notes.append("stage1: fewer than two objective classes in training "
                         "data; falling back to uniform probabilities")
    elif spec.stage1 == "file":
        if probs_file is None:
            raise TrainingError("stage1='file' requires an objective probability file")
    elif spec.stage1 != "uniform":
        raise TrainingError(f"unknown stage1 source {spec.stage1!r}")

    bundle = PriorityPipeline(fp, classifier=None, stage1_model=stage1_model,  # type: ignore[arg-type]
                              spec=spec, notes=notes)
    X = bundle.vectorize(issues, probs_file)

    weights = _resolve_weights(spec, labels)
    if spec.balancing == "smote":
        X, labels = learn.balance_with_smote(
            X, labels, k=spec.hyperparams.get("smote_k", 5), seed=spec.seed)
    elif spec.balancing not in ("weights", "none"):
        raise TrainingError(f"unknown balancing mode {spec.balancing!r}")

    classifier = _fit_classifier(spec, X, labels, weights)
    classifier.asset_fingerprints = fp.fingerprints()
    classifier.metadata.setdefault("seed", spec.seed)
    classifier.metadata["balancing"] = spec.balancing
    bundle.classifier = classifier
    return bundle


def evaluate_predictions(truth: Sequence[str], predicted: Sequence[str],
                         classes: tuple[str, ...] = learn.PRIORITY_CLASS_ORDER,
                         **metadata) -> EvalReport:
    report = metrics(ConfusionMatrix.from_pairs(truth, predicted, classes))
    report.metadata.update(metadata)
    return report


# ---------------------------------------------------------------------------
# Experiment drivers

def _labeled_issues(corpus: Corpus, maps: LabelMaps) -> tuple[list[IssueRecord], list[str]]:
    issues, labels = [], []
    for issue in corpus.issues:
        cls = labelmap.priority_of(issue.labels, maps.priority)
        if cls is not None:
            issues.append(issue)
            labels.append(cls.value)
    return issues, labels


@dataclass
class CrossValidationResult:
    mean: dict[str, float]
    std: dict[str, float]
    fold_reports: list[EvalReport]
    flags: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "flags": self.flags,
                "folds": [r.as_dict() for r in self.fold_reports]}


def cross_validate(corpus: Corpus, spec: ModelSpec, k: int, seed: int,
                   maps: LabelMaps | None = None) -> CrossValidationResult:
    """k rounds of train/eval with preprocessing refit per fold."""
    if k < 2:
        raise ValueError("k must be >= 2")
    maps = maps or labelmap.load_label_maps()
    issues, labels = _labeled_issues(corpus, maps)
    folds = learn.stratified_kfold_indices(labels, k, seed)
    all_idx = np.arange(len(issues))
    reports: list[EvalReport] = []
    flags: list[str] = []
    for fold_no, test_idx in enumerate(folds):
        train_idx = all_idx[~np.isin(all_idx, test_idx)]
        train_labels = {labels[i] for i in train_idx}
        test_labels = {labels[i] for i in test_idx}
        if len(train_labels) < 2 or not test_idx.size:
            flags.append(f"fold {fold_no}: class absent, skipped")
            continue
        if len(test_labels) < 2:
            flags.append(f"fold {fold_no}: class absent from test side")
        fold_spec = replace(spec, seed=seed + fold_no)
        bundle = train_pipeline([issues[i] for i in train_idx], fold_spec, maps)
        predicted, _ = bundle.predict([issues[i] for i in test_idx])
        truth = [labels[i] for i in test_idx]
        report = evaluate_predictions(truth, predicted, fold=fold_no,
                                      model_fingerprint=bundle.classifier.fingerprint())
        reports.append(report)
    if not reports:
        raise TrainingError("no usable folds")
    keys = {"accuracy": lambda r: r.accuracy}
    for cls in learn.PRIORITY_CLASS_ORDER:
        keys[f"f1:{cls}"] = lambda r, c=cls: r.per_class[c].f1
        keys[f"precision:{cls}"] = lambda r, c=cls: r.per_class[c].precision
        keys[f"recall:{cls}"] = lambda r, c=cls: r.per_class[c].recall
    mean = {name: float(np.mean([fn(r) for r in reports])) for name, fn in keys.items()}
    std = {name: float(np.std([fn(r) for r in reports])) for name, fn in keys.items()}
    return CrossValidationResult(mean, std, reports, flags)


def _quartiles(values: Sequence[float]) -> dict[str, float]:
    if not values:
        return {}
    ordered = sorted(values)
    return {
        "min": ordered[0],
        "q1": float(np.percentile(ordered, 25)),
        "median": float(np.percentile(ordered, 50)),
        "q3": float(np.percentile(ordered, 75)),
        "max": ordered[-1],
    }


@dataclass
class ProjectBasedResult:
    per_repo: dict[str, EvalReport]
    skipped: dict[str, str]
    summary: dict[str, dict[str, float]]
    mean_accuracy: float
    pooled_accuracy: float

    def as_dict(self) -> dict:
        return {
            "per_repo": {r: rep.as_dict() for r, rep in self.per_repo.items()},
            "skipped": self.skipped,
            "summary": self.summary,
            "aggregate": {"mean_of_repo_accuracies": self.mean_accuracy,
                          "pooled_micro_accuracy": self.pooled_accuracy},
        }


def evaluate_project_based(corpus: Corpus, spec: ModelSpec,
                           maps: LabelMaps | None = None,
                           ratio: float = 0.8) -> ProjectBasedResult:
    """One model per repository on its own 80/20 stratified split. Repos
    without at least two issues per class are skipped, not merged."""
    maps = maps or labelmap.load_label_maps()
    per_repo: dict[str, EvalReport] = {}
    skipped: dict[str, str] = {}
    pooled_correct = pooled_total = 0
    for repo in corpus.repos():
        repo_issues = [i for i in corpus.issues if i.repo == repo]
        repo_corpus = subset(corpus, repo_issues)
        issues, labels = _labeled_issues(repo_corpus, maps)
        counts = {cls: labels.count(cls) for cls in set(labels)}
        if len(counts) < 2 or min(counts.values()) < 2:
            skipped[repo] = f"insufficient class support: {counts}"
            continue
        labeled = subset(corpus, issues)
        train, test = stratified_split(
            labeled, lambda i: labelmap.priority_of(i.labels, maps.priority).value,
            ratio, spec.seed)
        if not len(test):
            skipped[repo] = "empty test side after split"
            continue
        bundle = train_pipeline(list(train.issues), spec, maps)
        predicted, _ = bundle.predict(list(test.issues))
        truth = [labelmap.priority_of(i.labels, maps.priority).value for i in test.issues]
        report = evaluate_predictions(truth, predicted, repo=repo, seed=spec.seed,
                                      model_fingerprint=bundle.classifier.fingerprint())
        per_repo[repo] = report
        pooled_correct += sum(1 for t, p in zip(truth, predicted) if t == p)
        pooled_total += len(truth)
    summary = {"accuracy": _quartiles([r.accuracy for r in per_repo.values()])}
    for cls in learn.PRIORITY_CLASS_ORDER:
        summary[f"f1:{cls}"] = _quartiles([r.per_class[cls].f1 for r in per_repo.values()])
        summary[f"recall:{cls}"] = _quartiles([r.per_class[cls].recall for r in per_repo.values()])
        summary[f"precision:{cls}"] = _quartiles(
            [r.per_class[cls].precision for r in per_repo.values()])
    mean_acc = float(np.mean([r.accuracy for r in per_repo.values()])) if per_repo else 0.0
    pooled_acc = pooled_correct / pooled_total if pooled_total else 0.0
    return ProjectBasedResult(per_repo, skipped, summary, mean_acc, pooled_acc)


def split_repos(repos: Sequence[str], ratio: float, seed: int) -> tuple[list[str], list[str]]:
    repos = sorted(repos)
    if len(repos) < 2:
        raise ValueError("cross-project evaluation needs at least two repositories")
    rng = np.random.default_rng(seed)
    order = list(rng.permutation(len(repos)))
    n_train = int(round(len(repos) * ratio))
    n_train = max(1, min(len(repos) - 1, n_train))
    train = sorted(repos[i] for i in order[:n_train])
    test = sorted(repos[i] for i in order[n_train:])
    return train, test


CROSS_PROJECT_WEIGHTS_I = 6  # tuned grid point: slight extra emphasis on High


def evaluate_cross_project(corpus: Corpus, spec: ModelSpec, seed: int,
                           maps: LabelMaps | None = None,
                           ratio: float = 0.8) -> EvalReport:
    """Split at repository granularity, train one generic model on the
    training repositories, evaluate on the held-out ones.

    Unless the spec pins its own class weights, the generic model uses the
    manual override grid at i=6 rather than pure inverse frequency."""
    maps = maps or labelmap.load_label_maps()
    if spec.balancing == "weights" and spec.weights_i is None:
        spec = replace(spec, weights_i=CROSS_PROJECT_WEIGHTS_I)
    train_repos, test_repos = split_repos(corpus.repos(), ratio, seed)
    assert not set(train_repos) & set(test_repos)
    train_issues = [i for i in corpus.issues if i.repo in set(train_repos)]
    test_issues = [i for i in corpus.issues if i.repo in set(test_repos)]
    train_labeled, _ = _labeled_issues(subset(corpus, train_issues), maps)
    test_labeled, truth = _labeled_issues(subset(corpus, test_issues), maps)
    bundle = train_pipeline(train_labeled, spec, maps)
    predicted, _ = bundle.predict(test_labeled)
    return evaluate_predictions(
        truth, predicted,
        train_repos=train_repos, test_repos=test_repos, seed=seed,
        model_fingerprint=bundle.classifier.fingerprint())


# ---------------------------------------------------------------------------
# Feature importance

@dataclass
class FeatureImportanceReport:
    scores: np.ndarray
    names: list[str]

    def ranked(self) -> list[tuple[str, float]]:
        order = np.argsort(-self.scores, kind="stable")
        return [(self.names[i], float(self.scores[i])) for i in order]

    def as_dict(self) -> dict:
        return {"importances": {n: float(s) for n, s in zip(self.names, self.scores)},
                "ranked": self.ranked()}


def feature_importance(forest: TrainedModel,
                       names: Sequence[str] | None = None) -> FeatureImportanceReport:
    """Mean decrease in Gini impurity per feature, normalized to sum one."""
    if forest.kind != "forest":
        raise TrainingError(f"feature importance requires a forest, got {forest.kind!r}")
    raw = np.asarray(forest.params["importances"], dtype=float)
    total = raw.sum()
    if total <= 0:
        raise TrainingError("forest contains no splits; importances undefined")
    scores = raw / total
    names = list(names) if names is not None else [f"f{i}" for i in range(len(scores))]
    if len(names) != len(scores):
        raise ValueError("feature name count does not match the trained width")
    return FeatureImportanceReport(scores, names)
