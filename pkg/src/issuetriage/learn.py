"""Classifiers, balancing and tuning for both pipeline stages.

Everything here is deterministic under a fixed seed: forests derive one
child seed per tree from the master seed, logistic regression uses
full-batch descent from a zero start, and SMOTE/random search draw from
seeded generators. Models serialize to self-describing JSON artifacts that
pin the fingerprints of the preprocessing assets they were trained with;
prediction refuses to run against different assets.
"""

from __future__ import annotations

import hashlib
import json
import math
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .corpus import IssueRecord, PriorityClass
from .textnorm import TokenizedDoc

OBJECTIVE_CLASS_ORDER = ("Bug", "Enhancement", "SupportDoc")
PRIORITY_CLASS_ORDER = ("High", "Low")

DEFAULT_KEYWORD_RULES: dict[str, frozenset[str]] = {
    "Bug": frozenset({
        "crash", "fix", "bug", "error", "fail", "failure", "broken", "break",
        "exception", "defect", "wrong", "regression", "freeze", "segfault",
    }),
    "Enhancement": frozenset({
        "feature", "enhancement", "improve", "add", "implement", "request",
        "new", "propose", "idea", "optimize",
    }),
    "SupportDoc": frozenset({
        "?", "how", "question", "help", "doc", "documentation", "install",
        "usage", "why", "what", "where", "guide", "tutorial", "example",
    }),
}


class TrainingError(Exception):
    """Raised when fitting cannot proceed (bad inputs, diverging loss)."""


class ChecksumMismatchError(Exception):
    """Model artifact was trained against different preprocessing assets."""


# ---------------------------------------------------------------------------
# Class weights (inverse frequency)

@dataclass(frozen=True)
class ClassWeights:
    weights: dict[str, float]

    def __post_init__(self) -> None:
        for cls, w in self.weights.items():
            if w <= 0:
                raise ValueError(f"class {cls!r} has non-positive weight {w}")

    def per_sample(self, labels: Sequence[str]) -> np.ndarray:
        return np.array([self.weights[lb] for lb in labels])


def compute_class_weights(labels: Sequence[str]) -> ClassWeights:
    """weight_c = N / frequency_c over the training labels."""
    if not labels:
        raise TrainingError("no labels to weight")
    total = len(labels)
    freq: dict[str, int] = {}
    for lb in labels:
        freq[lb] = freq.get(lb, 0) + 1
    return ClassWeights({cls: total / count for cls, count in freq.items()})


def manual_priority_weights(i: int) -> ClassWeights:
    """The manual override grid: 0.1*i for High, 0.1*(10-i) for Low, i in [1, 9]."""
    if not 1 <= i <= 9:
        raise ValueError("i must be in [1, 9]")
    return ClassWeights({
        PriorityClass.HIGH.value: 0.1 * i,
        PriorityClass.LOW.value: 0.1 * (10 - i),
    })


def uniform_weights(classes: Iterable[str]) -> ClassWeights:
    return ClassWeights({cls: 1.0 for cls in classes})


# ---------------------------------------------------------------------------
# Trained model wrapper

@dataclass
class TrainedModel:
    kind: str  # keyword | nb | logreg | forest | knn
    classes: tuple[str, ...]
    params: dict
    metadata: dict = field(default_factory=dict)
    asset_fingerprints: dict = field(default_factory=dict)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        probs = _PREDICTORS[self.kind](self.params, np.asarray(X, dtype=float))
        return probs

    def predict(self, X: np.ndarray) -> list[str]:
        probs = self.predict_proba(X)
        return [self.classes[i] for i in probs.argmax(axis=1)]

    def verify_assets(self, fingerprints: dict) -> None:
        for name, expected in self.asset_fingerprints.items():
            actual = fingerprints.get(name)
            if actual != expected:
                raise ChecksumMismatchError(
                    f"asset {name!r} fingerprint {actual} does not match the "
                    f"one recorded at training time ({expected})")

    def fingerprint(self) -> str:
        payload = json.dumps(
            {"kind": self.kind, "classes": list(self.classes), "params": self.params},
            sort_keys=True, default=_json_default)
        return hashlib.sha256(payload.encode()).hexdigest()


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def save_model(model: TrainedModel, path: str | Path) -> None:
    doc = {
        "format": "issuetriage-model",
        "version": 1,
        "kind": model.kind,
        "classes": list(model.classes),
        "params": model.params,
        "metadata": model.metadata,
        "asset_fingerprints": model.asset_fingerprints,
    }
    Path(path).write_text(
        json.dumps(doc, sort_keys=True, indent=1, default=_json_default) + "\n",
        encoding="utf-8")


def load_model(path: str | Path) -> TrainedModel:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != "issuetriage-model":
        raise TrainingError(f"{path}: not a model artifact")
    return TrainedModel(
        kind=doc["kind"], classes=tuple(doc["classes"]), params=doc["params"],
        metadata=doc.get("metadata", {}),
        asset_fingerprints=doc.get("asset_fingerprints", {}))


# ---------------------------------------------------------------------------
# Keyword baseline

def keyword_classify(
    doc: TokenizedDoc,
    rules: dict[str, frozenset[str]] | None = None,
    class_order: tuple[str, ...] = OBJECTIVE_CLASS_ORDER,
) -> np.ndarray:
    """Most keyword hits wins with probability one; ties split uniformly;
    no hits at all give the uninformed uniform distribution."""
    rules = rules or DEFAULT_KEYWORD_RULES
    hits = np.array([sum(1 for tok in doc.tokens if tok in rules.get(cls, frozenset()))
                     for cls in class_order], dtype=float)
    if hits.max() == 0:
        return np.full(len(class_order), 1.0 / len(class_order))
    winners = hits == hits.max()
    return winners / winners.sum()


# ---------------------------------------------------------------------------
# Multinomial naive Bayes

# log prior stand-in for classes absent from training: exp() underflows to
# an exact posterior of zero while staying JSON-serializable
_LOG_ZERO = -1e30


def fit_multinomial_nb(
    X: np.ndarray, labels: Sequence[str], alpha: float = 1.0,
    classes: tuple[str, ...] | None = None,
) -> TrainedModel:
    X = np.asarray(X, dtype=float)
    if np.any(X < 0):
        raise TrainingError("multinomial NB requires non-negative feature values")
    classes = classes or tuple(sorted(set(labels)))
    y = np.array([classes.index(lb) for lb in labels])
    n_classes = len(classes)
    class_counts = np.array([(y == c).sum() for c in range(n_classes)], dtype=float)
    with np.errstate(divide="ignore"):
        log_prior = np.where(class_counts > 0,
                             np.log(np.maximum(class_counts, 1) / class_counts.sum()),
                             _LOG_ZERO)
    term_counts = np.vstack([X[y == c].sum(axis=0) for c in range(n_classes)])
    smoothed = term_counts + alpha
    log_like = np.log(smoothed) - np.log(smoothed.sum(axis=1, keepdims=True))
    return TrainedModel(
        kind="nb", classes=classes,
        params={"log_prior": log_prior.tolist(), "log_likelihood": log_like.tolist()},
        metadata={"alpha": alpha, "n_train": len(labels)})


def _nb_predict(params: dict, X: np.ndarray) -> np.ndarray:
    log_prior = np.asarray(params["log_prior"])
    log_like = np.asarray(params["log_likelihood"])
    joint = X @ log_like.T + log_prior
    joint -= joint.max(axis=1, keepdims=True)
    probs = np.exp(joint)
    return probs / probs.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# Logistic regression (softmax, class-weighted cross-entropy + L2)

def logreg_loss_and_grad(
    W: np.ndarray, b: np.ndarray, X: np.ndarray, y: np.ndarray,
    sample_weights: np.ndarray, l2: float,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Weighted mean cross-entropy plus (l2/2)*||W||^2 and its gradients."""
    n = X.shape[0]
    scores = X @ W + b
    scores -= scores.max(axis=1, keepdims=True)
    exp = np.exp(scores)
    probs = exp / exp.sum(axis=1, keepdims=True)
    eps = 1e-12
    loss = -(sample_weights * np.log(probs[np.arange(n), y] + eps)).sum() / n
    loss += 0.5 * l2 * float((W ** 2).sum())
    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    delta *= sample_weights[:, None]
    grad_W = X.T @ delta / n + l2 * W
    grad_b = delta.sum(axis=0) / n
    return float(loss), grad_W, grad_b


def fit_logreg(
    X: np.ndarray, labels: Sequence[str], weights: ClassWeights | None = None,
    lr: float = 0.5, l2: float = 1e-4, epochs: int = 300,
    seed: int = 0, classes: tuple[str, ...] | None = None,
) -> TrainedModel:
    X = np.asarray(X, dtype=float)
    if not np.all(np.isfinite(X)):
        raise TrainingError("logistic regression requires finite features")
    classes = classes or tuple(sorted(set(labels)))
    y = np.array([classes.index(lb) for lb in labels])
    sw = weights.per_sample(labels) if weights else np.ones(len(labels))
    n_feats, n_classes = X.shape[1], len(classes)
    W = np.zeros((n_feats, n_classes))
    b = np.zeros(n_classes)
    step = lr
    losses: list[float] = []
    loss, grad_W, grad_b = logreg_loss_and_grad(W, b, X, y, sw, l2)
    for _ in range(epochs):
        losses.append(loss)
        # halve the step until the move does not increase the loss
        while True:
            W_new = W - step * grad_W
            b_new = b - step * grad_b
            new_loss, new_gW, new_gb = logreg_loss_and_grad(W_new, b_new, X, y, sw, l2)
            if not math.isfinite(new_loss):
                raise TrainingError("non-finite loss; learning rate too high")
            if new_loss <= loss + 1e-12 or step < 1e-12:
                break
            step *= 0.5
        W, b, loss, grad_W, grad_b = W_new, b_new, new_loss, new_gW, new_gb
    losses.append(loss)
    return TrainedModel(
        kind="logreg", classes=classes,
        params={"W": W.tolist(), "b": b.tolist()},
        metadata={"lr": lr, "l2": l2, "epochs": epochs, "seed": seed,
                  "loss_history": losses,
                  "class_weights": weights.weights if weights else None})


def _logreg_predict(params: dict, X: np.ndarray) -> np.ndarray:
    W = np.asarray(params["W"])
    b = np.asarray(params["b"])
    scores = X @ W + b
    scores -= scores.max(axis=1, keepdims=True)
    exp = np.exp(scores)
    return exp / exp.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# Random forest (Gini impurity, weighted bootstrap)

def _gini(counts: np.ndarray) -> float:
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return float(1.0 - (p ** 2).sum())


def _best_split(X: np.ndarray, y: np.ndarray, idx: np.ndarray,
                features: np.ndarray, n_classes: int, min_leaf: int):
    """Exhaustive scan over midpoints of the candidate features; returns
    (feature, threshold, weighted child impurity) or None."""
    node_y = y[idx]
    n = len(idx)
    counts = np.bincount(node_y, minlength=n_classes).astype(float)
    best = None
    for f in features:
        vals = X[idx, f]
        order = np.argsort(vals, kind="stable")
        sv = vals[order]
        sy = node_y[order]
        cut = np.nonzero(sv[1:] > sv[:-1])[0]
        if cut.size == 0:
            continue
        onehot = np.zeros((n, n_classes))
        onehot[np.arange(n), sy] = 1.0
        cum = np.cumsum(onehot, axis=0)
        left = cum[cut]
        n_left = cut + 1.0
        n_right = n - n_left
        ok = (n_left >= min_leaf) & (n_right >= min_leaf)
        if not ok.any():
            continue
        right = counts - left
        gini_l = 1.0 - ((left / n_left[:, None]) ** 2).sum(axis=1)
        gini_r = 1.0 - ((right / n_right[:, None]) ** 2).sum(axis=1)
        weighted = (n_left * gini_l + n_right * gini_r) / n
        weighted = np.where(ok, weighted, np.inf)
        pos = int(np.argmin(weighted))
        if best is None or weighted[pos] < best[2]:
            threshold = (sv[cut[pos]] + sv[cut[pos] + 1]) / 2.0
            best = (int(f), float(threshold), float(weighted[pos]))
    return best


def _grow_tree(X, y, idx, rng, n_classes, max_depth, min_leaf, m_features,
               depth, importances, n_root):
    node_y = y[idx]
    counts = np.bincount(node_y, minlength=n_classes).astype(float)
    gini_node = _gini(counts)
    if (gini_node == 0.0 or len(idx) < 2 * min_leaf or len(idx) < 2
            or (max_depth is not None and depth >= max_depth)):
        return {"leaf": (counts / counts.sum()).tolist()}
    features = rng.choice(X.shape[1], size=m_features, replace=False)
    split = _best_split(X, y, idx, features, n_classes, min_leaf)
    if split is None or split[2] >= gini_node:
        return {"leaf": (counts / counts.sum()).tolist()}
    f, threshold, weighted = split
    importances[f] += (len(idx) / n_root) * (gini_node - weighted)
    mask = X[idx, f] <= threshold
    left = _grow_tree(X, y, idx[mask], rng, n_classes, max_depth, min_leaf,
                      m_features, depth + 1, importances, n_root)
    right = _grow_tree(X, y, idx[~mask], rng, n_classes, max_depth, min_leaf,
                       m_features, depth + 1, importances, n_root)
    return {"f": f, "t": threshold, "l": left, "r": right}


def _tree_predict(tree: dict, X: np.ndarray, out: np.ndarray, rows: np.ndarray) -> None:
    if "leaf" in tree:
        out[rows] += np.asarray(tree["leaf"])
        return
    mask = X[rows, tree["f"]] <= tree["t"]
    if mask.any():
        _tree_predict(tree["l"], X, out, rows[mask])
    if (~mask).any():
        _tree_predict(tree["r"], X, out, rows[~mask])


def fit_random_forest(
    X: np.ndarray, labels: Sequence[str], weights: ClassWeights | None = None,
    n_trees: int = 60, max_depth: int | None = 12, min_leaf: int = 1,
    max_features: int | str | None = "sqrt", seed: int = 0,
    classes: tuple[str, ...] | None = None,
) -> TrainedModel:
    X = np.asarray(X, dtype=float)
    classes = classes or tuple(sorted(set(labels)))
    if len(classes) < 2:
        raise TrainingError("random forest needs at least two classes")
    y = np.array([classes.index(lb) for lb in labels])
    n, d = X.shape
    if max_features == "sqrt" or max_features is None:
        m = max(1, int(math.sqrt(d)))
    else:
        m = max(1, min(int(max_features), d))
    sw = weights.per_sample(labels) if weights else np.ones(n)
    p = sw / sw.sum()
    trees: list[dict] = []
    importance_sum = np.zeros(d)
    child_seeds = np.random.SeedSequence(seed).spawn(n_trees)
    for tree_seed in child_seeds:
        rng = np.random.default_rng(tree_seed)
        idx = rng.choice(n, size=n, replace=True, p=p)
        importances = np.zeros(d)
        tree = _grow_tree(X, y, idx, rng, len(classes), max_depth, min_leaf,
                          m, 0, importances, n_root=len(idx))
        total = importances.sum()
        if total > 0:
            importance_sum += importances / total
        trees.append(tree)
    return TrainedModel(
        kind="forest", classes=classes,
        params={"trees": trees,
                "importances": (importance_sum / n_trees).tolist(),
                "n_features": d},
        metadata={"n_trees": n_trees, "max_depth": max_depth, "min_leaf": min_leaf,
                  "max_features": max_features, "seed": seed,
                  "class_weights": weights.weights if weights else None})


def _forest_predict(params: dict, X: np.ndarray) -> np.ndarray:
    trees = params["trees"]
    n_classes = len(trees[0]["leaf"]) if "leaf" in trees[0] else None
    if n_classes is None:  # walk down to any leaf for the class count
        node = trees[0]
        while "leaf" not in node:
            node = node["l"]
        n_classes = len(node["leaf"])
    out = np.zeros((X.shape[0], n_classes))
    rows = np.arange(X.shape[0])
    for tree in trees:
        _tree_predict(tree, X, out, rows)
    return out / len(trees)


# ---------------------------------------------------------------------------
# K nearest neighbors

def fit_knn(X: np.ndarray, labels: Sequence[str], k: int = 5,
            classes: tuple[str, ...] | None = None) -> TrainedModel:
    classes = classes or tuple(sorted(set(labels)))
    y = [classes.index(lb) for lb in labels]
    return TrainedModel(
        kind="knn", classes=classes,
        params={"X": np.asarray(X, dtype=float).tolist(), "y": y,
                "k": min(k, len(labels))},
        metadata={"k": k})


def _knn_predict(params: dict, X: np.ndarray) -> np.ndarray:
    train = np.asarray(params["X"])
    y = np.asarray(params["y"])
    k = params["k"]
    n_classes = int(y.max()) + 1 if len(y) else 1
    out = np.zeros((X.shape[0], n_classes))
    for i, row in enumerate(X):
        dist = np.sqrt(((train - row) ** 2).sum(axis=1))
        nearest = np.argsort(dist, kind="stable")[:k]
        votes = np.bincount(y[nearest], minlength=n_classes)
        out[i] = votes / votes.sum()
    return out


_PREDICTORS: dict[str, Callable[[dict, np.ndarray], np.ndarray]] = {
    "nb": _nb_predict,
    "logreg": _logreg_predict,
    "forest": _forest_predict,
    "knn": _knn_predict,
}


# ---------------------------------------------------------------------------
# SMOTE

def smote(minority: np.ndarray, majority_count: int, k: int = 5,
          seed: int = 0) -> np.ndarray:
    """Synthetic points x + lambda*(nn - x) until the class counts equalize."""
    minority = np.asarray(minority, dtype=float)
    n = minority.shape[0]
    if n < 2:
        raise TrainingError("SMOTE needs at least two minority samples")
    n_synthetic = majority_count - n
    if n_synthetic <= 0:
        return np.empty((0, minority.shape[1]))
    k = max(1, min(k, n - 1))
    # pairwise distances; self excluded by masking the diagonal
    diff = minority[:, None, :] - minority[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=2))
    np.fill_diagonal(dist, np.inf)
    neighbor_ids = np.argsort(dist, axis=1, kind="stable")[:, :k]
    rng = np.random.default_rng(seed)
    rows = rng.integers(0, n, size=n_synthetic)
    picks = rng.integers(0, k, size=n_synthetic)
    lams = rng.uniform(0.0, 1.0, size=n_synthetic)
    base = minority[rows]
    neighbors = minority[neighbor_ids[rows, picks]]
    return base + lams[:, None] * (neighbors - base)


def balance_with_smote(X: np.ndarray, labels: Sequence[str], k: int = 5,
                       seed: int = 0) -> tuple[np.ndarray, list[str]]:
    X = np.asarray(X, dtype=float)
    labels = list(labels)
    counts = {cls: labels.count(cls) for cls in sorted(set(labels))}
    majority = max(counts.values())
    out_X = [X]
    out_y = list(labels)
    for offset, (cls, count) in enumerate(sorted(counts.items())):
        if count == majority:
            continue
        rows = np.array([i for i, lb in enumerate(labels) if lb == cls])
        synthetic = smote(X[rows], majority, k=k, seed=seed + offset)
        out_X.append(synthetic)
        out_y.extend([cls] * synthetic.shape[0])
    return np.vstack(out_X), out_y


# ---------------------------------------------------------------------------
# Random hyperparameter search

def sample_config(space: dict, rng: np.random.Generator) -> dict:
    """Lists are discrete choices; (lo, hi) tuples are uniform ranges,
    integer-valued when both ends are ints."""
    config = {}
    for name in sorted(space):
        spec = space[name]
        if isinstance(spec, (list, tuple)) and len(spec) == 2 \
                and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in spec) \
                and isinstance(spec, tuple):
            lo, hi = spec
            if isinstance(lo, int) and isinstance(hi, int):
                config[name] = int(rng.integers(lo, hi + 1))
            else:
                config[name] = float(rng.uniform(lo, hi))
        elif isinstance(spec, list):
            config[name] = spec[int(rng.integers(0, len(spec)))]
        else:
            raise ValueError(f"bad search-space entry for {name!r}: {spec!r}")
    return config


def stratified_kfold_indices(labels: Sequence[str], k: int, seed: int) -> list[np.ndarray]:
    """Deterministic stratified fold assignment; fold i gets every k-th
    member of each class after a seeded shuffle."""
    if k < 2:
        raise ValueError("k must be >= 2")
    rng = np.random.default_rng(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    by_class: dict[str, list[int]] = {}
    for i, lb in enumerate(labels):
        by_class.setdefault(lb, []).append(i)
    for cls in sorted(by_class):
        members = np.array(by_class[cls])
        rng.shuffle(members)
        for j, idx in enumerate(members):
            folds[j % k].append(int(idx))
    return [np.array(sorted(f), dtype=int) for f in folds]


def random_search(
    space: dict,
    budget: int,
    cv_folds: int,
    seed: int,
    X: np.ndarray,
    labels: Sequence[str],
    fit: Callable[[dict, np.ndarray, Sequence[str], int], TrainedModel],
    objective: Callable[[Sequence[str], Sequence[str]], float] | None = None,
) -> tuple[dict, list[dict]]:
    """Uniformly sample ``budget`` configurations, score each by k-fold CV
    mean of the objective (accuracy unless overridden), return the argmax
    and the full evaluation trace."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if objective is None:
        objective = lambda truth, pred: float(
            np.mean([t == p for t, p in zip(truth, pred)]))
    X = np.asarray(X, dtype=float)
    labels = list(labels)
    rng = np.random.default_rng(seed)
    folds = stratified_kfold_indices(labels, cv_folds, seed)
    all_idx = np.arange(len(labels))
    trace: list[dict] = []
    best: tuple[float, dict] | None = None
    for trial in range(budget):
        config = sample_config(space, rng)
        scores = []
        for fold_no, test_idx in enumerate(folds):
            train_mask = ~np.isin(all_idx, test_idx)
            train_idx = all_idx[train_mask]
            train_labels = [labels[i] for i in train_idx]
            if len(set(train_labels)) < 2 or len(test_idx) == 0:
                continue
            model = fit(config, X[train_idx], train_labels, seed + fold_no)
            pred = model.predict(X[test_idx])
            truth = [labels[i] for i in test_idx]
            scores.append(objective(truth, pred))
        mean_score = float(np.mean(scores)) if scores else 0.0
        trace.append({"trial": trial, "config": config, "fold_scores": scores,
                      "mean_score": mean_score})
        if best is None or mean_score > best[0]:
            best = (mean_score, config)
    assert best is not None
    return best[1], trace


# ---------------------------------------------------------------------------
# Date / comment-rank baselines

def _updated_at(issue: IssueRecord):
    candidates = [issue.created_at]
    candidates.extend(c.created_at for c in issue.comments)
    candidates.extend(e.created_at for e in issue.events)
    if issue.closed_at is not None:
        candidates.append(issue.closed_at)
    return max(candidates)


def rank_baseline(issues: Sequence[IssueRecord], field_name: str) -> list[PriorityClass]:
    """Median-threshold baselines: most-commented / most-recently-updated
    above the median are High; for creation dates the oldest half is High."""
    if field_name == "comments":
        values = [float(len(i.comments)) for i in issues]
        high_if = lambda v, med: v > med
    elif field_name == "created_at":
        values = [i.created_at.timestamp() for i in issues]
        high_if = lambda v, med: v < med  # oldest issues ranked High
    elif field_name == "updated_at":
        values = [_updated_at(i).timestamp() for i in issues]
        high_if = lambda v, med: v > med
    else:
        raise ValueError(f"unsupported rank field {field_name!r}")
    med = statistics.median(values)
    return [PriorityClass.HIGH if high_if(v, med) else PriorityClass.LOW for v in values]
