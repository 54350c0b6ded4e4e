"""Format predictor: multiclass gradient-boosted trees built from scratch.

Boosting fits one regression tree per class per round to the gradient and
hessian of the softmax cross-entropy, using exact greedy splits over
sorted feature values with second-order gain. Training is fully
deterministic: features are scanned in ascending index order, equal gains
keep the earlier candidate, and argsort uses a stable kind.

Training runs two passes. Pass one uses all features and yields per-feature
split counts; the features covering 95% of the total split count are kept,
and pass two retrains on that compact set. Two classical baselines (a
single gini decision tree and k-nearest-neighbour) share the prediction
contract.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict, field

import numpy as np

from .features import (FEATURE_NAMES, N_FEATURES, FeatureScaler,
                       FeatureVector, fit_scaler)
from .formats import StorageFormat

MODEL_SCHEMA_VERSION = 1

# Cumulative share of split counts the selected features must cover.
SELECTION_COVERAGE = 0.95


class ModelSchemaError(ValueError):
    """Model file does not match the expected versioned JSON schema."""


@dataclass(frozen=True)
class GbtHyperParams:
    rounds: int = 100
    max_depth: int = 6
    learning_rate: float = 0.3
    min_split_gain: float = 0.0
    min_leaf_samples: int = 1
    reg_lambda: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.rounds < 1 or self.max_depth < 1:
            raise ValueError("rounds and max_depth must be >= 1")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.min_leaf_samples < 1:
            raise ValueError("min_leaf_samples must be >= 1")


class _TreeArrays:
    """Flat node storage: feature < 0 marks a leaf holding ``value``."""

    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self):
        self.feature = []
        self.threshold = []
        self.left = []
        self.right = []
        self.value = []

    def add_node(self):
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def finalized(self):
        return (np.asarray(self.feature, dtype=np.int64),
                np.asarray(self.threshold, dtype=np.float64),
                np.asarray(self.left, dtype=np.int64),
                np.asarray(self.right, dtype=np.int64),
                np.asarray(self.value, dtype=np.float64))


def _best_split_second_order(X, g, h, idx, features, reg_lambda,
                             min_leaf_samples):
    """Exact greedy scan; returns (gain, feature, threshold) or None."""
    G, H = g[idx].sum(), h[idx].sum()
    parent_score = G * G / (H + reg_lambda)
    best = None
    n = len(idx)
    for f in features:
        xs = X[idx, f]
        order = np.argsort(xs, kind="stable")
        xo = xs[order]
        pos = np.nonzero(xo[:-1] < xo[1:])[0]
        if min_leaf_samples > 1:
            nl = pos + 1
            pos = pos[(nl >= min_leaf_samples) & (n - nl >= min_leaf_samples)]
        if len(pos) == 0:
            continue
        cg = np.cumsum(g[idx][order])
        ch = np.cumsum(h[idx][order])
        gl, hl = cg[pos], ch[pos]
        gr, hr = G - gl, H - hl
        gain = 0.5 * (gl * gl / (hl + reg_lambda)
                      + gr * gr / (hr + reg_lambda) - parent_score)
        k = int(np.argmax(gain))
        if best is None or gain[k] > best[0]:
            best = (float(gain[k]), f, float((xo[pos[k]] + xo[pos[k] + 1]) / 2))
    return best


def _fit_regression_tree(X, g, h, hp: GbtHyperParams, features):
    tree = _TreeArrays()
    stack = [(tree.add_node(), np.arange(len(g)), 0)]
    lam = hp.reg_lambda
    while stack:
        node, idx, depth = stack.pop()
        split = None
        if depth < hp.max_depth and len(idx) >= 2 * hp.min_leaf_samples:
            split = _best_split_second_order(X, g, h, idx, features, lam,
                                             hp.min_leaf_samples)
        if split is None or split[0] <= hp.min_split_gain:
            G, H = g[idx].sum(), h[idx].sum()
            tree.value[node] = -hp.learning_rate * G / (H + lam)
            continue
        _, f, thr = split
        go_left = X[idx, f] < thr
        tree.feature[node] = f
        tree.threshold[node] = thr
        left = tree.add_node()
        right = tree.add_node()
        tree.left[node] = left
        tree.right[node] = right
        stack.append((right, idx[~go_left], depth + 1))
        stack.append((left, idx[go_left], depth + 1))
    return tree.finalized()


def _tree_predict(tree, X):
    feature, threshold, left, right, value = tree
    cur = np.zeros(len(X), dtype=np.int64)
    rows = np.arange(len(X))
    while True:
        feat = feature[cur]
        interior = feat >= 0
        if not interior.any():
            return value[cur]
        go_left = X[rows, np.where(interior, feat, 0)] < threshold[cur]
        nxt = np.where(go_left, left[cur], right[cur])
        cur = np.where(interior, nxt, cur)


def _boost(X, y_onehot, hp: GbtHyperParams, features):
    """Softmax gradient boosting; returns [(class_index, tree), ...]."""
    n, n_classes = y_onehot.shape
    margins = np.zeros((n, n_classes))
    trees = []
    for _ in range(hp.rounds):
        shifted = margins - margins.max(axis=1, keepdims=True)
        expm = np.exp(shifted)
        prob = expm / expm.sum(axis=1, keepdims=True)
        for c in range(n_classes):
            g = prob[:, c] - y_onehot[:, c]
            h = np.maximum(prob[:, c] * (1.0 - prob[:, c]), 1e-16)
            tree = _fit_regression_tree(X, g, h, hp, features)
            margins[:, c] += _tree_predict(tree, X)
            trees.append((c, tree))
    return trees


def count_feature_splits(trees) -> np.ndarray:
    """Total split count per feature across an ensemble (pass-one scores)."""
    scores = np.zeros(N_FEATURES, dtype=np.int64)
    for _, (feature, *_rest) in trees:
        interior = feature[feature >= 0]
        scores += np.bincount(interior, minlength=N_FEATURES)
    return scores


def select_features(scores, coverage: float = SELECTION_COVERAGE,
                    pool=None) -> np.ndarray:
    """Keep the smallest prefix of features (by descending split count)
    whose scores sum to at least ``coverage`` of the total.

    Ties order by feature index. All-zero scores keep the whole pool.
    """
    scores = np.asarray(scores, dtype=np.float64)
    pool = np.ones(len(scores), dtype=bool) if pool is None else np.asarray(pool)
    total = scores[pool].sum()
    if total <= 0:
        return pool.copy()
    order = np.argsort(-scores, kind="stable")
    order = order[pool[order]]
    csum = np.cumsum(scores[order])
    k = int(np.searchsorted(csum, coverage * total)) + 1
    mask = np.zeros(len(scores), dtype=bool)
    mask[order[:k]] = True
    return mask


@dataclass
class FormatModel:
    """Trained boosted ensemble plus everything needed to apply it.

    Trees are kept as one flattened bank so a single prediction descends
    all of them simultaneously with a handful of vectorized steps.
    """

    node_feature: np.ndarray
    node_threshold: np.ndarray
    node_left: np.ndarray
    node_right: np.ndarray
    node_value: np.ndarray
    tree_root: np.ndarray
    tree_class: np.ndarray
    label_space: list
    scaler: FeatureScaler
    selected_features: np.ndarray
    split_scores: np.ndarray
    hyperparams: GbtHyperParams
    trained_weight: float = float("nan")
    runtime_range: tuple = (float("nan"), float("nan"))
    memory_range: tuple = (float("nan"), float("nan"))

    @property
    def n_classes(self):
        return len(self.label_space)

    def _prepare(self, v):
        arr = v.as_array() if isinstance(v, FeatureVector) else \
            np.asarray(v, dtype=np.float64)
        scaled = self.scaler.transform_array(arr)
        return np.where(self.selected_features, scaled, 0.0)

    def decision_scores(self, v) -> np.ndarray:
        """Per-class accumulated leaf weights for one feature vector."""
        xv = self._prepare(v)
        cur = self.tree_root.copy()
        while True:
            feat = self.node_feature[cur]
            interior = feat >= 0
            if not interior.any():
                break
            go_left = xv[np.where(interior, feat, 0)] < self.node_threshold[cur]
            nxt = np.where(go_left, self.node_left[cur], self.node_right[cur])
            cur = np.where(interior, nxt, cur)
        return np.bincount(self.tree_class, weights=self.node_value[cur],
                           minlength=self.n_classes)

    def predict(self, v) -> StorageFormat:
        """Predicted storage format; score ties resolve to the lowest code."""
        scores = self.decision_scores(v)
        return StorageFormat(self.label_space[int(np.argmax(scores))])

    def predict_many(self, vectors) -> list:
        return [self.predict(v) for v in vectors]


def predict_format(model, v) -> StorageFormat:
    """Functional alias for ``model.predict`` (works for baselines too)."""
    return model.predict(v)


def _extract_training_arrays(data):
    samples = data.samples if hasattr(data, "samples") else list(data)
    if len(samples) < 10:
        raise ValueError("need at least 10 labeled samples to train")
    codes = np.array([int(s.canonical_label) for s in samples])
    classes = sorted(set(codes.tolist()))
    if len(classes) < 2:
        raise ValueError("degenerate label space: a single class cannot "
                         "be learned")
    scaler = fit_scaler([s.features for s in samples])
    X = scaler.transform_array(np.vstack([s.features.as_array()
                                          for s in samples]))
    class_index = {c: i for i, c in enumerate(classes)}
    y = np.zeros((len(samples), len(classes)))
    y[np.arange(len(samples)), [class_index[c] for c in codes]] = 1.0
    return samples, X, y, classes, scaler


def _bank_from_trees(trees):
    node_feature, node_threshold = [], []
    node_left, node_right, node_value = [], [], []
    tree_root, tree_class = [], []
    offset = 0
    for c, (feature, threshold, left, right, value) in trees:
        n = len(feature)
        tree_root.append(offset)
        tree_class.append(c)
        node_feature.append(feature)
        node_threshold.append(threshold)
        node_left.append(np.where(left >= 0, left + offset, -1))
        node_right.append(np.where(right >= 0, right + offset, -1))
        node_value.append(value)
        offset += n
    return (np.concatenate(node_feature), np.concatenate(node_threshold),
            np.concatenate(node_left), np.concatenate(node_right),
            np.concatenate(node_value),
            np.asarray(tree_root, dtype=np.int64),
            np.asarray(tree_class, dtype=np.int64))


def train_gbt(data, hp: GbtHyperParams = GbtHyperParams(), *,
              feature_pool=None) -> FormatModel:
    """Train the boosted-tree format predictor on labeled samples.

    Pass one boosts on every feature in ``feature_pool`` (default: all 19)
    to collect split counts; pass two retrains on the selected subset.
    """
    samples, X, y, classes, scaler = _extract_training_arrays(data)
    pool = np.ones(N_FEATURES, dtype=bool) if feature_pool is None \
        else np.asarray(feature_pool, dtype=bool)
    pass1 = _boost(X, y, hp, np.nonzero(pool)[0])
    scores = count_feature_splits(pass1)
    mask = select_features(scores, pool=pool)
    pass2 = _boost(X, y, hp, np.nonzero(mask)[0])
    bank = _bank_from_trees(pass2)
    meta = _dataset_metadata(data)
    return FormatModel(*bank, label_space=classes, scaler=scaler,
                       selected_features=mask, split_scores=scores,
                       hyperparams=hp, **meta)


def _dataset_metadata(data):
    if hasattr(data, "policy"):
        return {"trained_weight": data.policy.w,
                "runtime_range": tuple(data.runtime_range),
                "memory_range": tuple(data.memory_range)}
    return {}


# ---------------------------------------------------------------------------
# leave-one-out feature importance
# ---------------------------------------------------------------------------

def tie_aware_accuracy(predictions, samples) -> float:
    """Share of predictions landing anywhere in the sample's optimal set."""
    hits = sum(1 for pred, s in zip(predictions, samples)
               if pred in s.best_labels)
    return hits / len(samples) if samples else 0.0


def leave_one_out_importance(data, hp: GbtHyperParams, *,
                             train_fraction: float = 0.8,
                             split_seed: int = 0):
    """Accuracy drop per removed feature, normalized to percentages.

    Trains a baseline on all features over a fixed split, then retrains 19
    times with one feature excluded each. Negative drops are floored at
    zero before normalizing; if no feature causes a drop the percentages
    fall back to uniform.
    """
    samples = data.samples if hasattr(data, "samples") else list(data)
    train, val = split_samples(samples, train_fraction, split_seed)
    baseline_model = train_gbt(train, hp)
    baseline = tie_aware_accuracy(
        baseline_model.predict_many([s.features for s in val]), val)
    drops = np.zeros(N_FEATURES)
    for f in range(N_FEATURES):
        pool = np.ones(N_FEATURES, dtype=bool)
        pool[f] = False
        model = train_gbt(train, hp, feature_pool=pool)
        acc = tie_aware_accuracy(
            model.predict_many([s.features for s in val]), val)
        drops[f] = baseline - acc
    floored = np.maximum(drops, 0.0)
    total = floored.sum()
    pct = 100.0 * floored / total if total > 0 \
        else np.full(N_FEATURES, 100.0 / N_FEATURES)
    return baseline, drops, pct


def split_samples(samples, train_fraction: float = 0.8, seed: int = 0):
    """Deterministic shuffled train/validation split (at least 1 sample each)."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    order = np.random.default_rng(seed).permutation(len(samples))
    cut = int(round(train_fraction * len(samples)))
    cut = min(max(cut, 1), len(samples) - 1)
    train = [samples[i] for i in order[:cut]]
    val = [samples[i] for i in order[cut:]]
    return train, val


# ---------------------------------------------------------------------------
# baselines
# ---------------------------------------------------------------------------

def _best_split_gini(X, y_codes, idx, n_classes, min_leaf_samples):
    n = len(idx)
    counts = np.bincount(y_codes[idx], minlength=n_classes).astype(np.float64)
    parent = 1.0 - ((counts / n) ** 2).sum()
    best = None
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y_codes[idx]] = 1.0
    for f in range(X.shape[1]):
        xs = X[idx, f]
        order = np.argsort(xs, kind="stable")
        xo = xs[order]
        pos = np.nonzero(xo[:-1] < xo[1:])[0]
        if min_leaf_samples > 1:
            nl = pos + 1
            pos = pos[(nl >= min_leaf_samples) & (n - nl >= min_leaf_samples)]
        if len(pos) == 0:
            continue
        cum = np.cumsum(onehot[order], axis=0)
        cl = cum[pos]
        cr = counts - cl
        nl = (pos + 1).astype(np.float64)
        nr = n - nl
        gini_l = 1.0 - ((cl / nl[:, None]) ** 2).sum(axis=1)
        gini_r = 1.0 - ((cr / nr[:, None]) ** 2).sum(axis=1)
        gain = parent - (nl * gini_l + nr * gini_r) / n
        k = int(np.argmax(gain))
        if best is None or gain[k] > best[0]:
            best = (float(gain[k]), f, float((xo[pos[k]] + xo[pos[k] + 1]) / 2))
    return best


@dataclass
class DecisionTreeBaseline:
    """Single gini CART tree over normalized features (majority leaves)."""

    tree: tuple
    label_space: list
    scaler: FeatureScaler

    def predict(self, v) -> StorageFormat:
        arr = v.as_array() if isinstance(v, FeatureVector) else \
            np.asarray(v, dtype=np.float64)
        xv = self.scaler.transform_array(arr)
        feature, threshold, left, right, value = self.tree
        node = 0
        while feature[node] >= 0:
            node = left[node] if xv[feature[node]] < threshold[node] \
                else right[node]
        return StorageFormat(self.label_space[int(value[node])])

    def predict_many(self, vectors):
        return [self.predict(v) for v in vectors]


def train_baseline_tree(data, max_depth: int = 8,
                        min_leaf_samples: int = 1) -> DecisionTreeBaseline:
    """Exact-greedy gini decision tree baseline (depth capped at 8)."""
    _, X, y, classes, scaler = _extract_training_arrays(data)
    y_codes = np.argmax(y, axis=1)
    n_classes = len(classes)
    tree = _TreeArrays()
    stack = [(tree.add_node(), np.arange(len(y_codes)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        counts = np.bincount(y_codes[idx], minlength=n_classes)
        split = None
        if depth < max_depth and len(idx) >= 2 * min_leaf_samples \
                and np.count_nonzero(counts) > 1:
            split = _best_split_gini(X, y_codes, idx, n_classes,
                                     min_leaf_samples)
        if split is None or split[0] <= 0.0:
            tree.value[node] = float(np.argmax(counts))
            continue
        _, f, thr = split
        go_left = X[idx, f] < thr
        tree.feature[node] = f
        tree.threshold[node] = thr
        left = tree.add_node()
        right = tree.add_node()
        tree.left[node] = left
        tree.right[node] = right
        stack.append((right, idx[~go_left], depth + 1))
        stack.append((left, idx[go_left], depth + 1))
    return DecisionTreeBaseline(tree.finalized(), classes, scaler)


@dataclass
class KnnBaseline:
    """k-nearest-neighbour over normalized features, Euclidean distance."""

    points: np.ndarray
    codes: np.ndarray
    label_space: list
    scaler: FeatureScaler
    k: int = 1

    def predict(self, v) -> StorageFormat:
        arr = v.as_array() if isinstance(v, FeatureVector) else \
            np.asarray(v, dtype=np.float64)
        xv = self.scaler.transform_array(arr)
        d2 = ((self.points - xv) ** 2).sum(axis=1)
        if self.k == 1:
            code = self.codes[int(np.argmin(d2))]
        else:
            order = np.lexsort((np.arange(len(d2)), d2))[:self.k]
            votes = np.bincount(self.codes[order],
                                minlength=len(self.label_space))
            code = int(np.argmax(votes))
        return StorageFormat(self.label_space[int(code)])

    def predict_many(self, vectors):
        return [self.predict(v) for v in vectors]


def train_baseline_knn(data, k: int = 1) -> KnnBaseline:
    _, X, y, classes, scaler = _extract_training_arrays(data)
    if k < 1:
        raise ValueError("k must be >= 1")
    return KnnBaseline(X, np.argmax(y, axis=1), classes, scaler, k)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def save_model(model: FormatModel, path):
    """Serialize a FormatModel to versioned JSON (prediction-exact round-trip)."""
    trees = []
    roots = model.tree_root.tolist() + [len(model.node_feature)]
    for t in range(len(model.tree_root)):
        s, e = roots[t], roots[t + 1]
        trees.append({
            "class": int(model.tree_class[t]),
            "feature": model.node_feature[s:e].tolist(),
            "threshold": model.node_threshold[s:e].tolist(),
            "left": [v - s if v >= 0 else -1
                     for v in model.node_left[s:e].tolist()],
            "right": [v - s if v >= 0 else -1
                      for v in model.node_right[s:e].tolist()],
            "value": model.node_value[s:e].tolist(),
        })
    doc = {
        "schema": "spmmselect-format-model",
        "schema_version": MODEL_SCHEMA_VERSION,
        "hyperparams": asdict(model.hyperparams),
        "label_space": [int(c) for c in model.label_space],
        "feature_names": list(FEATURE_NAMES),
        "selected_features": model.selected_features.astype(int).tolist(),
        "split_scores": model.split_scores.tolist(),
        "scaler": {"mins": model.scaler.mins.tolist(),
                   "maxs": model.scaler.maxs.tolist()},
        "trained_weight": float(model.trained_weight),
        "runtime_range": [float(v) for v in model.runtime_range],
        "memory_range": [float(v) for v in model.memory_range],
        "trees": trees,
    }
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_model(path) -> FormatModel:
    with open(path, "r", encoding="ascii") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelSchemaError(f"malformed model JSON: {exc}") from None
    if doc.get("schema") != "spmmselect-format-model":
        raise ModelSchemaError(f"not a format-model file: "
                               f"schema={doc.get('schema')!r}")
    if doc.get("schema_version") != MODEL_SCHEMA_VERSION:
        raise ModelSchemaError(
            f"unsupported model schema version {doc.get('schema_version')!r}; "
            f"this build reads version {MODEL_SCHEMA_VERSION}")
    trees = []
    for t in doc["trees"]:
        trees.append((t["class"],
                      (np.asarray(t["feature"], dtype=np.int64),
                       np.asarray(t["threshold"], dtype=np.float64),
                       np.asarray(t["left"], dtype=np.int64),
                       np.asarray(t["right"], dtype=np.int64),
                       np.asarray(t["value"], dtype=np.float64))))
    bank = _bank_from_trees(trees)
    scaler = FeatureScaler(np.asarray(doc["scaler"]["mins"]),
                           np.asarray(doc["scaler"]["maxs"]))
    return FormatModel(
        *bank, label_space=[int(c) for c in doc["label_space"]],
        scaler=scaler,
        selected_features=np.asarray(doc["selected_features"], dtype=bool),
        split_scores=np.asarray(doc["split_scores"], dtype=np.int64),
        hyperparams=GbtHyperParams(**doc["hyperparams"]),
        trained_weight=float(doc["trained_weight"]),
        runtime_range=tuple(doc["runtime_range"]),
        memory_range=tuple(doc["memory_range"]))
