"""From-scratch packet classifiers and clustering with evaluation metrics.

Random Forest: bagged Gini decision trees, classification by majority vote.
SVM: linear large-margin classifier fit by stochastic sub-gradient descent
on the L2-regularized hinge loss (learning rate 1/(lambda*t)), on
standardized features. Plus k-nearest-neighbour voting and Lloyd k-means.
All training is deterministic under a fixed seed; every tie (splits, votes,
neighbours) breaks toward the smaller index or class 0.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .core import (InputError, LabeledDataset, PreconditionError,
                   atomic_write_text, make_rng, spawn_rng)


def _check_trainable(data: LabeledDataset) -> None:
    if len(data) < 2:
        raise PreconditionError("need at least 2 rows to train")
    if len(np.unique(data.y)) < 2:
        raise PreconditionError("training data contains a single class")


# ---------------------------------------------------------------------------
# Decision trees and forests

@dataclass
class DecisionTree:
    root: dict
    max_depth: int
    min_samples_split: int

    def predict_row(self, row: np.ndarray) -> int:
        node = self.root
        while "counts" not in node:
            node = node["left"] if row[node["feature"]] <= node["threshold"] else node["right"]
        counts = node["counts"]
        return 0 if counts[0] >= counts[1] else 1


@dataclass
class ForestModel:
    trees: list[DecisionTree]
    n_trees: int
    feature_subset_size: int
    seed: int
    feature_names: tuple[str, ...] = ()

    def predict_row(self, row) -> int:
        row = np.asarray(row, dtype=np.float64)
        if self.feature_names and len(row) != len(self.feature_names):
            raise InputError(
                f"row has {len(row)} features, model expects {len(self.feature_names)}")
        votes = sum(t.predict_row(row) for t in self.trees)
        return 1 if votes * 2 > len(self.trees) else 0  # tie -> class 0

    def predict(self, X) -> np.ndarray:
        return np.asarray([self.predict_row(r) for r in np.asarray(X, dtype=np.float64)])


def _gini(pos: float, n: float) -> float:
    if n == 0:
        return 0.0
    p = pos / n
    return 2.0 * p * (1.0 - p)


def _best_split(X: np.ndarray, y: np.ndarray, feat_idxs: np.ndarray):
    """Best (feature, midpoint threshold) by Gini impurity decrease; ties go
    to the smaller feature index / smaller threshold."""
    n = len(y)
    total_pos = float(np.sum(y))
    parent = _gini(total_pos, n)
    best = (0.0, None, None)  # (decrease, feature, threshold)
    for f in sorted(int(f) for f in feat_idxs):
        col = X[:, f]
        order = np.argsort(col, kind="stable")
        sv = col[order]
        sy = y[order]
        cum_pos = np.cumsum(sy)
        boundary = np.nonzero(sv[1:] > sv[:-1])[0]  # split after position b
        for b in boundary:
            n_left = b + 1
            pos_left = float(cum_pos[b])
            g = (n_left * _gini(pos_left, n_left)
                 + (n - n_left) * _gini(total_pos - pos_left, n - n_left)) / n
            decrease = parent - g
            if decrease > best[0] + 1e-12:
                best = (decrease, f, (sv[b] + sv[b + 1]) / 2.0)
    return best


def _grow(X, y, idx, depth, max_depth, min_samples_split, subset_size, rng) -> dict:
    sub_y = y[idx]
    counts = [int(np.sum(sub_y == 0)), int(np.sum(sub_y == 1))]
    if (depth >= max_depth or len(idx) < min_samples_split
            or counts[0] == 0 or counts[1] == 0):
        return {"counts": counts}
    d = X.shape[1]
    feats = rng.choice(d, size=min(subset_size, d), replace=False)
    decrease, f, th = _best_split(X[idx], sub_y, feats)
    if f is None:
        return {"counts": counts}
    left_mask = X[idx, f] <= th
    left_idx = idx[left_mask]
    right_idx = idx[~left_mask]
    return {
        "feature": int(f),
        "threshold": float(th),
        "left": _grow(X, y, left_idx, depth + 1, max_depth, min_samples_split, subset_size, rng),
        "right": _grow(X, y, right_idx, depth + 1, max_depth, min_samples_split, subset_size, rng),
    }


def train_forest(data: LabeledDataset, n_trees: int = 100, max_depth: int = 16,
                 min_samples_split: int = 2, seed: int = 0) -> ForestModel:
    """Bootstrap-sampled Gini trees with a sqrt-size feature subset per split.
    Per-tree RNG streams derive from (seed, tree_index), so parallel and
    sequential training would build identical forests."""
    _check_trainable(data)
    n, d = data.X.shape
    subset = math.ceil(math.sqrt(d))
    trees = []
    for t in range(n_trees):
        rng = spawn_rng(seed, t)
        boot = rng.integers(0, n, size=n)
        root = _grow(data.X, data.y, boot, 0, max_depth, min_samples_split, subset, rng)
        trees.append(DecisionTree(root=root, max_depth=max_depth,
                                  min_samples_split=min_samples_split))
    return ForestModel(trees=trees, n_trees=n_trees, feature_subset_size=subset,
                       seed=seed, feature_names=data.feature_names)


def predict_forest(model: ForestModel, row) -> int:
    return model.predict_row(row)


# ---------------------------------------------------------------------------
# Linear SVM (hinge loss, stochastic sub-gradient)

@dataclass
class SvmModel:
    weights: np.ndarray
    bias: float
    feature_means: np.ndarray
    feature_stddevs: np.ndarray
    lam: float
    epochs: int
    seed: int
    feature_names: tuple[str, ...] = ()

    def decision(self, row) -> float:
        row = np.asarray(row, dtype=np.float64)
        if row.shape != self.weights.shape:
            raise InputError(f"row has {row.shape} features, model expects {self.weights.shape}")
        z = (row - self.feature_means) / self.feature_stddevs
        return float(np.dot(self.weights, z) + self.bias)

    def predict_row(self, row) -> int:
        return 1 if self.decision(row) > 0 else 0  # sign 0 -> class 0

    def predict(self, X) -> np.ndarray:
        return np.asarray([self.predict_row(r) for r in np.asarray(X, dtype=np.float64)])


def train_svm(data: LabeledDataset, lam: float = 1e-4, epochs: int = 50,
              seed: int = 0) -> SvmModel:
    _check_trainable(data)
    if lam <= 0 or epochs < 1:
        raise InputError("lam must be > 0 and epochs >= 1")
    n, d = data.X.shape
    means = data.X.mean(axis=0)
    stds = data.X.std(axis=0)
    zero_var = stds <= 0
    stds = np.where(zero_var, 1.0, stds)
    Z = (data.X - means) / stds  # zero-variance columns become all-zero
    y = np.where(data.y == 1, 1.0, -1.0)

    rng = make_rng(seed)
    w = np.zeros(d)
    b = 0.0
    t = 1
    # The bias is treated as an augmented constant feature and regularized
    # along with the weights; an unregularized bias never sheds its huge
    # early 1/(lam*t) steps and destabilizes the fit.
    for _ in range(epochs):
        for i in rng.permutation(n):
            eta = 1.0 / (lam * t)
            decay = 1.0 - eta * lam
            x = Z[i]
            if y[i] * (np.dot(w, x) + b) < 1.0:
                w = decay * w + eta * y[i] * x
                b = decay * b + eta * y[i]
            else:
                w = decay * w
                b = decay * b
            t += 1
    w[zero_var] = 0.0
    return SvmModel(weights=w, bias=b, feature_means=means, feature_stddevs=stds,
                    lam=lam, epochs=epochs, seed=seed, feature_names=data.feature_names)


def predict_svm(model: SvmModel, row) -> int:
    return model.predict_row(row)


# ---------------------------------------------------------------------------
# kNN and k-means

def knn_predict(train: LabeledDataset, row, k: int = 5) -> int:
    if k < 1 or k > len(train):
        raise PreconditionError(f"k must be in 1..{len(train)}, got {k}")
    row = np.asarray(row, dtype=np.float64)
    dists = np.sqrt(np.sum((train.X - row) ** 2, axis=1))
    order = np.argsort(dists, kind="stable")[:k]  # distance ties -> lower row index
    votes = int(np.sum(train.y[order]))
    return 1 if votes * 2 > k else 0  # vote tie -> class 0


def kmeans(X, k: int = 2, seed: int = 0, max_iter: int = 100):
    """Farthest-point-seeded Lloyd iterations until assignment fixpoint."""
    X = np.asarray(X, dtype=np.float64)
    n = len(X)
    if k < 1 or k > n:
        raise PreconditionError(f"k must be in 1..{n}, got {k}")
    rng = make_rng(seed)
    chosen = [int(rng.integers(n))]
    while len(chosen) < k:
        d2 = np.min([np.sum((X - X[c]) ** 2, axis=1) for c in chosen], axis=0)
        chosen.append(int(np.argmax(d2)))  # ties -> smallest index
    centroids = X[chosen].copy()

    assignments = np.full(n, -1, dtype=np.int64)
    for _ in range(max_iter):
        d2 = np.sum((X[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
        new = np.argmin(d2, axis=1)  # ties -> smaller centroid index
        for c in range(k):
            if not np.any(new == c):
                worst = int(np.argmax(d2[np.arange(n), new]))
                centroids[c] = X[worst]
                new[worst] = c
        if np.array_equal(new, assignments):
            break
        assignments = new
        for c in range(k):
            members = X[assignments == c]
            if len(members):
                centroids[c] = members.mean(axis=0)
    return centroids, assignments


# ---------------------------------------------------------------------------
# Evaluation and splitting

@dataclass(frozen=True)
class EvalReport:
    tp: int
    fp: int
    tn: int
    fn: int
    accuracy: float
    precision: float
    recall: float
    f1: float

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
                "accuracy": self.accuracy, "precision": self.precision,
                "recall": self.recall, "f1": self.f1}


def evaluate(model, test: LabeledDataset) -> EvalReport:
    """Confusion counts and Table-2-style metrics, attack as positive class."""
    if len(test) == 0:
        raise PreconditionError("test set is empty")
    pred = model.predict(test.X)
    tp = int(np.sum((pred == 1) & (test.y == 1)))
    fp = int(np.sum((pred == 1) & (test.y == 0)))
    tn = int(np.sum((pred == 0) & (test.y == 0)))
    fn = int(np.sum((pred == 0) & (test.y == 1)))
    n = len(test)
    precision = tp / (tp + fp) if (tp + fp) else 0.0
    recall = tp / (tp + fn) if (tp + fn) else 0.0
    f1 = 2 * precision * recall / (precision + recall) if (precision + recall) else 0.0
    return EvalReport(tp=tp, fp=fp, tn=tn, fn=fn,
                      accuracy=(tp + tn) / n, precision=precision, recall=recall, f1=f1)


def split(data: LabeledDataset, train_fraction: float = 0.7,
          seed: int = 0) -> tuple[LabeledDataset, LabeledDataset]:
    """Stratified seeded split; class fractions preserved within one row."""
    if not (0 < train_fraction < 1):
        raise InputError("train_fraction must be in (0, 1)")
    rng = make_rng(seed)
    train_idx: list[int] = []
    test_idx: list[int] = []
    for cls in (0, 1):
        idx = np.nonzero(data.y == cls)[0]
        perm = idx[rng.permutation(len(idx))]
        n_train = int(round(train_fraction * len(idx)))
        train_idx.extend(perm[:n_train])
        test_idx.extend(perm[n_train:])
    train_idx.sort()
    test_idx.sort()
    mk = lambda sel: LabeledDataset(feature_names=data.feature_names,
                                    X=data.X[sel], y=data.y[sel])
    return mk(train_idx), mk(test_idx)


# ---------------------------------------------------------------------------
# Model serialization (JSON with hyperparameters and seed, for audit)

def save_model(model, path) -> None:
    if isinstance(model, ForestModel):
        obj = {
            "type": "forest",
            "n_trees": model.n_trees,
            "feature_subset_size": model.feature_subset_size,
            "seed": model.seed,
            "feature_names": list(model.feature_names),
            "trees": [{"max_depth": t.max_depth,
                       "min_samples_split": t.min_samples_split,
                       "root": t.root} for t in model.trees],
        }
    elif isinstance(model, SvmModel):
        obj = {
            "type": "svm",
            "weights": list(model.weights),
            "bias": model.bias,
            "feature_means": list(model.feature_means),
            "feature_stddevs": list(model.feature_stddevs),
            "lambda": model.lam,
            "epochs": model.epochs,
            "seed": model.seed,
            "feature_names": list(model.feature_names),
        }
    else:
        raise InputError(f"cannot serialize model of type {type(model).__name__}")
    atomic_write_text(path, json.dumps(obj, sort_keys=True) + "\n")


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    kind = obj.get("type")
    if kind == "forest":
        trees = [DecisionTree(root=t["root"], max_depth=t["max_depth"],
                              min_samples_split=t["min_samples_split"])
                 for t in obj["trees"]]
        return ForestModel(trees=trees, n_trees=obj["n_trees"],
                           feature_subset_size=obj["feature_subset_size"],
                           seed=obj["seed"], feature_names=tuple(obj["feature_names"]))
    if kind == "svm":
        return SvmModel(weights=np.asarray(obj["weights"]), bias=obj["bias"],
                        feature_means=np.asarray(obj["feature_means"]),
                        feature_stddevs=np.asarray(obj["feature_stddevs"]),
                        lam=obj["lambda"], epochs=obj["epochs"], seed=obj["seed"],
                        feature_names=tuple(obj["feature_names"]))
    raise InputError(f"{path}: unknown model type {kind!r}")
