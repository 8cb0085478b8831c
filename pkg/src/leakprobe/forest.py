"""Random forest of Gini CART trees, written from scratch.

Trees are grown depth-first (left child before right) from a per-tree
xoshiro256** substream, so a fitted model is a pure function of the training
matrix and :class:`ForestConfig`.
"""
from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .errors import ForestError
from .probes import FeatureMatrix
from .rng import Xoshiro256

MODEL_FORMAT = "leakprobe.forest.v1"
_EPS = np.finfo(np.float64).eps


@dataclass(frozen=True)
class ForestConfig:
    """Hyperparameters; the defaults mirror the usual library defaults for a
    random forest classifier (100 trees, sqrt features, bootstrap, fully grown)."""

    n_trees: int = 100
    max_features: Optional[int] = None  # None -> floor(sqrt(D)), at least 1
    bootstrap: bool = True
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    max_depth: Optional[int] = None
    seed: int = 0

    def resolve(self, n_features: int) -> "ForestConfig":
        """Fill in ``max_features`` for ``n_features`` columns and validate."""
        m = self.max_features
        if m is None:
            m = max(1, math.isqrt(n_features))
        cfg = replace(self, max_features=m)
        if cfg.n_trees < 1:
            raise ForestError(f"n_trees must be >= 1, got {cfg.n_trees}")
        if not 1 <= m <= n_features:
            raise ForestError(f"max_features must lie in [1, {n_features}], got {m}")
        if cfg.min_samples_split < 2:
            raise ForestError(f"min_samples_split must be >= 2, got {cfg.min_samples_split}")
        if cfg.min_samples_leaf < 1:
            raise ForestError(f"min_samples_leaf must be >= 1, got {cfg.min_samples_leaf}")
        if cfg.max_depth is not None and cfg.max_depth < 0:
            raise ForestError(f"max_depth must be >= 0, got {cfg.max_depth}")
        if not 0 <= cfg.seed < 2**64:
            raise ForestError(f"seed must be a 64-bit unsigned integer, got {cfg.seed}")
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    impurity_decrease: float


@dataclass
class TreeNode:
    """Recursive view of a tree: internal when ``feature`` is set, else a leaf."""

    feature: Optional[int] = None
    threshold: Optional[float] = None
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None
    class_counts: Optional[list[int]] = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"class_counts": list(self.class_counts)}
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeNode":
        if "class_counts" in d:
            return cls(class_counts=[int(c) for c in d["class_counts"]])
        return cls(
            feature=int(d["feature"]),
            threshold=float(d["threshold"]),
            left=cls.from_dict(d["left"]),
            right=cls.from_dict(d["right"]),
        )


def gini_impurity(class_counts) -> float:
    counts = np.asarray(class_counts, dtype=np.float64)
    if np.any(counts < 0):
        raise ValueError("class counts must be non-negative")
    total = counts.sum()
    if total <= 0:
        raise ValueError("gini impurity is undefined for an empty node")
    p = counts / total
    return float(1.0 - np.sum(p * p))


def _midpoint(a: float, b: float) -> float:
    t = (a + b) / 2.0
    # adjacent doubles: the midpoint may round up onto b
    return a if t >= b else t


def best_split(
    X: np.ndarray,
    y: np.ndarray,
    rows: Sequence[int],
    features: Sequence[int],
    n_classes: int,
    min_samples_leaf: int = 1,
) -> Optional[Split]:
    """Best Gini threshold split of ``rows`` over the candidate ``features``.

    Thresholds sit at midpoints between consecutive distinct values and send
    ``x <= threshold`` left. Maximising the weighted Gini decrease is the same
    as maximising ``sum(cL^2)/nL + sum(cR^2)/nR``; that score is computed from
    exact integer sums of squares, and scores within a few ulps of the best are
    treated as ties, resolved by lowest feature index then lowest threshold.
    """
    rows = np.asarray(rows, dtype=np.int64)
    n = len(rows)
    if n == 0:
        raise ValueError("best_split needs at least one row")
    ys = y[rows]
    counts = np.bincount(ys, minlength=n_classes).astype(np.int64)
    if np.count_nonzero(counts) <= 1 or n < 2 * min_samples_leaf:
        return None

    feats = np.unique(np.asarray(features, dtype=np.int64))
    xs = X[np.ix_(rows, feats)]
    order = np.argsort(xs, axis=0, kind="stable")
    xs = np.take_along_axis(xs, order, axis=0)
    onehot = ys[order][:, :, None] == np.arange(n_classes)
    left = np.cumsum(onehot[:-1], axis=0, dtype=np.int64)  # (n-1, m, K)
    right = counts - left
    n_left = np.arange(1, n, dtype=np.int64)[:, None]
    n_right = n - n_left

    valid = (xs[1:] > xs[:-1]) & (n_left >= min_samples_leaf) & (n_right >= min_samples_leaf)
    if not valid.any():
        return None
    score = (left * left).sum(axis=2) / n_left + (right * right).sum(axis=2) / n_right
    score = np.where(valid, score, -np.inf)
    best = score.max()
    ties = score >= best - 8.0 * _EPS * best
    # feature-major scan: lowest feature first, then lowest threshold
    flat = int(np.argmax(ties.T.ravel()))
    j, i = divmod(flat, n - 1)
    s = float(score[i, j])
    decrease = s / n - float((counts * counts).sum()) / (n * n)
    return Split(int(feats[j]), _midpoint(float(xs[i, j]), float(xs[i + 1, j])), decrease)


class DecisionTree:
    """Array-backed CART tree. ``feature[i] == -1`` marks leaf ``i``."""

    def __init__(self, feature, threshold, left, right, counts):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.counts = np.asarray(counts, dtype=np.int64)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row of ``X``."""
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        while True:
            f = self.feature[node]
            active = f >= 0
            if not active.any():
                return node
            r, nd, ff = rows[active], node[active], f[active]
            go_left = X[r, ff] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])

    def predict(self, X: np.ndarray) -> np.ndarray:
        # argmax keeps the lowest class index on ties
        return np.argmax(self.counts[self.apply(X)], axis=1)

    def to_node(self, i: int = 0) -> TreeNode:
        if self.feature[i] < 0:
            return TreeNode(class_counts=[int(c) for c in self.counts[i]])
        return TreeNode(
            feature=int(self.feature[i]),
            threshold=float(self.threshold[i]),
            left=self.to_node(int(self.left[i])),
            right=self.to_node(int(self.right[i])),
        )

    @classmethod
    def from_node(cls, root: TreeNode, n_classes: int) -> "DecisionTree":
        feature, threshold, left, right, counts = [], [], [], [], []

        def visit(node: TreeNode) -> int:
            i = len(feature)
            feature.append(-1 if node.is_leaf else node.feature)
            threshold.append(0.0 if node.is_leaf else node.threshold)
            left.append(-1)
            right.append(-1)
            counts.append(node.class_counts if node.is_leaf else [0] * n_classes)
            if not node.is_leaf:
                left[i] = visit(node.left)
                right[i] = visit(node.right)
            return i

        visit(root)
        return cls(feature, threshold, left, right, counts)


def grow_tree(
    X: np.ndarray, y: np.ndarray, n_classes: int, config: ForestConfig, tree_index: int
) -> DecisionTree:
    """Grow tree ``tree_index`` of a forest; ``config`` must already be resolved."""
    n, d = X.shape
    rng = Xoshiro256.substream(config.seed, tree_index)
    if config.bootstrap:
        root_rows = np.array([rng.below(n) for _ in range(n)], dtype=np.int64)
    else:
        root_rows = np.arange(n, dtype=np.int64)

    feature, threshold, left, right, counts = [], [], [], [], []
    # (rows, depth, parent, is_left); right pushed before left so the left
    # subtree is built and draws from the stream first
    stack = [(root_rows, 0, -1, False)]
    while stack:
        rows, depth, parent, is_left = stack.pop()
        node = len(feature)
        if parent >= 0:
            (left if is_left else right)[parent] = node
        node_counts = np.bincount(y[rows], minlength=n_classes)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append(node_counts)

        if (
            len(rows) < config.min_samples_split
            or (config.max_depth is not None and depth >= config.max_depth)
            or np.count_nonzero(node_counts) <= 1
        ):
            continue
        feats = rng.sample_distinct(d, config.max_features)
        split = best_split(X, y, rows, feats, n_classes, config.min_samples_leaf)
        if split is None:
            continue
        feature[node] = split.feature
        threshold[node] = split.threshold
        goes_left = X[rows, split.feature] <= split.threshold
        stack.append((rows[~goes_left], depth + 1, node, False))
        stack.append((rows[goes_left], depth + 1, node, True))

    return DecisionTree(feature, threshold, left, right, np.array(counts).reshape(len(feature), n_classes))


def _grow_args(args):
    return grow_tree(*args)


@dataclass
class RandomForestModel:
    trees: list[DecisionTree]
    config: ForestConfig
    n_classes: int
    n_features: int

    def votes(self, X: np.ndarray) -> np.ndarray:
        """Per-class vote counts, shape ``(rows, K)``."""
        X = self._check(X)
        out = np.zeros((len(X), self.n_classes), dtype=np.int64)
        rows = np.arange(len(X))
        for tree in self.trees:
            np.add.at(out, (rows, tree.predict(X)), 1)
        return out

    def predict_many(self, X: np.ndarray) -> np.ndarray:
        # majority vote, lowest class index on ties
        return np.argmax(self.votes(X), axis=1)

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ForestError(f"expected rows of width {self.n_features}, got {X.shape[1]}")
        return X

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "config": self.config.to_dict(),
            "n_classes": self.n_classes,
            "n_features": self.n_features,
            "trees": [t.to_node().to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RandomForestModel":
        if d.get("format") != MODEL_FORMAT:
            raise ForestError(f"unsupported model format {d.get('format')!r}")
        k = int(d["n_classes"])
        trees = [DecisionTree.from_node(TreeNode.from_dict(t), k) for t in d["trees"]]
        return cls(trees, ForestConfig(**d["config"]), k, int(d["n_features"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "RandomForestModel":
        return cls.from_dict(json.loads(text))

    def sha256(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()


def fit(matrix: FeatureMatrix, config: ForestConfig = ForestConfig(), jobs: int = 1) -> RandomForestModel:
    """Train a forest on ``matrix``. ``jobs > 1`` grows trees in worker processes;
    the result is identical either way."""
    X = np.ascontiguousarray(matrix.values, dtype=np.float64)
    y = np.asarray(matrix.labels, dtype=np.int64)
    if X.shape[0] < 2:
        raise ForestError(f"need at least 2 training rows, got {X.shape[0]}")
    if len(np.unique(y)) < 2:
        raise ForestError(f"training labels contain a single class ({int(y[0])}); nothing to separate")
    cfg = config.resolve(X.shape[1])
    k = matrix.n_classes
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            trees = list(pool.map(_grow_args, [(X, y, k, cfg, t) for t in range(cfg.n_trees)]))
    else:
        trees = [grow_tree(X, y, k, cfg, t) for t in range(cfg.n_trees)]
    return RandomForestModel(trees, cfg, k, X.shape[1])


def predict(model: RandomForestModel, features) -> int:
    row = np.asarray(features, dtype=np.float64)
    if row.ndim != 1:
        raise ForestError("predict takes a single feature row")
    return int(model.predict_many(row)[0])


def accuracy(model: RandomForestModel, matrix: FeatureMatrix) -> float:
    """Percentage of rows whose predicted class equals the label."""
    if matrix.rows == 0:
        raise ForestError("accuracy is undefined on an empty matrix")
    pred = model.predict_many(matrix.values)
    return 100.0 * int(np.sum(pred == matrix.labels)) / matrix.rows
