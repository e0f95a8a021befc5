"""Random forest over one-hot indicator rows.

Trees split on indicator == 0 (left) vs == 1 (right) by greedy Gini gain over
a per-node random feature subset. Every source of randomness derives from
numpy SeedSequence streams, one per tree, so training is reproducible
regardless of scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    ConfigError,
    DegenerateTrainingError,
    ShapeError,
    StratificationError,
)
from .evaluation import auc


@dataclass(frozen=True)
class HyperParams:
    n_trees: int = 100
    max_depth: int | None = 16
    min_samples_leaf: int = 1
    features_per_split: int | str = "sqrt"

    def __post_init__(self) -> None:
        if self.n_trees < 1 or self.min_samples_leaf < 1:
            raise ConfigError("n_trees and min_samples_leaf must be positive")
        if self.max_depth is not None and self.max_depth < 0:
            raise ConfigError("max_depth must be None or >= 0")
        if isinstance(self.features_per_split, str) and self.features_per_split not in (
            "sqrt", "all",
        ):
            raise ConfigError("features_per_split must be an int, 'sqrt' or 'all'")

    def resolve_subset_size(self, n_features: int) -> int:
        if self.features_per_split == "sqrt":
            return min(n_features, math.ceil(math.sqrt(n_features)))
        if self.features_per_split == "all":
            return n_features
        return min(n_features, int(self.features_per_split))

    def to_dict(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "min_samples_leaf": self.min_samples_leaf,
            "features_per_split": self.features_per_split,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "HyperParams":
        return cls(**obj)


@dataclass
class DecisionTree:
    """Flat node arrays; feature < 0 marks a leaf. Routing: indicator value 0
    goes left, 1 goes right."""

    feature: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # positive-class fraction of the node's training rows
    max_depth: int | None
    min_samples_leaf: int

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            feats = self.feature[node]
            active = np.nonzero(feats >= 0)[0]
            if active.size == 0:
                break
            cur = node[active]
            go_right = X[active, feats[active]] == 1
            node[active] = np.where(go_right, self.right[cur], self.left[cur])
        return self.value[node]

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "max_depth": self.max_depth,
            "min_samples_leaf": self.min_samples_leaf,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "DecisionTree":
        return cls(
            feature=np.asarray(obj["feature"], dtype=np.int64),
            left=np.asarray(obj["left"], dtype=np.int64),
            right=np.asarray(obj["right"], dtype=np.int64),
            value=np.asarray(obj["value"], dtype=np.float64),
            max_depth=obj["max_depth"],
            min_samples_leaf=obj["min_samples_leaf"],
        )


def _gini(p: np.ndarray | float) -> np.ndarray | float:
    return 2.0 * p * (1.0 - p)


def train_tree(
    X: np.ndarray,
    y: np.ndarray,
    params: HyperParams,
    rng: np.random.Generator,
    candidate_features: np.ndarray | None = None,
    importance_out: np.ndarray | None = None,
) -> DecisionTree:
    """Grow one tree on (X, y) with greedy Gini-gain splits.

    candidate_features restricts the usable columns (RFE subsets); gains,
    weighted by node size over the root size, accumulate into importance_out
    when given. Deterministic for a given rng state.
    """
    X = np.ascontiguousarray(X, dtype=np.uint8)
    y = np.asarray(y, dtype=np.uint8)
    if X.ndim != 2 or X.shape[0] != y.shape[0] or X.shape[0] == 0:
        raise ShapeError("X must be (n, F) with matching labels and n >= 1")
    pool = (
        np.arange(X.shape[1], dtype=np.int64)
        if candidate_features is None
        else np.asarray(sorted(candidate_features), dtype=np.int64)
    )
    m = params.resolve_subset_size(len(pool))
    max_depth = math.inf if params.max_depth is None else params.max_depth
    min_leaf = params.min_samples_leaf

    feature: list[int] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []

    def new_node() -> int:
        feature.append(-1)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    n_root = X.shape[0]
    stack: list[tuple[np.ndarray, int, int]] = [(np.arange(n_root), 0, new_node())]
    while stack:
        idx, depth, node_id = stack.pop()
        y_sub = y[idx]
        n = idx.size
        pos = int(y_sub.sum())
        frac = pos / n
        value[node_id] = frac
        parent_gini = _gini(frac)
        if depth >= max_depth or n < 2 * min_leaf or parent_gini == 0.0:
            continue
        cand = pool if m == len(pool) else np.sort(rng.choice(pool, size=m, replace=False))
        X_sub = X[np.ix_(idx, cand)]
        ones = X_sub.sum(axis=0, dtype=np.int64)
        pos_ones = (X_sub * y_sub[:, None]).sum(axis=0, dtype=np.int64)
        n_left = n - ones
        pos_left = pos - pos_ones
        valid = (ones >= min_leaf) & (n_left >= min_leaf)
        with np.errstate(divide="ignore", invalid="ignore"):
            g_left = _gini(np.where(n_left > 0, pos_left / np.maximum(n_left, 1), 0.0))
            g_right = _gini(np.where(ones > 0, pos_ones / np.maximum(ones, 1), 0.0))
            child_gini = (n_left * g_left + ones * g_right) / n
        gain = np.where(valid, parent_gini - child_gini, -1.0)
        best = int(np.argmax(gain))
        if gain[best] <= 1e-15:
            continue
        split_feature = int(cand[best])
        mask = X[idx, split_feature] == 1
        right_idx = idx[mask]
        left_idx = idx[~mask]
        if importance_out is not None:
            importance_out[split_feature] += (n / n_root) * gain[best]
        feature[node_id] = split_feature
        left_id = new_node()
        right_id = new_node()
        left[node_id] = left_id
        right[node_id] = right_id
        stack.append((right_idx, depth + 1, right_id))
        stack.append((left_idx, depth + 1, left_id))

    return DecisionTree(
        feature=np.asarray(feature, dtype=np.int64),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        value=np.asarray(value, dtype=np.float64),
        max_depth=params.max_depth,
        min_samples_leaf=params.min_samples_leaf,
    )


@dataclass
class ForestModel:
    """Trained ensemble plus everything needed to reproduce and apply it."""

    trees: list[DecisionTree]
    params: HyperParams
    seed: int | list[int]
    feature_names: list[str]
    selected: np.ndarray  # indices of features the trees may split on
    importances: np.ndarray  # full-width, sums to 1 when any split exists
    metadata: dict = field(default_factory=dict)

    @property
    def width(self) -> int:
        return len(self.feature_names)

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "params": self.params.to_dict(),
            "seed": self.seed,
            "feature_names": list(self.feature_names),
            "selected": self.selected.tolist(),
            "importances": self.importances.tolist(),
            "trees": [tree.to_dict() for tree in self.trees],
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ForestModel":
        if obj.get("version") != 1:
            raise ConfigError(f"unsupported model version: {obj.get('version')}")
        return cls(
            trees=[DecisionTree.from_dict(t) for t in obj["trees"]],
            params=HyperParams.from_dict(obj["params"]),
            seed=obj["seed"],
            feature_names=list(obj["feature_names"]),
            selected=np.asarray(obj["selected"], dtype=np.int64),
            importances=np.asarray(obj["importances"], dtype=np.float64),
            metadata=obj.get("metadata", {}),
        )


def train_forest(
    X: np.ndarray,
    y: np.ndarray,
    params: HyperParams,
    seed: int | Sequence[int],
    feature_names: Sequence[str] | None = None,
    selected: Sequence[int] | None = None,
) -> ForestModel:
    """Bag params.n_trees trees on bootstrap resamples of (X, y).

    Feature importances are the size-weighted Gini gains accumulated across
    all trees, normalized to sum to one.
    """
    X = np.ascontiguousarray(X, dtype=np.uint8)
    y = np.asarray(y, dtype=np.uint8)
    n, n_features = X.shape
    if y.min() == y.max():
        raise DegenerateTrainingError("training data contains a single class")
    if feature_names is None:
        feature_names = [f"f{i}" for i in range(n_features)]
    if len(feature_names) != n_features:
        raise ShapeError("feature_names length must match X width")
    sel = (
        np.arange(n_features, dtype=np.int64)
        if selected is None
        else np.asarray(sorted(selected), dtype=np.int64)
    )
    entropy = seed if isinstance(seed, int) else list(seed)
    streams = np.random.SeedSequence(entropy).spawn(params.n_trees)
    gains = np.zeros(n_features, dtype=np.float64)
    trees = []
    for stream in streams:
        rng = np.random.default_rng(stream)
        bootstrap = rng.integers(0, n, size=n)
        trees.append(
            train_tree(
                X[bootstrap], y[bootstrap], params, rng,
                candidate_features=sel, importance_out=gains,
            )
        )
    total = gains.sum()
    importances = gains / total if total > 0 else gains
    return ForestModel(
        trees=trees,
        params=params,
        seed=entropy,
        feature_names=list(feature_names),
        selected=sel,
        importances=importances,
    )


def predict_proba(model: ForestModel, X: np.ndarray) -> np.ndarray:
    """Mean leaf positive fraction across trees, one score per row."""
    X = np.asarray(X, dtype=np.uint8)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.shape[1] != model.width:
        raise ShapeError(
            f"row width {X.shape[1]} does not match model width {model.width}"
        )
    total = np.zeros(X.shape[0], dtype=np.float64)
    for tree in model.trees:
        total += tree.predict(X)
    scores = total / len(model.trees)
    return scores[0] if single else scores


def predict(model: ForestModel, row: np.ndarray) -> float:
    """Probability that a single row belongs to the positive (DSAT) class."""
    return float(predict_proba(model, np.asarray(row)))


def stratified_fold_ids(y: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Per-row fold assignment, class-stratified and seeded."""
    if k < 2:
        raise ConfigError("k must be >= 2")
    y = np.asarray(y, dtype=np.uint8)
    fold = np.empty(y.shape[0], dtype=np.int64)
    rng = np.random.default_rng(seed)
    for cls in (0, 1):
        idx = np.nonzero(y == cls)[0]
        if idx.size < k:
            raise StratificationError(
                f"class {cls} has {idx.size} rows; cannot stratify into {k} folds"
            )
        idx = rng.permutation(idx)
        fold[idx] = np.arange(idx.size) % k
    return fold


def cross_val_auc(
    X: np.ndarray,
    y: np.ndarray,
    params: HyperParams,
    k: int,
    seed: int,
    selected: Sequence[int] | None = None,
    seed_salt: Sequence[int] = (),
) -> float:
    """Mean validation AUC over stratified k folds."""
    fold = stratified_fold_ids(y, k, seed)
    aucs = []
    for f in range(k):
        train_mask = fold != f
        model = train_forest(
            X[train_mask], y[train_mask], params,
            seed=[seed, *seed_salt, f], selected=selected,
        )
        scores = predict_proba(model, X[~train_mask])
        aucs.append(auc(scores, y[~train_mask]))
    return float(np.mean(aucs))


def cv_tune(
    X: np.ndarray,
    y: np.ndarray,
    param_grid: Sequence[HyperParams],
    k: int = 5,
    seed: int = 0,
) -> tuple[HyperParams, list[tuple[HyperParams, float]]]:
    """Stratified k-fold grid search maximizing AUC.

    Ties prefer the smaller model: fewer trees, then shallower depth.
    """
    if not param_grid:
        raise ConfigError("param_grid must be non-empty")
    results = []
    for gi, params in enumerate(param_grid):
        mean_auc = cross_val_auc(X, y, params, k, seed, seed_salt=(gi,))
        results.append((params, mean_auc))

    def rank_key(item: tuple[int, tuple[HyperParams, float]]):
        gi, (params, mean_auc) = item
        depth = math.inf if params.max_depth is None else params.max_depth
        return (-mean_auc, params.n_trees, depth, params.min_samples_leaf, gi)

    best_idx = min(enumerate(results), key=rank_key)[0]
    return results[best_idx][0], results


def rfe(
    X: np.ndarray,
    y: np.ndarray,
    params: HyperParams,
    drop_fraction: float = 0.3,
    min_features: int = 1,
    k: int = 5,
    seed: int = 0,
) -> tuple[np.ndarray, list[tuple[int, float]]]:
    """Recursive feature elimination.

    Repeatedly scores the current subset by CV AUC, trains on all rows for
    importances, and drops the lowest-importance tail. Returns the subset
    with the best CV AUC (ties prefer fewer features) plus the
    (subset size, cv auc) history.
    """
    if not (0.0 < drop_fraction < 1.0):
        raise ConfigError("drop_fraction must be in (0, 1)")
    n_features = X.shape[1]
    if min_features < 1 or min_features > n_features:
        raise ConfigError("min_features must be in 1..n_features")
    current = np.arange(n_features, dtype=np.int64)
    candidates: list[tuple[np.ndarray, float]] = []
    history: list[tuple[int, float]] = []
    while True:
        cv = cross_val_auc(X, y, params, k, seed, selected=current,
                           seed_salt=(len(current),))
        candidates.append((current.copy(), cv))
        history.append((len(current), cv))
        if len(current) <= min_features:
            break
        model = train_forest(
            X, y, params, seed=[seed, len(current)], selected=current,
        )
        next_size = max(
            min_features,
            len(current) - max(1, math.floor(len(current) * drop_fraction)),
        )
        # keep the highest-importance features; ties keep the lower index
        order = sorted(current, key=lambda f: (-model.importances[f], f))
        current = np.asarray(sorted(order[:next_size]), dtype=np.int64)
    best = min(candidates, key=lambda c: (-c[1], len(c[0])))
    return best[0], history


def top_importances(model: ForestModel, n: int = 10) -> list[tuple[str, float]]:
    """Indicators by descending Gini importance; ties order by name."""
    pairs = [
        (model.feature_names[i], float(model.importances[i]))
        for i in range(model.width)
        if model.importances[i] > 0
    ]
    pairs.sort(key=lambda p: (-p[1], p[0]))
    return pairs[:n]
