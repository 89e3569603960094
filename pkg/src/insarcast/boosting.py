"""Gradient-boosted regression trees with least-squares splits.

The ensemble starts from the training-target mean and adds depth-limited
regression trees, each fit to the current residuals. Prediction is

    base_score + sum_k learning_rate * tree_k(x)

with leaf values stored unscaled (the mean residual of the rows they
cover). Splits greedily maximise the variance-reduction gain

    gain = SSE(parent) - SSE(left) - SSE(right)

computed in O(n log n) per feature through sorting and prefix sums, with
candidate thresholds at the midpoints between consecutive distinct feature
values. Exact gain ties resolve to the lowest feature index and then the
lowest threshold, so training is deterministic regardless of evaluation
order. A row goes left when its feature value is <= the threshold.

Every node records its training cover (row count); downstream attribution
uses covers to weight expectations over paths a sample never took.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyInput, FeatureCountMismatch, InvalidConfig


@dataclass
class TreeNode:
    cover: int
    value: float | None = None
    feature: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.value is not None

    def predict_one(self, x: np.ndarray) -> float:
        node = self
        while not node.is_leaf:
            node = node.left if x[node.feature] <= node.threshold else node.right
        return node.value

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(len(X))
        stack = [(self, np.arange(len(X)))]
        while stack:
            node, idx = stack.pop()
            if node.is_leaf:
                out[idx] = node.value
                continue
            go_left = X[idx, node.feature] <= node.threshold
            stack.append((node.left, idx[go_left]))
            stack.append((node.right, idx[~go_left]))
        return out


@dataclass(frozen=True)
class GbdtParams:
    max_depth: int = 6
    num_leaves: int = 31
    shrinkage: float = 0.1
    min_samples_leaf: int = 20
    max_rounds: int = 500
    patience: int = 20

    def __post_init__(self):
        if self.max_depth < 1 or self.num_leaves < 2:
            raise InvalidConfig("trees need depth >= 1 and at least 2 leaves")
        if not 0.0 < self.shrinkage <= 1.0:
            raise InvalidConfig(f"shrinkage must be in (0, 1], got {self.shrinkage}")
        if self.min_samples_leaf < 1 or self.max_rounds < 1 or self.patience < 1:
            raise InvalidConfig("min_samples_leaf, max_rounds and patience must be >= 1")


@dataclass
class TreeEnsemble:
    base_score: float
    trees: list[TreeNode]
    learning_rate: float
    n_features: int
    feature_names: list[str] | None = None
    # run metadata; informative only, not persisted
    val_mse_history: list[float] | None = field(default=None, compare=False)
    rounds_run: int | None = field(default=None, compare=False)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise FeatureCountMismatch(
                f"model expects {self.n_features} features, got input shape {X.shape}"
            )
        out = np.full(len(X), self.base_score)
        for tree in self.trees:
            out += self.learning_rate * tree.predict(X)
        return out


def _sse(values: np.ndarray) -> float:
    return float(np.sum(values * values) - values.sum() ** 2 / len(values))


def _best_split(
    X: np.ndarray, residual: np.ndarray, rows: np.ndarray, min_leaf: int
) -> tuple[float, int, float] | None:
    """Highest-gain (feature, threshold) over a node's rows, or None."""
    m = len(rows)
    if m < 2 * min_leaf:
        return None
    r = residual[rows]
    parent_sse = _sse(r)
    best_gain = 0.0
    best: tuple[float, int, float] | None = None
    for f in range(X.shape[1]):
        v = X[rows, f]
        order = np.argsort(v, kind="stable")
        vs = v[order]
        rs = r[order]
        left_n = np.arange(1, m)
        valid = (vs[1:] != vs[:-1]) & (left_n >= min_leaf) & (m - left_n >= min_leaf)
        if not valid.any():
            continue
        cs = np.cumsum(rs)
        cq = np.cumsum(rs * rs)
        sse_l = cq[:-1] - cs[:-1] ** 2 / left_n
        sse_r = (cq[-1] - cq[:-1]) - (cs[-1] - cs[:-1]) ** 2 / (m - left_n)
        gain = np.where(valid, parent_sse - sse_l - sse_r, -np.inf)
        j = int(np.argmax(gain))  # first max: lowest threshold wins ties
        if gain[j] > best_gain:
            best_gain = float(gain[j])
            best = (best_gain, f, float((vs[j] + vs[j + 1]) / 2.0))
    return best


def _grow_tree(X: np.ndarray, residual: np.ndarray, params: GbdtParams) -> TreeNode:
    """Level-order growth under depth, leaf-count and leaf-size limits."""
    root = TreeNode(cover=len(X))
    n_leaves = 1
    queue: deque[tuple[TreeNode, np.ndarray, int]] = deque(
        [(root, np.arange(len(X)), 0)]
    )
    while queue:
        node, rows, depth = queue.popleft()
        split = None
        if depth < params.max_depth and n_leaves < params.num_leaves:
            split = _best_split(X, residual, rows, params.min_samples_leaf)
        if split is None:
            node.value = float(residual[rows].mean())
            continue
        _, f, thr = split
        go_left = X[rows, f] <= thr
        node.feature = f
        node.threshold = thr
        node.left = TreeNode(cover=int(go_left.sum()))
        node.right = TreeNode(cover=int(rows.size - go_left.sum()))
        n_leaves += 1
        queue.append((node.left, rows[go_left], depth + 1))
        queue.append((node.right, rows[~go_left], depth + 1))
    return root


def gbdt_train(
    X: np.ndarray,
    y: np.ndarray,
    X_val: np.ndarray | None = None,
    y_val: np.ndarray | None = None,
    params: GbdtParams | None = None,
    feature_names: list[str] | None = None,
) -> TreeEnsemble:
    """Boosted training with optional validation-based early stopping.

    When a validation set is supplied, validation MSE is tracked per round
    starting with the constant base-score model at round 0. Training stops
    once ``patience`` rounds pass without a new best, and the ensemble is
    truncated to the round with the lowest validation MSE (first such round
    on ties), so len(trees) equals the argmin of ``val_mse_history``.
    ``rounds_run`` records how many trees were fit before truncation.

    A constant target is not an error: it yields a tree-free ensemble whose
    base score is that constant.
    """
    params = params or GbdtParams()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2 or len(X) != len(y):
        raise EmptyInput(f"bad training shapes X={X.shape}, y={y.shape}")
    if len(y) == 0:
        raise EmptyInput("cannot train on zero samples")
    has_val = X_val is not None and y_val is not None
    if has_val:
        X_val = np.asarray(X_val, dtype=float)
        y_val = np.asarray(y_val, dtype=float).ravel()
        if X_val.shape[1] != X.shape[1] or len(X_val) != len(y_val):
            raise EmptyInput(f"bad validation shapes X={X_val.shape}, y={y_val.shape}")

    base = float(y.mean())
    ensemble = TreeEnsemble(
        base_score=base,
        trees=[],
        learning_rate=params.shrinkage,
        n_features=X.shape[1],
        feature_names=list(feature_names) if feature_names else None,
    )
    if np.ptp(y) == 0.0:
        ensemble.rounds_run = 0
        if has_val:
            ensemble.val_mse_history = [float(np.mean((y_val - base) ** 2))]
        return ensemble

    pred = np.full(len(y), base)
    pred_val = np.full(len(y_val), base) if has_val else None
    history: list[float] = []
    best_idx = 0
    if has_val:
        history.append(float(np.mean((y_val - pred_val) ** 2)))

    trees: list[TreeNode] = []
    for _ in range(params.max_rounds):
        residual = y - pred
        if np.max(np.abs(residual)) == 0.0:
            break
        tree = _grow_tree(X, residual, params)
        trees.append(tree)
        pred += params.shrinkage * tree.predict(X)
        if has_val:
            pred_val += params.shrinkage * tree.predict(X_val)
            history.append(float(np.mean((y_val - pred_val) ** 2)))
            if history[-1] < history[best_idx]:
                best_idx = len(history) - 1
            elif len(history) - 1 - best_idx >= params.patience:
                break

    ensemble.rounds_run = len(trees)
    if has_val:
        ensemble.trees = trees[:best_idx]  # history index k <-> k trees kept
        ensemble.val_mse_history = history
    else:
        ensemble.trees = trees
    return ensemble


def gbdt_predict(ensemble: TreeEnsemble, X: np.ndarray) -> np.ndarray:
    return ensemble.predict(X)


# --- persistence -----------------------------------------------------------


def _node_to_dict(node: TreeNode) -> dict:
    if node.is_leaf:
        return {"leaf_value": node.value, "cover": node.cover}
    return {
        "feature_index": node.feature,
        "threshold": node.threshold,
        "cover": node.cover,
        "left": _node_to_dict(node.left),
        "right": _node_to_dict(node.right),
    }


def _node_from_dict(d: dict) -> TreeNode:
    if "leaf_value" in d:
        return TreeNode(cover=int(d["cover"]), value=float(d["leaf_value"]))
    return TreeNode(
        cover=int(d["cover"]),
        feature=int(d["feature_index"]),
        threshold=float(d["threshold"]),
        left=_node_from_dict(d["left"]),
        right=_node_from_dict(d["right"]),
    )


def save_ensemble(ensemble: TreeEnsemble, path: str | Path) -> None:
    doc = {
        "base_score": ensemble.base_score,
        "learning_rate": ensemble.learning_rate,
        "n_features": ensemble.n_features,
        "feature_names": ensemble.feature_names,
        "trees": [_node_to_dict(t) for t in ensemble.trees],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def load_ensemble(path: str | Path) -> TreeEnsemble:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return TreeEnsemble(
        base_score=float(doc["base_score"]),
        trees=[_node_from_dict(t) for t in doc["trees"]],
        learning_rate=float(doc["learning_rate"]),
        n_features=int(doc["n_features"]),
        feature_names=doc.get("feature_names"),
    )
