"""Shapley attribution for the tree ensemble.

Two routes to the same quantity. :func:`tree_shap` runs the polynomial
EXTEND/UNWIND recursion per tree with the path-dependent conditional
expectation (features absent from a coalition are marginalised by
descending both children weighted by training-cover fractions), then sums
trees. :func:`shap_brute_force` enumerates every coalition of the features
the ensemble actually uses and applies the Shapley formula

    phi_i = sum_{S subset F minus i} |S|! (|F|-|S|-1)! / |F|! * (f(S+i) - f(S))

with f defined by the same cover-weighted traversal, so the two
implementations are interchangeable oracles for each other.

The fast route is vectorised across rows: the visit order, path features
and zero fractions depend only on the tree, so one depth-first walk
carries per-row one-fraction and weight arrays for every explained row at
once.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .boosting import TreeEnsemble, TreeNode
from .errors import (
    FeatureCountMismatch,
    IndexOutOfRange,
    TooManyFeatures,
    ZeroCover,
)

MAX_BRUTE_FEATURES = 15


def _check_covers(node: TreeNode) -> None:
    if node.cover <= 0:
        raise ZeroCover(f"node has cover {node.cover}; attribution needs cover > 0")
    if not node.is_leaf:
        _check_covers(node.left)
        _check_covers(node.right)


def _expected_value(node: TreeNode) -> float:
    """Cover-weighted mean leaf value: the tree's output on no information."""
    if node.is_leaf:
        return node.value
    return (
        node.left.cover * _expected_value(node.left)
        + node.right.cover * _expected_value(node.right)
    ) / node.cover


def ensemble_base_value(ensemble: TreeEnsemble) -> float:
    for t in ensemble.trees:
        _check_covers(t)
    return ensemble.base_score + ensemble.learning_rate * sum(
        _expected_value(t) for t in ensemble.trees
    )


# --- polynomial TreeSHAP -----------------------------------------------------


def _extend(D, Z, O, W, pz, po, pi):
    """Append a path element and redistribute subset weights."""
    n_rows, length = W.shape
    D2 = D + [pi]
    Z2 = Z + [pz]
    O2 = np.concatenate([O, po[:, None]], axis=1)
    W2 = np.concatenate([W, np.zeros((n_rows, 1))], axis=1)
    if length == 0:
        W2[:, 0] = 1.0
    for i in range(length - 1, -1, -1):
        W2[:, i + 1] += po * W2[:, i] * (i + 1) / (length + 1)
        W2[:, i] *= pz * (length - i) / (length + 1)
    return D2, Z2, O2, W2


def _unwind_weights(Z, O, W, k):
    """Weights of the path with element k removed (inverse of _extend)."""
    length = W.shape[1]
    one = O[:, k]
    zero = Z[k]
    has_one = one != 0.0
    safe_one = np.where(has_one, one, 1.0)
    n = W[:, length - 1].copy()
    out = W[:, : length - 1].copy()
    for j in range(length - 2, -1, -1):
        t = out[:, j].copy()
        w_hot = n * length / ((j + 1) * safe_one)
        w_cold = out[:, j] * length / (zero * (length - 1 - j))
        out[:, j] = np.where(has_one, w_hot, w_cold)
        n = np.where(has_one, t - out[:, j] * zero * (length - 1 - j) / length, n)
    return out


def _tree_shap_batch(root: TreeNode, X: np.ndarray, phi: np.ndarray, scale: float):
    """Accumulate scale * per-tree SHAP values for all rows into phi."""
    n_rows = len(X)

    def recurse(node, D, Z, O, W, pz, po, pi):
        D, Z, O, W = _extend(D, Z, O, W, pz, po, pi)
        if node.is_leaf:
            for i in range(1, len(D)):
                w_sum = _unwind_weights(Z, O, W, i).sum(axis=1)
                phi[:, D[i]] += scale * w_sum * (O[:, i] - Z[i]) * node.value
            return
        feat = node.feature
        goes_left = X[:, feat] <= node.threshold
        iz = 1.0
        io = np.ones(n_rows)
        if feat in D:
            k = D.index(feat)
            iz = Z[k]
            io = O[:, k].copy()
            W = _unwind_weights(Z, O, W, k)
            D = D[:k] + D[k + 1:]
            Z = Z[:k] + Z[k + 1:]
            O = np.delete(O, k, axis=1)
        ratio_l = node.left.cover / node.cover
        ratio_r = node.right.cover / node.cover
        recurse(node.left, D, Z, O, W,
                iz * ratio_l, np.where(goes_left, io, 0.0), feat)
        recurse(node.right, D, Z, O, W,
                iz * ratio_r, np.where(goes_left, 0.0, io), feat)

    recurse(root, [], [], np.zeros((n_rows, 0)), np.zeros((n_rows, 0)),
            1.0, np.ones(n_rows), -1)


def tree_shap_batch(ensemble: TreeEnsemble, X: np.ndarray) -> tuple[float, np.ndarray]:
    """(base_value, K x n_features phi matrix) for many rows at once."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != ensemble.n_features:
        raise FeatureCountMismatch(
            f"model expects {ensemble.n_features} features, got input shape {X.shape}"
        )
    base = ensemble_base_value(ensemble)
    phi = np.zeros((len(X), ensemble.n_features))
    for tree in ensemble.trees:
        _tree_shap_batch(tree, X, phi, ensemble.learning_rate)
    return base, phi


def tree_shap(ensemble: TreeEnsemble, row: np.ndarray) -> tuple[float, np.ndarray]:
    """Exact path-dependent SHAP values for one row."""
    row = np.asarray(row, dtype=float).ravel()
    base, phi = tree_shap_batch(ensemble, row[None, :])
    return base, phi[0]


# --- brute-force oracle -------------------------------------------------------


def _tree_coalition_value(node: TreeNode, row: np.ndarray, known: frozenset) -> float:
    """f_x(S) on one tree: follow known features, average out the rest."""
    if node.is_leaf:
        return node.value
    if node.feature in known:
        child = node.left if row[node.feature] <= node.threshold else node.right
        return _tree_coalition_value(child, row, known)
    return (
        node.left.cover * _tree_coalition_value(node.left, row, known)
        + node.right.cover * _tree_coalition_value(node.right, row, known)
    ) / node.cover


def _used_features(node: TreeNode, out: set) -> None:
    if not node.is_leaf:
        out.add(node.feature)
        _used_features(node.left, out)
        _used_features(node.right, out)


def coalition_value(ensemble: TreeEnsemble, row: np.ndarray, known) -> float:
    """Path-dependent expectation of the ensemble given known features."""
    known = frozenset(known)
    for t in ensemble.trees:
        _check_covers(t)
    return ensemble.base_score + ensemble.learning_rate * sum(
        _tree_coalition_value(t, row, known) for t in ensemble.trees
    )


def shap_brute_force(ensemble: TreeEnsemble, row: np.ndarray) -> np.ndarray:
    """Exponential-enumeration Shapley values; features unused by every
    tree get exactly zero."""
    row = np.asarray(row, dtype=float).ravel()
    if len(row) != ensemble.n_features:
        raise FeatureCountMismatch(
            f"model expects {ensemble.n_features} features, got {len(row)}"
        )
    active: set[int] = set()
    for t in ensemble.trees:
        _check_covers(t)
        _used_features(t, active)
    if len(active) > MAX_BRUTE_FEATURES:
        raise TooManyFeatures(
            f"{len(active)} active features; brute force caps at {MAX_BRUTE_FEATURES}"
        )
    features = sorted(active)
    n = len(features)
    phi = np.zeros(ensemble.n_features)
    if n == 0:
        return phi

    # value of every coalition, indexed by bitmask over `features`
    values = np.empty(2**n)
    for mask in range(2**n):
        known = frozenset(features[j] for j in range(n) if mask >> j & 1)
        values[mask] = ensemble.base_score + ensemble.learning_rate * sum(
            _tree_coalition_value(t, row, known) for t in ensemble.trees
        )

    fact = [math.factorial(k) for k in range(n + 1)]
    denom = fact[n]
    for j, feat in enumerate(features):
        bit = 1 << j
        total = 0.0
        for mask in range(2**n):
            if mask & bit:
                continue
            s = bin(mask).count("1")
            weight = fact[s] * fact[n - s - 1] / denom
            total += weight * (values[mask | bit] - values[mask])
        phi[feat] = total
    return phi


# --- reports ------------------------------------------------------------------


@dataclass
class ShapReport:
    base_value: float
    phi: np.ndarray  # (K, n_features)
    sample_rows: np.ndarray  # (K, n_features)
    feature_names: list[str]
    row_indices: np.ndarray  # (K,) positions in the explained dataset

    @property
    def k(self) -> int:
        return len(self.phi)


def explain_rows(
    ensemble: TreeEnsemble,
    X: np.ndarray,
    k: int | None = None,
    seed: int = 42,
    feature_names: list[str] | None = None,
) -> ShapReport:
    """SHAP attribution for a seeded sample of rows (default min(N, 10000))."""
    X = np.asarray(X, dtype=float)
    n = len(X)
    if k is None:
        k = min(n, 10000)
    k = min(k, n)
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(n, size=k, replace=False))
    rows = X[idx]
    base, phi = tree_shap_batch(ensemble, rows)
    if feature_names is None:
        feature_names = ensemble.feature_names or [
            f"f{j}" for j in range(ensemble.n_features)
        ]
    return ShapReport(
        base_value=base,
        phi=phi,
        sample_rows=rows,
        feature_names=list(feature_names),
        row_indices=idx,
    )


def shap_summary(report: ShapReport) -> list[dict]:
    """Features ranked by mean |phi| descending (stable on ties), each with
    its per-sample (phi, feature value) scatter data."""
    mean_abs = np.mean(np.abs(report.phi), axis=0)
    order = sorted(range(len(report.feature_names)), key=lambda j: (-mean_abs[j], j))
    return [
        {
            "feature": report.feature_names[j],
            "mean_abs_phi": float(mean_abs[j]),
            "phi": report.phi[:, j].tolist(),
            "feature_values": report.sample_rows[:, j].tolist(),
        }
        for j in order
    ]


def force_decomposition(report: ShapReport, row_index: int) -> dict:
    """Per-feature push summary for one explained row."""
    if not 0 <= row_index < report.k:
        raise IndexOutOfRange(
            f"row {row_index} out of range for {report.k} explained rows"
        )
    phi = report.phi[row_index]
    row = report.sample_rows[row_index]
    order = sorted(range(len(phi)), key=lambda j: (-abs(phi[j]), j))
    contributions = [
        {
            "feature": report.feature_names[j],
            "value": float(row[j]),
            "phi": float(phi[j]),
            "direction": "increase" if phi[j] > 0 else
                         "decrease" if phi[j] < 0 else "none",
        }
        for j in order
    ]
    return {
        "base_value": report.base_value,
        "prediction": float(report.base_value + phi.sum()),
        "contributions": contributions,
    }


def save_report(report: ShapReport, out_dir: str | Path) -> None:
    """shap.json metadata plus phi and sampled-row CSVs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "base_value": report.base_value,
        "feature_names": report.feature_names,
        "k": report.k,
        "row_indices": [int(i) for i in report.row_indices],
    }
    (out / "shap.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    header = ",".join(report.feature_names)
    for name, arr in (("shap_phi.csv", report.phi), ("shap_rows.csv", report.sample_rows)):
        lines = [header]
        lines += [",".join(f"{v:.9f}" for v in r) for r in arr]
        (out / name).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_report(out_dir: str | Path) -> ShapReport:
    out = Path(out_dir)
    meta = json.loads((out / "shap.json").read_text(encoding="utf-8"))

    def read_csv(path: Path) -> np.ndarray:
        lines = path.read_text(encoding="utf-8").strip().split("\n")
        return np.array(
            [[float(v) for v in line.split(",")] for line in lines[1:]]
        ).reshape(len(lines) - 1, -1)

    phi = read_csv(out / "shap_phi.csv")
    rows = read_csv(out / "shap_rows.csv")
    return ShapReport(
        base_value=float(meta["base_value"]),
        phi=phi,
        sample_rows=rows,
        feature_names=list(meta["feature_names"]),
        row_indices=np.asarray(meta["row_indices"], dtype=np.int64),
    )
