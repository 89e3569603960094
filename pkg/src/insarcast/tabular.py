"""Tabular view of the displacement tensor for the per-pixel models.

Tree and linear baselines treat every grid pixel as an independent sample
whose features are that pixel's displacement at the input epochs and whose
target is its displacement at the forecast epoch. Feature j is named by its
lag relative to the target epoch ("t-1" is the most recent input), and
``pixel_indices`` keeps the flattened row-major pixel id of each sample so
predictions can be scattered back onto the map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput, InvalidConfig, SpecMismatch
from .grid import SpatioTemporalTensor
from .ingest import WindowSelection


@dataclass
class TabularDataset:
    X: np.ndarray  # (n_samples, n_features)
    y: np.ndarray  # (n_samples,)
    feature_names: list[str]
    pixel_indices: np.ndarray  # (n_samples,) flattened row-major pixel ids
    height: int
    width: int

    def __post_init__(self):
        if self.X.ndim != 2:
            raise EmptyInput(f"X must be 2-D, got shape {self.X.shape}")
        if len(self.y) != len(self.X) or len(self.pixel_indices) != len(self.X):
            raise EmptyInput("X, y and pixel_indices must have equal length")
        if len(self.feature_names) != self.X.shape[1]:
            raise EmptyInput(
                f"{self.X.shape[1]} feature columns but "
                f"{len(self.feature_names)} names"
            )

    @property
    def n_samples(self) -> int:
        return len(self.X)

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def subset(self, idx: np.ndarray) -> "TabularDataset":
        return TabularDataset(
            X=self.X[idx],
            y=self.y[idx],
            feature_names=list(self.feature_names),
            pixel_indices=self.pixel_indices[idx],
            height=self.height,
            width=self.width,
        )


def lag_names(window: WindowSelection) -> list[str]:
    """Feature names by lag behind the target epoch, oldest first."""
    return [
        f"t-{window.target_index - (window.input_start + j)}"
        for j in range(window.input_len)
    ]


def tensor_to_table(
    tensor: SpatioTemporalTensor,
    target: np.ndarray,
    feature_names: list[str] | None = None,
) -> TabularDataset:
    """One sample per grid pixel: the tensor's steps as features, plus y.

    Row k (k = r * W + c) holds pixel (r, c)'s series; target[r, c] becomes
    y[k]. Default feature names assume the steps immediately precede the
    target epoch, newest last ("t-1").
    """
    arr = tensor.as_array()  # (T, H, W)
    t, h, w = arr.shape
    target = np.asarray(target, dtype=float)
    if target.shape != (h, w):
        raise SpecMismatch(
            f"target map shape {target.shape} does not match grid ({h}, {w})"
        )
    X = arr.reshape(t, h * w).T.copy()
    if feature_names is None:
        feature_names = [f"t-{t - j}" for j in range(t)]
    return TabularDataset(
        X=X,
        y=target.reshape(h * w).copy(),
        feature_names=feature_names,
        pixel_indices=np.arange(h * w),
        height=h,
        width=w,
    )


def windowed_table(tensor: SpatioTemporalTensor, window: WindowSelection) -> TabularDataset:
    """Slice one window out of a full tensor and tabulate it."""
    window.validate(tensor.t)
    arr = tensor.as_array()
    t, h, w = arr.shape
    stop = window.input_start + window.input_len
    X = arr[window.input_start:stop].reshape(window.input_len, h * w).T.copy()
    return TabularDataset(
        X=X,
        y=arr[window.target_index].reshape(h * w).copy(),
        feature_names=lag_names(window),
        pixel_indices=np.arange(h * w),
        height=h,
        width=w,
    )


def split_train_val(
    ds: TabularDataset, val_fraction: float = 0.2, seed: int = 42
) -> tuple[TabularDataset, TabularDataset]:
    """Random row split; the validation set takes floor(n * fraction) rows.

    With 65536 samples and fraction 0.2 the validation set holds exactly
    13107 rows. Both splits keep ascending pixel order internally so the
    split is a pure function of (n_samples, val_fraction, seed).
    """
    if not 0.0 < val_fraction < 1.0:
        raise InvalidConfig(f"val_fraction must be in (0, 1), got {val_fraction}")
    n = ds.n_samples
    n_val = int(np.floor(n * val_fraction))
    if n_val == 0 or n_val == n:
        raise InvalidConfig(
            f"val_fraction {val_fraction} leaves an empty split for {n} samples"
        )
    perm = np.random.default_rng(seed).permutation(n)
    val_idx = np.sort(perm[:n_val])
    train_idx = np.sort(perm[n_val:])
    return ds.subset(train_idx), ds.subset(val_idx)


def predictions_to_map(ds: TabularDataset, y_pred: np.ndarray) -> np.ndarray:
    """Scatter per-sample predictions back onto the (H, W) grid.

    Pixels absent from the dataset come back NaN so partial sets are
    visibly partial rather than silently zero.
    """
    y_pred = np.asarray(y_pred, dtype=float).ravel()
    if len(y_pred) != ds.n_samples:
        raise EmptyInput(
            f"got {len(y_pred)} predictions for {ds.n_samples} samples"
        )
    flat = np.full(ds.height * ds.width, np.nan)
    flat[ds.pixel_indices] = y_pred
    return flat.reshape(ds.height, ds.width)
