"""Forecast quality metrics, binned error summaries and heatmap rendering.

Conventions used throughout:

* residual = prediction - truth, so overestimates are positive;
* RMSE is defined as sqrt(MSE) and both are computed from the same sum of
  squares in one pass, which keeps the identity rmse**2 == mse exact up to
  float rounding;
* R^2 = 1 - SS_res/SS_tot is *not* clamped, so a model worse than the mean
  predictor reports a negative score rather than a hidden failure;
* quantiles interpolate linearly between order statistics;
* box whiskers extend to the furthest residual within 1.5 IQR of the
  quartiles, everything beyond is listed as an outlier.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyInput, LengthMismatch, SpecMismatch, ZeroVariance
from .grid import DisplacementMap


def _paired(y_true, y_pred) -> tuple[np.ndarray, np.ndarray]:
    y_true = np.asarray(y_true, dtype=float).ravel()
    y_pred = np.asarray(y_pred, dtype=float).ravel()
    if y_true.size != y_pred.size:
        raise LengthMismatch(
            f"got {y_true.size} truth values but {y_pred.size} predictions"
        )
    if y_true.size == 0:
        raise EmptyInput("cannot score zero samples")
    return y_true, y_pred


def mse(y_true, y_pred) -> float:
    y_true, y_pred = _paired(y_true, y_pred)
    return float(np.mean((y_pred - y_true) ** 2))


def rmse(y_true, y_pred) -> float:
    return float(np.sqrt(mse(y_true, y_pred)))


def r2(y_true, y_pred) -> float:
    y_true, y_pred = _paired(y_true, y_pred)
    ss_tot = float(np.sum((y_true - y_true.mean()) ** 2))
    if ss_tot == 0.0:
        raise ZeroVariance("target is constant; R^2 is undefined")
    ss_res = float(np.sum((y_pred - y_true) ** 2))
    return 1.0 - ss_res / ss_tot


def residuals(y_true, y_pred) -> np.ndarray:
    """Signed errors, prediction minus truth."""
    y_true, y_pred = _paired(y_true, y_pred)
    return y_pred - y_true


@dataclass
class MetricsRecord:
    """Headline scores for one model on one sample set."""

    model: str
    n_samples: int
    mse: float
    rmse: float
    r2: float

    def to_dict(self) -> dict:
        return asdict(self)


def compute_metrics(model: str, y_true, y_pred) -> MetricsRecord:
    y_true, y_pred = _paired(y_true, y_pred)
    m = float(np.mean((y_pred - y_true) ** 2))
    return MetricsRecord(
        model=model,
        n_samples=int(y_true.size),
        mse=m,
        rmse=float(np.sqrt(m)),
        r2=r2(y_true, y_pred),
    )


# --- binned summaries -------------------------------------------------------


@dataclass
class BinStats:
    """Summary of the residuals whose true values fall in one bin."""

    count: int
    mae: float | None = None
    median: float | None = None
    q1: float | None = None
    q3: float | None = None
    whisker_low: float | None = None
    whisker_high: float | None = None
    outliers: list[float] | None = None


@dataclass
class BinnedStats:
    """Per-bin error summaries over equal-width truth bins.

    Bins split [min(y), max(y)] evenly; every bin is half-open on the right
    except the last, which also takes the maximum. Empty bins carry count 0
    and no statistics.
    """

    bin_edges: list[float]
    bins: list[BinStats]

    @property
    def n_bins(self) -> int:
        return len(self.bins)

    @property
    def counts(self) -> list[int]:
        return [b.count for b in self.bins]

    def to_dict(self) -> dict:
        return {"bin_edges": self.bin_edges, "bins": [asdict(b) for b in self.bins]}


def box_stats(sample) -> dict:
    """Median, quartiles, Tukey whiskers and outliers of one sample."""
    sample = np.asarray(sample, dtype=float).ravel()
    if sample.size == 0:
        raise EmptyInput("cannot summarise an empty sample")
    q1, med, q3 = np.quantile(sample, [0.25, 0.5, 0.75])
    iqr = q3 - q1
    lo_fence = q1 - 1.5 * iqr
    hi_fence = q3 + 1.5 * iqr
    inside = sample[(sample >= lo_fence) & (sample <= hi_fence)]
    outliers = np.sort(sample[(sample < lo_fence) | (sample > hi_fence)])
    return {
        "median": float(med),
        "q1": float(q1),
        "q3": float(q3),
        "whisker_low": float(inside.min()),
        "whisker_high": float(inside.max()),
        "outliers": [float(v) for v in outliers],
    }


def bin_indices(y_true: np.ndarray, n_bins: int) -> tuple[np.ndarray, np.ndarray]:
    """Assign each truth value to one of n_bins equal-width bins."""
    if n_bins < 1:
        raise EmptyInput(f"need at least one bin, got {n_bins}")
    lo = float(y_true.min())
    hi = float(y_true.max())
    edges = np.linspace(lo, hi, n_bins + 1)
    if hi == lo:
        idx = np.full(y_true.shape, n_bins - 1, dtype=int)
        return idx, edges
    idx = np.floor((y_true - lo) / (hi - lo) * n_bins).astype(int)
    return np.clip(idx, 0, n_bins - 1), edges


def binned_stats(y_true, y_pred, n_bins: int = 10) -> BinnedStats:
    """MAE plus residual box statistics per truth-value bin."""
    y_true, y_pred = _paired(y_true, y_pred)
    res = y_pred - y_true
    idx, edges = bin_indices(y_true, n_bins)
    bins: list[BinStats] = []
    for b in range(n_bins):
        sel = res[idx == b]
        if sel.size == 0:
            bins.append(BinStats(count=0))
        else:
            bins.append(BinStats(
                count=int(sel.size),
                mae=float(np.mean(np.abs(sel))),
                **box_stats(sel),
            ))
    return BinnedStats(bin_edges=[float(e) for e in edges], bins=bins)


def binned_mae(y_true, y_pred, n_bins: int = 10) -> BinnedStats:
    """Equal-width-binned mean absolute error (box fields along for free)."""
    return binned_stats(y_true, y_pred, n_bins)


def binned_residual_boxstats(y_true, y_pred, n_bins: int = 10) -> BinnedStats:
    """Per-bin residual quartile/whisker/outlier statistics."""
    return binned_stats(y_true, y_pred, n_bins)


# --- heatmaps ---------------------------------------------------------------


def _as_field(values) -> np.ndarray:
    if isinstance(values, DisplacementMap):
        values = values.values
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 2 or arr.size == 0:
        raise EmptyInput(f"expected a non-empty 2-D field, got shape {arr.shape}")
    return arr


def render_heatmap(values, vmax: float | None = None) -> bytes:
    """Render a field as a binary P6 PPM with a diverging palette.

    Zero maps to white, +vmax to pure red (255,0,0), -vmax to pure blue
    (0,0,255); values beyond the range clamp to the endpoints. With vmax
    unset the symmetric range max(|values|) is used. Row 0 of the array
    becomes the top image row (north-up). The bytes are a pure function of
    (values, vmax), which makes the artefact diffable.
    """
    arr = _as_field(values)
    if vmax is None:
        vmax = float(np.max(np.abs(arr)))
    if vmax <= 0.0:
        scaled = np.zeros_like(arr)
    else:
        scaled = np.clip(arr / vmax, -1.0, 1.0)
    h, w = arr.shape
    rgb = np.empty((h, w, 3), dtype=np.uint8)
    fade = np.rint(255.0 * (1.0 - np.abs(scaled))).astype(np.uint8)
    pos = scaled >= 0
    rgb[..., 0] = np.where(pos, 255, fade)  # red channel
    rgb[..., 1] = fade
    rgb[..., 2] = np.where(pos, fade, 255)  # blue channel
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    return header + rgb.tobytes()


def write_heatmap(values, path: str | Path, vmax: float | None = None) -> None:
    Path(path).write_bytes(render_heatmap(values, vmax))


# --- report artefacts -------------------------------------------------------


def write_scatter_csv(path: str | Path, y_true, y_pred) -> None:
    """Two-column truth,prediction CSV with stable 9-decimal formatting."""
    y_true, y_pred = _paired(y_true, y_pred)
    lines = ["truth,prediction"]
    lines += [f"{t:.9f},{p:.9f}" for t, p in zip(y_true, y_pred)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_residuals_csv(path: str | Path, y_true, y_pred) -> None:
    y_true, y_pred = _paired(y_true, y_pred)
    lines = ["truth,residual"]
    lines += [f"{t:.9f},{r:.9f}" for t, r in zip(y_true, y_pred - y_true)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def build_report(
    true_map,
    predictions: dict,
    out_dir: str | Path,
    n_bins: int = 10,
    heatmap_range: float | None = None,
    val_pixels: np.ndarray | None = None,
    extra: dict | None = None,
) -> dict:
    """Write the delimited evaluation artefacts for one run.

    ``predictions`` maps model names to predicted H x W maps sharing the
    truth map's shape; models are reported in input order. When
    ``val_pixels`` (flattened row-major pixel ids) is given, each model
    additionally gets validation-only metrics over those pixels. Returns
    the dictionary serialised to metrics.json.

    Layout: metrics.json, scatter_<model>.csv, residuals_<model>.csv,
    bins_<model>.json, heatmap_{truth,<model>,diff_<model>}.ppm.
    """
    truth = _as_field(true_map)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    y_true = truth.ravel()
    metrics: dict = dict(extra) if extra else {}
    metrics["models"] = {}
    if heatmap_range is None:
        heatmap_range = float(np.max(np.abs(truth)))
    write_heatmap(truth, out / "heatmap_truth.ppm", vmax=heatmap_range)
    for name, pred_map in predictions.items():
        if pred_map is None:
            raise SpecMismatch(f"model {name!r} has no prediction map")
        pred = _as_field(pred_map)
        if pred.shape != truth.shape:
            raise SpecMismatch(
                f"model {name!r} map shape {pred.shape} does not match "
                f"truth {truth.shape}"
            )
        y_pred = pred.ravel()
        entry = {"full": compute_metrics(name, y_true, y_pred).to_dict()}
        if val_pixels is not None:
            entry["validation"] = compute_metrics(
                name, y_true[val_pixels], y_pred[val_pixels]
            ).to_dict()
        metrics["models"][name] = entry
        write_scatter_csv(out / f"scatter_{name}.csv", y_true, y_pred)
        write_residuals_csv(out / f"residuals_{name}.csv", y_true, y_pred)
        bins = binned_stats(y_true, y_pred, n_bins=n_bins)
        (out / f"bins_{name}.json").write_text(
            json.dumps(bins.to_dict(), indent=2) + "\n", encoding="utf-8"
        )
        write_heatmap(pred, out / f"heatmap_{name}.ppm", vmax=heatmap_range)
        write_heatmap(pred - truth, out / f"heatmap_diff_{name}.ppm")
    (out / "metrics.json").write_text(
        json.dumps(metrics, indent=2) + "\n", encoding="utf-8"
    )
    return metrics
