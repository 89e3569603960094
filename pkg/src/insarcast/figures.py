"""Matplotlib renderings of the report artefacts.

Every function writes one PNG next to the delimited data products and
returns the path. The Agg backend keeps rendering headless; figures are
closed after saving so batch runs do not accumulate state.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .evaluate import BinnedStats, binned_stats, residuals  # noqa: E402
from .shapley import ShapReport, force_decomposition, shap_summary  # noqa: E402

_DPI = 120


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=_DPI, bbox_inches="tight")
    plt.close(fig)
    return path


def fig_scatter(y_true, y_pred, path, model: str = "model") -> Path:
    """Truth vs prediction scatter with the identity line."""
    y_true = np.asarray(y_true).ravel()
    y_pred = np.asarray(y_pred).ravel()
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.scatter(y_true, y_pred, s=4, alpha=0.4, edgecolors="none")
    lo = min(y_true.min(), y_pred.min())
    hi = max(y_true.max(), y_pred.max())
    ax.plot([lo, hi], [lo, hi], "k--", linewidth=1)
    ax.set_xlabel("true displacement [mm]")
    ax.set_ylabel("predicted displacement [mm]")
    ax.set_title(f"{model}: predicted vs true")
    return _save(fig, path)


def fig_residuals(y_true, y_pred, path, model: str = "model") -> Path:
    res = residuals(y_true, y_pred)
    y_true = np.asarray(y_true).ravel()
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.scatter(y_true, res, s=4, alpha=0.4, edgecolors="none")
    ax.axhline(0.0, color="k", linewidth=1)
    ax.set_xlabel("true displacement [mm]")
    ax.set_ylabel("residual (pred - true) [mm]")
    ax.set_title(f"{model}: residuals")
    return _save(fig, path)


def _bin_centers(stats: BinnedStats) -> np.ndarray:
    edges = np.asarray(stats.bin_edges)
    return (edges[:-1] + edges[1:]) / 2.0


def fig_binned_mae(per_model: dict[str, BinnedStats], path) -> Path:
    """MAE per truth bin, one line per model."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, stats in per_model.items():
        centers = _bin_centers(stats)
        mae = [b.mae if b.count else np.nan for b in stats.bins]
        ax.plot(centers, mae, marker="o", markersize=3, label=name)
    ax.set_xlabel("true displacement bin centre [mm]")
    ax.set_ylabel("MAE [mm]")
    ax.set_title("binned mean absolute error")
    ax.legend()
    return _save(fig, path)


def fig_binned_box(stats: BinnedStats, path, model: str = "model") -> Path:
    """Residual boxplots per truth bin from precomputed statistics."""
    centers = _bin_centers(stats)
    boxes = []
    positions = []
    for c, b in zip(centers, stats.bins):
        if b.count == 0:
            continue
        boxes.append({
            "med": b.median, "q1": b.q1, "q3": b.q3,
            "whislo": b.whisker_low, "whishi": b.whisker_high,
            "fliers": b.outliers or [],
        })
        positions.append(c)
    fig, ax = plt.subplots(figsize=(7, 4))
    if boxes:
        width = (stats.bin_edges[1] - stats.bin_edges[0]) * 0.6 or 0.5
        ax.bxp(boxes, positions=positions, widths=width,
               flierprops={"markersize": 2})
    ax.axhline(0.0, color="k", linewidth=0.8, linestyle=":")
    ax.set_xlabel("true displacement bin centre [mm]")
    ax.set_ylabel("residual [mm]")
    ax.set_title(f"{model}: binned residual boxplots")
    return _save(fig, path)


def fig_map_comparison(true_map, predictions: dict, path,
                       vmax: float | None = None) -> Path:
    """Truth, prediction and difference panels with a diverging colormap."""
    truth = np.asarray(true_map, dtype=float)
    if vmax is None:
        vmax = float(np.max(np.abs(truth))) or 1.0
    names = list(predictions)
    n = len(names)
    fig, axes = plt.subplots(n, 3, figsize=(10, 3.2 * n), squeeze=False)
    for r, name in enumerate(names):
        pred = np.asarray(predictions[name], dtype=float)
        panels = [("truth", truth), (name, pred), (f"{name} - truth", pred - truth)]
        for c, (title, field) in enumerate(panels):
            ax = axes[r][c]
            im = ax.imshow(field, cmap="bwr", vmin=-vmax, vmax=vmax)
            ax.set_title(title, fontsize=9)
            ax.set_xticks([])
            ax.set_yticks([])
            fig.colorbar(im, ax=ax, fraction=0.046)
    return _save(fig, path)


def fig_training_loss(loss_history, path, model: str = "cnn_lstm") -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(np.arange(len(loss_history)), loss_history)
    ax.set_xlabel("epoch")
    ax.set_ylabel("MSE loss [mm$^2$]")
    ax.set_title(f"{model}: training loss")
    return _save(fig, path)


def fig_shap_summary(report: ShapReport, path, max_features: int = 20) -> Path:
    """Per-feature phi scatter, ranked by mean |phi|, coloured by value."""
    entries = shap_summary(report)[:max_features]
    fig, ax = plt.subplots(figsize=(7, 0.35 * len(entries) + 1.5))
    rng = np.random.default_rng(0)  # fixed jitter for readability
    for rank, entry in enumerate(reversed(entries)):
        phi = np.asarray(entry["phi"])
        vals = np.asarray(entry["feature_values"])
        spread = vals.max() - vals.min()
        colour = (vals - vals.min()) / spread if spread else np.full(len(vals), 0.5)
        ys = rank + rng.uniform(-0.25, 0.25, size=len(phi))
        ax.scatter(phi, ys, c=colour, cmap="coolwarm", s=5, alpha=0.6,
                   edgecolors="none")
    ax.set_yticks(range(len(entries)))
    ax.set_yticklabels([e["feature"] for e in reversed(entries)])
    ax.axvline(0.0, color="k", linewidth=0.8)
    ax.set_xlabel("SHAP value [mm]")
    ax.set_title("feature attribution summary")
    return _save(fig, path)


def fig_shap_force(report: ShapReport, row_index: int, path,
                   max_features: int = 15) -> Path:
    """Horizontal bars of the largest per-feature pushes for one row."""
    decomp = force_decomposition(report, row_index)
    contribs = decomp["contributions"][:max_features]
    names = [c["feature"] for c in contribs]
    phis = [c["phi"] for c in contribs]
    colours = ["#c0392b" if p > 0 else "#2980b9" for p in phis]
    fig, ax = plt.subplots(figsize=(6, 0.3 * len(contribs) + 1.5))
    ax.barh(range(len(contribs)), phis, color=colours)
    ax.set_yticks(range(len(contribs)))
    ax.set_yticklabels(names)
    ax.invert_yaxis()
    ax.axvline(0.0, color="k", linewidth=0.8)
    ax.set_xlabel("SHAP value [mm]")
    ax.set_title(
        f"row {row_index}: base {decomp['base_value']:.3f} mm "
        f"-> prediction {decomp['prediction']:.3f} mm"
    )
    return _save(fig, path)


def render_report_figures(
    out_dir: str | Path,
    true_map,
    predictions: dict,
    n_bins: int = 10,
    loss_history=None,
    shap_report: ShapReport | None = None,
) -> list[Path]:
    """All standard figures for one evaluation run; returns written paths."""
    out = Path(out_dir)
    truth = np.asarray(true_map, dtype=float)
    y_true = truth.ravel()
    written = []
    per_model_bins = {}
    for name, pred_map in predictions.items():
        y_pred = np.asarray(pred_map, dtype=float).ravel()
        written.append(fig_scatter(y_true, y_pred, out / f"fig_scatter_{name}.png", name))
        written.append(fig_residuals(y_true, y_pred, out / f"fig_residuals_{name}.png", name))
        stats = binned_stats(y_true, y_pred, n_bins=n_bins)
        per_model_bins[name] = stats
        written.append(fig_binned_box(stats, out / f"fig_binned_box_{name}.png", name))
    if per_model_bins:
        written.append(fig_binned_mae(per_model_bins, out / "fig_binned_mae.png"))
        written.append(fig_map_comparison(truth, predictions, out / "fig_maps.png"))
    if loss_history is not None and len(loss_history):
        written.append(fig_training_loss(loss_history, out / "fig_loss_cnn_lstm.png"))
    if shap_report is not None and shap_report.k:
        written.append(fig_shap_summary(shap_report, out / "fig_shap_summary.png"))
        written.append(fig_shap_force(shap_report, 0, out / "fig_shap_force.png"))
    return written
