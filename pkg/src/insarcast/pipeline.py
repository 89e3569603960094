"""End-to-end orchestration: source -> grid -> models -> report -> SHAP.

Each stage is a plain function over explicit artefacts so the CLI can run
them individually; :func:`run_pipeline` chains them in memory and writes
every artefact under the configured output directory. Failures are
re-raised tagged with the stage name, which the CLI turns into its exit-1
diagnostic.

Artefact layout (all under output_dir):
  points.csv                      scene source written by the synth stage
  tensor.bin / tensor.bin.json    interpolated stack and sidecar
  cnn_lstm.ckpt, nn_history.json  neural checkpoint and loss curve
  gbdt.json, lasso.json           tabular models
  pred_<model>.csv                predicted maps, one CSV row per grid row
  metrics.json, scatter_*, residuals_*, bins_*, heatmap_*  (see evaluate)
  shap.json, shap_phi.csv, shap_rows.csv                   (see shapley)
  fig_*.png                       matplotlib renderings
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import boosting, cnn_lstm, figures, lasso, shapley
from .errors import InsarcastError, InvalidConfig
from .evaluate import build_report
from .grid import (
    GridInterpolator,
    SpatioTemporalTensor,
    assemble_tensor,
    build_grid_spec,
    fill_missing,
    load_tensor,
    save_tensor,
)
from .ingest import PointSet, parse_csv, write_csv
from .runconfig import RunConfig
from .synth import generate_scene
from .tabular import TabularDataset, predictions_to_map, split_train_val, windowed_table

MODEL_NAMES = ("cnn_lstm", "gbdt", "lasso")


class StageFailure(InsarcastError):
    """An identified pipeline stage failed; wraps the original error."""

    def __init__(self, stage: str, original: Exception):
        super().__init__(f"stage {stage}: {original}")
        self.stage = stage
        self.original = original


class _Stage:
    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, StageFailure):
            raise StageFailure(self.name, exc) from exc
        return False


# --- individual stages -------------------------------------------------------


def stage_source(cfg: RunConfig) -> PointSet:
    """Load the input CSV or generate (and persist) the synthetic scene."""
    out = Path(cfg.output_dir)
    if cfg.input_csv is not None:
        return parse_csv(cfg.input_csv)
    points, _ = generate_scene(cfg.scene)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(points, out / "points.csv")
    return points


def stage_grid(cfg: RunConfig, points: PointSet) -> SpatioTemporalTensor:
    """Interpolate every epoch up to the target onto the grid and stack."""
    cfg.window.validate(points.n_epochs)
    spec = build_grid_spec(points, cfg.grid_height, cfg.grid_width)
    interp = GridInterpolator(points.coordinates(), spec)
    maps = []
    for epoch in range(cfg.window.target_index + 1):
        raw = interp.interpolate(points.values_at(epoch), epoch_index=epoch)
        maps.append(fill_missing(raw))
    tensor = assemble_tensor(maps)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_tensor(tensor, out / "tensor.bin",
                epoch_labels=points.epoch_labels[: cfg.window.target_index + 1])
    return tensor


def load_pipeline_tensor(cfg: RunConfig) -> SpatioTemporalTensor:
    tensor_path = Path(cfg.output_dir) / "tensor.bin"
    if not tensor_path.exists():
        raise InvalidConfig(
            f"no tensor at {tensor_path}; run the grid stage first"
        )
    tensor, _ = load_tensor(tensor_path)
    return tensor


def _window_arrays(cfg: RunConfig, tensor: SpatioTemporalTensor):
    arr = tensor.as_array()
    w = cfg.window
    frames = arr[w.input_start: w.input_start + w.input_len]
    target = arr[w.target_index]
    return frames, target


def stage_train_nn(cfg: RunConfig, tensor: SpatioTemporalTensor):
    frames, target = _window_arrays(cfg, tensor)
    params, history = cnn_lstm.train(cfg.cnn_lstm, frames, target)
    out = Path(cfg.output_dir)
    cnn_lstm.save_checkpoint(params, out / "cnn_lstm.ckpt")
    (out / "nn_history.json").write_text(
        json.dumps({"loss": history.loss}, indent=2) + "\n", encoding="utf-8"
    )
    return params, history


def stage_tabular(cfg: RunConfig, tensor: SpatioTemporalTensor):
    table = windowed_table(tensor, cfg.window)
    train_ds, val_ds = split_train_val(table, cfg.val_fraction, cfg.split_seed)
    return table, train_ds, val_ds


def stage_train_gbdt(cfg: RunConfig, table: TabularDataset,
                     train_ds: TabularDataset, val_ds: TabularDataset):
    ensemble = boosting.gbdt_train(
        train_ds.X, train_ds.y, val_ds.X, val_ds.y,
        params=cfg.gbdt, feature_names=table.feature_names,
    )
    boosting.save_ensemble(ensemble, Path(cfg.output_dir) / "gbdt.json")
    return ensemble


def stage_train_lasso(cfg: RunConfig, table: TabularDataset,
                      train_ds: TabularDataset):
    model = lasso.lasso_train(
        train_ds.X, train_ds.y, params=cfg.lasso,
        feature_names=table.feature_names,
    )
    lasso.save_linear(model, Path(cfg.output_dir) / "lasso.json")
    return model


def write_map_csv(values: np.ndarray, path: str | Path) -> None:
    lines = [",".join(f"{v:.9f}" for v in row) for row in np.asarray(values)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_map_csv(path: str | Path) -> np.ndarray:
    lines = Path(path).read_text(encoding="utf-8").strip().split("\n")
    return np.array([[float(v) for v in line.split(",")] for line in lines])


def stage_predict(cfg: RunConfig, tensor: SpatioTemporalTensor, table: TabularDataset,
                  nn_params=None, gbdt_model=None, lasso_model=None) -> dict[str, np.ndarray]:
    """Predicted maps per enabled model, persisted as pred_<model>.csv."""
    frames, _ = _window_arrays(cfg, tensor)
    out = Path(cfg.output_dir)
    predictions: dict[str, np.ndarray] = {}
    if cfg.enabled.cnn_lstm:
        if nn_params is None:
            nn_params = cnn_lstm.load_checkpoint(out / "cnn_lstm.ckpt")
        predictions["cnn_lstm"] = cnn_lstm.forward(nn_params, frames)
    if cfg.enabled.gbdt:
        if gbdt_model is None:
            gbdt_model = boosting.load_ensemble(out / "gbdt.json")
        predictions["gbdt"] = predictions_to_map(table, gbdt_model.predict(table.X))
    if cfg.enabled.lasso:
        if lasso_model is None:
            lasso_model = lasso.load_linear(out / "lasso.json")
        predictions["lasso"] = predictions_to_map(table, lasso_model.predict(table.X))
    for name, pred in predictions.items():
        write_map_csv(pred, out / f"pred_{name}.csv")
    return predictions


def stage_evaluate(cfg: RunConfig, target: np.ndarray,
                   predictions: dict[str, np.ndarray],
                   val_ds: TabularDataset | None = None,
                   extra: dict | None = None) -> dict:
    """Score predictions and write the report; metrics.json always records
    the grid and window, plus whatever per-model metadata the caller adds."""
    val_pixels = val_ds.pixel_indices if val_ds is not None else None
    meta = {
        "grid": {"height": cfg.grid_height, "width": cfg.grid_width},
        "window": {
            "input_start": cfg.window.input_start,
            "input_len": cfg.window.input_len,
            "target_index": cfg.window.target_index,
        },
    }
    if extra:
        meta.update(extra)
    return build_report(
        target, predictions, cfg.output_dir,
        n_bins=cfg.n_bins, heatmap_range=cfg.heatmap_range,
        val_pixels=val_pixels, extra=meta,
    )


def stage_explain(cfg: RunConfig, table: TabularDataset, ensemble) -> shapley.ShapReport:
    report = shapley.explain_rows(
        ensemble, table.X, k=cfg.explain_k, seed=cfg.explain_seed,
        feature_names=table.feature_names,
    )
    shapley.save_report(report, cfg.output_dir)
    return report


# --- full pipeline -----------------------------------------------------------


def run_pipeline(cfg: RunConfig) -> dict:
    """Parts 1-3 end to end; returns the metrics document."""
    cfg.validate()
    with _Stage("source"):
        points = stage_source(cfg)
    with _Stage("grid"):
        tensor = stage_grid(cfg, points)
        _, target = _window_arrays(cfg, tensor)
    with _Stage("tabular"):
        table, train_ds, val_ds = stage_tabular(cfg, tensor)

    nn_params = nn_history = gbdt_model = lasso_model = None
    if cfg.enabled.cnn_lstm:
        with _Stage("train-nn"):
            nn_params, nn_history = stage_train_nn(cfg, tensor)
    if cfg.enabled.gbdt:
        with _Stage("train-gbdt"):
            gbdt_model = stage_train_gbdt(cfg, table, train_ds, val_ds)
    if cfg.enabled.lasso:
        with _Stage("train-lasso"):
            lasso_model = stage_train_lasso(cfg, table, train_ds)

    with _Stage("predict"):
        predictions = stage_predict(
            cfg, tensor, table,
            nn_params=nn_params, gbdt_model=gbdt_model, lasso_model=lasso_model,
        )

    with _Stage("evaluate"):
        extra = {}
        if gbdt_model is not None:
            extra["gbdt"] = {
                "n_trees": gbdt_model.n_trees,
                "rounds_run": gbdt_model.rounds_run,
            }
        if nn_history is not None and len(nn_history):
            extra["cnn_lstm"] = {
                "epochs": len(nn_history),
                "final_loss": nn_history.loss[-1],
            }
        metrics = stage_evaluate(cfg, target, predictions, val_ds, extra=extra)

    shap_report = None
    if cfg.enabled.gbdt:
        with _Stage("explain"):
            shap_report = stage_explain(cfg, table, gbdt_model)

    with _Stage("figures"):
        figures.render_report_figures(
            cfg.output_dir, target, predictions,
            n_bins=cfg.n_bins,
            loss_history=nn_history.loss if nn_history else None,
            shap_report=shap_report,
        )
    return metrics
