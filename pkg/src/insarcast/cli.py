"""Command-line interface.

One JSON configuration file drives everything; ``--set key.path=value``
overrides individual keys for exploration. The ``pipeline`` subcommand
runs end to end, the stage subcommands (synth, grid, train-*, predict,
evaluate, explain) operate on the artefacts a previous stage left in the
output directory, and ``memory-study`` prints the tensor footprint table
without needing a config. Exit status is 0 on success, 1 with a
stage-naming diagnostic on failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import boosting, cnn_lstm, figures, pipeline, shapley
from .errors import InsarcastError, InvalidConfig
from .grid import estimate_memory
from .runconfig import RunConfig, apply_overrides, from_dict


def _load_config(args) -> RunConfig:
    if not args.config:
        raise InvalidConfig("this subcommand requires --config")
    try:
        doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise InvalidConfig(f"config file not found: {args.config}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"config file is not valid JSON: {exc}") from exc
    if args.set:
        doc = apply_overrides(doc, args.set)
    return from_dict(doc)


def _cmd_pipeline(args) -> int:
    cfg = _load_config(args)
    metrics = pipeline.run_pipeline(cfg)
    for name, entry in metrics["models"].items():
        full = entry["full"]
        print(
            f"{name}: rmse={full['rmse']:.6f} mse={full['mse']:.6f} "
            f"r2={full['r2']:.6f}"
        )
    print(f"report written to {cfg.output_dir}")
    return 0


def _cmd_synth(args) -> int:
    cfg = _load_config(args)
    if cfg.scene is None:
        raise InvalidConfig("synth needs a paths.scene section")
    with pipeline._Stage("source"):
        points = pipeline.stage_source(cfg)
    print(f"wrote {points.n_points} points x {points.n_epochs} epochs "
          f"to {Path(cfg.output_dir) / 'points.csv'}")
    return 0


def _cmd_grid(args) -> int:
    cfg = _load_config(args)
    with pipeline._Stage("source"):
        points = pipeline.stage_source(cfg)
    with pipeline._Stage("grid"):
        tensor = pipeline.stage_grid(cfg, points)
    print(f"tensor {tensor.t} x {cfg.grid_height} x {cfg.grid_width} "
          f"written to {Path(cfg.output_dir) / 'tensor.bin'}")
    return 0


def _cmd_train_nn(args) -> int:
    cfg = _load_config(args)
    tensor = pipeline.load_pipeline_tensor(cfg)
    with pipeline._Stage("train-nn"):
        _, history = pipeline.stage_train_nn(cfg, tensor)
    final = history.loss[-1] if history.loss else float("nan")
    print(f"trained {len(history)} epochs, final loss {final:.6g}; "
          f"checkpoint at {Path(cfg.output_dir) / 'cnn_lstm.ckpt'}")
    return 0


def _tabular(cfg):
    tensor = pipeline.load_pipeline_tensor(cfg)
    with pipeline._Stage("tabular"):
        table, train_ds, val_ds = pipeline.stage_tabular(cfg, tensor)
    return tensor, table, train_ds, val_ds


def _cmd_train_gbdt(args) -> int:
    cfg = _load_config(args)
    _, table, train_ds, val_ds = _tabular(cfg)
    with pipeline._Stage("train-gbdt"):
        ensemble = pipeline.stage_train_gbdt(cfg, table, train_ds, val_ds)
    print(f"kept {ensemble.n_trees} trees after {ensemble.rounds_run} rounds; "
          f"model at {Path(cfg.output_dir) / 'gbdt.json'}")
    return 0


def _cmd_train_lasso(args) -> int:
    cfg = _load_config(args)
    _, table, train_ds, _ = _tabular(cfg)
    with pipeline._Stage("train-lasso"):
        model = pipeline.stage_train_lasso(cfg, table, train_ds)
    nonzero = int((model.weights != 0).sum())
    print(f"{nonzero}/{model.n_features} non-zero weights; "
          f"model at {Path(cfg.output_dir) / 'lasso.json'}")
    return 0


def _cmd_predict(args) -> int:
    cfg = _load_config(args)
    tensor, table, _, _ = _tabular(cfg)
    with pipeline._Stage("predict"):
        predictions = pipeline.stage_predict(cfg, tensor, table)
    for name in predictions:
        print(f"wrote {Path(cfg.output_dir) / f'pred_{name}.csv'}")
    return 0


def _cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    tensor, table, _, val_ds = _tabular(cfg)
    _, target = pipeline._window_arrays(cfg, tensor)
    out = Path(cfg.output_dir)
    predictions = {}
    for name in pipeline.MODEL_NAMES:
        if not getattr(cfg.enabled, name):
            continue
        path = out / f"pred_{name}.csv"
        if not path.exists():
            raise InvalidConfig(f"no prediction at {path}; run predict first")
        predictions[name] = pipeline.read_map_csv(path)
    with pipeline._Stage("evaluate"):
        metrics = pipeline.stage_evaluate(cfg, target, predictions, val_ds)
    with pipeline._Stage("figures"):
        figures.render_report_figures(cfg.output_dir, target, predictions,
                                      n_bins=cfg.n_bins)
    for name, entry in metrics["models"].items():
        full = entry["full"]
        print(f"{name}: rmse={full['rmse']:.6f} mse={full['mse']:.6f} "
              f"r2={full['r2']:.6f}")
    return 0


def _cmd_explain(args) -> int:
    cfg = _load_config(args)
    _, table, _, _ = _tabular(cfg)
    model_path = Path(cfg.output_dir) / "gbdt.json"
    if not model_path.exists():
        raise InvalidConfig(f"no model at {model_path}; run train-gbdt first")
    ensemble = boosting.load_ensemble(model_path)
    with pipeline._Stage("explain"):
        report = pipeline.stage_explain(cfg, table, ensemble)
    with pipeline._Stage("figures"):
        figures.fig_shap_summary(report, Path(cfg.output_dir) / "fig_shap_summary.png")
        figures.fig_shap_force(report, 0, Path(cfg.output_dir) / "fig_shap_force.png")
    ranked = shapley.shap_summary(report)
    top = ranked[0]
    print(f"explained {report.k} rows; top feature {top['feature']} "
          f"(mean |phi| {top['mean_abs_phi']:.6f})")
    return 0


def _cmd_memory_study(args) -> int:
    print(f"{'t':>6} {'h':>6} {'w':>6} {'bytes':>6} {'MiB':>10}")
    for size in args.sizes:
        mib = estimate_memory(args.timesteps, size, size, args.value_bytes)
        print(f"{args.timesteps:>6} {size:>6} {size:>6} "
              f"{args.value_bytes:>6} {mib:>10.2f}")
    if 256 in args.sizes and args.timesteps == 300 and args.value_bytes == 4:
        print("note: 300x256x256x4 is exactly 75.00 MiB; memory profilers "
              "that include allocator overhead often quote 76 MB for this "
              "shape.")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="insarcast",
        description="Point-displacement forecasting: grid, train, predict, "
                    "evaluate and explain from one JSON config.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", "-c", help="path to the JSON run config")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key, e.g. --set window.input_len=24")
        p.set_defaults(func=func)
        return p

    add("pipeline", _cmd_pipeline, "run the full forecast pipeline end to end")
    add("synth", _cmd_synth, "generate the synthetic scene CSV")
    add("grid", _cmd_grid, "interpolate the source onto the grid tensor")
    add("train-nn", _cmd_train_nn, "train the CNN-LSTM forecaster")
    add("train-gbdt", _cmd_train_gbdt, "train the boosted-tree forecaster")
    add("train-lasso", _cmd_train_lasso, "train the L1 linear forecaster")
    add("predict", _cmd_predict, "write predicted maps for trained models")
    add("evaluate", _cmd_evaluate, "score predictions and write the report")
    add("explain", _cmd_explain, "SHAP attribution for the tree model")

    mem = sub.add_parser("memory-study",
                         help="print tensor memory footprints per resolution")
    mem.add_argument("--timesteps", "-t", type=int, default=300)
    mem.add_argument("--sizes", type=int, nargs="+", default=[128, 256, 512])
    mem.add_argument("--value-bytes", type=int, default=4)
    mem.set_defaults(func=_cmd_memory_study)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InsarcastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
