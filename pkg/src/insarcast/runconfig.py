"""Run configuration: one JSON document drives the whole pipeline.

The schema (documented in docs/config.md) has six sections: paths, grid,
window, models, split, explain and evaluate. Everything except the input
source carries a default, and every seed defaults to 42. Validation is
strict and runs before any filesystem work: unknown keys, malformed
sections and grid/model inconsistencies (like a grid the conv pooling
cannot divide) are rejected with the offending key named.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .boosting import GbdtParams
from .cnn_lstm import CnnLstmConfig
from .errors import InvalidConfig
from .ingest import WindowSelection
from .lasso import LassoParams
from .synth import BowlConfig, SceneConfig


def _require_keys(section: dict, allowed: set[str], where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise InvalidConfig(
            f"unknown key(s) {sorted(unknown)} in {where}; allowed: {sorted(allowed)}"
        )


def _section(doc: dict, name: str) -> dict:
    value = doc.get(name, {})
    if not isinstance(value, dict):
        raise InvalidConfig(f"section {name!r} must be an object")
    return dict(value)


@dataclass
class ModelToggles:
    cnn_lstm: bool = True
    gbdt: bool = True
    lasso: bool = True


@dataclass
class RunConfig:
    output_dir: str
    input_csv: str | None = None
    scene: SceneConfig | None = None
    grid_height: int = 32
    grid_width: int = 32
    window: WindowSelection = field(
        default_factory=lambda: WindowSelection(0, 24, 24)
    )
    enabled: ModelToggles = field(default_factory=ModelToggles)
    cnn_lstm: CnnLstmConfig = field(default_factory=CnnLstmConfig)
    gbdt: GbdtParams = field(default_factory=GbdtParams)
    lasso: LassoParams = field(default_factory=LassoParams)
    val_fraction: float = 0.2
    split_seed: int = 42
    explain_k: int = 10000
    explain_seed: int = 42
    n_bins: int = 10
    heatmap_range: float | None = None

    def validate(self) -> None:
        if (self.input_csv is None) == (self.scene is None):
            raise InvalidConfig(
                "paths must name exactly one input source: input_csv or scene"
            )
        if self.grid_height < 2 or self.grid_width < 2:
            raise InvalidConfig(
                f"grid must be at least 2x2, got "
                f"{self.grid_height}x{self.grid_width}"
            )
        self.window.validate(self.window.target_index + 1)
        if not (self.enabled.cnn_lstm or self.enabled.gbdt or self.enabled.lasso):
            raise InvalidConfig("all models are disabled; enable at least one")
        if self.enabled.cnn_lstm:
            self.cnn_lstm.validate_grid(self.grid_height, self.grid_width)
        if not 0.0 < self.val_fraction < 1.0:
            raise InvalidConfig(
                f"split.val_fraction must be in (0, 1), got {self.val_fraction}"
            )
        if self.explain_k < 1:
            raise InvalidConfig(f"explain.k must be >= 1, got {self.explain_k}")
        if self.n_bins < 1:
            raise InvalidConfig(f"evaluate.n_bins must be >= 1, got {self.n_bins}")
        if self.heatmap_range is not None and self.heatmap_range <= 0:
            raise InvalidConfig(
                f"evaluate.heatmap_range must be positive, got {self.heatmap_range}"
            )


def _scene_from_dict(doc: dict) -> SceneConfig:
    allowed = {"n_points", "extent", "t_steps", "trend", "bowls", "noise_std",
               "seed", "jitter_frac", "origin_easting", "origin_northing"}
    _require_keys(doc, allowed, "paths.scene")
    bowls = tuple(
        BowlConfig(**b) for b in doc.get("bowls", [])
    )
    kwargs = {k: v for k, v in doc.items() if k != "bowls"}
    return SceneConfig(bowls=bowls, **kwargs)


def _model_section(doc: dict, name: str, cls, where: str):
    section = dict(doc)
    enabled = bool(section.pop("enabled", True))
    try:
        if name == "cnn_lstm" and "conv_channels" in section:
            section["conv_channels"] = tuple(section["conv_channels"])
        return enabled, cls(**section)
    except TypeError as exc:
        raise InvalidConfig(f"bad {where} section: {exc}") from exc


def from_dict(doc: dict) -> RunConfig:
    """Parse and validate a configuration document."""
    if not isinstance(doc, dict):
        raise InvalidConfig("configuration root must be a JSON object")
    _require_keys(doc, {"paths", "grid", "window", "models", "split",
                        "explain", "evaluate"}, "configuration root")

    paths = _section(doc, "paths")
    _require_keys(paths, {"input_csv", "scene", "output_dir"}, "paths")
    if "output_dir" not in paths:
        raise InvalidConfig("paths.output_dir is required")
    scene = _scene_from_dict(paths["scene"]) if "scene" in paths else None

    grid = _section(doc, "grid")
    _require_keys(grid, {"height", "width"}, "grid")

    window_doc = _section(doc, "window")
    _require_keys(window_doc, {"input_start", "input_len", "target_index"}, "window")
    window = WindowSelection(
        input_start=int(window_doc.get("input_start", 0)),
        input_len=int(window_doc.get("input_len", 24)),
        target_index=int(window_doc.get("target_index", 24)),
    )

    models = _section(doc, "models")
    _require_keys(models, {"cnn_lstm", "gbdt", "lasso"}, "models")
    nn_on, nn_cfg = _model_section(
        _section(models, "cnn_lstm"), "cnn_lstm", CnnLstmConfig, "models.cnn_lstm")
    gb_on, gb_cfg = _model_section(
        _section(models, "gbdt"), "gbdt", GbdtParams, "models.gbdt")
    la_on, la_cfg = _model_section(
        _section(models, "lasso"), "lasso", LassoParams, "models.lasso")

    split = _section(doc, "split")
    _require_keys(split, {"val_fraction", "seed"}, "split")
    explain = _section(doc, "explain")
    _require_keys(explain, {"k", "seed"}, "explain")
    evaluate = _section(doc, "evaluate")
    _require_keys(evaluate, {"n_bins", "heatmap_range"}, "evaluate")

    cfg = RunConfig(
        output_dir=str(paths["output_dir"]),
        input_csv=paths.get("input_csv"),
        scene=scene,
        grid_height=int(grid.get("height", 32)),
        grid_width=int(grid.get("width", 32)),
        window=window,
        enabled=ModelToggles(cnn_lstm=nn_on, gbdt=gb_on, lasso=la_on),
        cnn_lstm=nn_cfg,
        gbdt=gb_cfg,
        lasso=la_cfg,
        val_fraction=float(split.get("val_fraction", 0.2)),
        split_seed=int(split.get("seed", 42)),
        explain_k=int(explain.get("k", 10000)),
        explain_seed=int(explain.get("seed", 42)),
        n_bins=int(evaluate.get("n_bins", 10)),
        heatmap_range=(
            float(evaluate["heatmap_range"])
            if evaluate.get("heatmap_range") is not None else None
        ),
    )
    cfg.validate()
    return cfg


def from_file(path: str | Path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise InvalidConfig(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"config file is not valid JSON: {exc}") from exc
    return from_dict(doc)


def apply_overrides(doc: dict, overrides: list[str]) -> dict:
    """Apply dotted key=value strings on top of a raw config document.

    Values parse as JSON when possible ("0.2", "true", "[1,2]"), else as
    strings, so --set window.input_len=24 and --set paths.output_dir=out
    both do the expected thing.
    """
    for item in overrides:
        if "=" not in item:
            raise InvalidConfig(f"override {item!r} must look like key.path=value")
        dotted, raw = item.split("=", 1)
        keys = dotted.strip().split(".")
        if not all(keys):
            raise InvalidConfig(f"override {item!r} has an empty key segment")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = doc
        for key in keys[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise InvalidConfig(
                    f"override {item!r} descends into non-object {key!r}"
                )
        node[keys[-1]] = value
    return doc
