"""Synthetic ground-motion scenes with analytically known truth.

A scene is a jittered lattice of measurement points whose displacement
series combine a linear background trend, one or more Gaussian subsidence
bowls with a time profile, and white observation noise. The same closed
form that generates the observations is returned as a callable, so tests
and reports can score against exact noise-free truth at any location.

With ``noise_std=0`` and ``shape="linear"`` (onset 0) every step adds the
same per-point increment, which makes the scene an exact persistence
process: the target map equals the last input map plus one increment.
Quadratic shapes accelerate over time and break that pattern.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import EmptyInput, InvalidConfig
from .ingest import PointRecord, PointSet

SHAPES = ("linear", "quadratic")


@dataclass(frozen=True)
class BowlConfig:
    """One Gaussian subsidence (or uplift) bowl.

    ``final_depth`` is the signed displacement reached at the bowl centre
    on the final epoch, in mm; negative values sink. The spatial footprint
    is exp(-d^2 / (2 sigma^2)) with sigma = radius / 2, so the rim at one
    radius sits at about 13.5 % of the central depth. Time evolution is
    flat until ``onset`` and then ramps to full depth at the last epoch,
    linearly or quadratically per ``shape``.
    """

    center_easting: float
    center_northing: float
    radius: float
    final_depth: float
    shape: str = "quadratic"
    onset: int = 0

    def __post_init__(self):
        if self.radius <= 0:
            raise InvalidConfig(f"bowl radius must be positive, got {self.radius}")
        if self.shape not in SHAPES:
            raise InvalidConfig(
                f"unknown shape {self.shape!r}, expected one of {SHAPES}"
            )
        if self.onset < 0:
            raise InvalidConfig(f"onset must be >= 0, got {self.onset}")


@dataclass(frozen=True)
class SceneConfig:
    n_points: int = 400
    extent: float = 2000.0
    t_steps: int = 25
    trend: float = 0.0  # mm per epoch, applied everywhere
    bowls: tuple[BowlConfig, ...] = field(default_factory=tuple)
    noise_std: float = 0.05
    seed: int = 42
    jitter_frac: float = 0.25
    origin_easting: float = 0.0
    origin_northing: float = 0.0

    def __post_init__(self):
        if self.n_points < 3:
            raise InvalidConfig(f"need at least 3 points, got {self.n_points}")
        if self.t_steps < 2:
            raise InvalidConfig(f"need at least 2 epochs, got {self.t_steps}")
        if self.extent <= 0:
            raise InvalidConfig(f"extent must be positive, got {self.extent}")
        if self.noise_std < 0:
            raise InvalidConfig(f"noise_std must be >= 0, got {self.noise_std}")
        if not 0.0 <= self.jitter_frac < 0.5:
            raise InvalidConfig(
                f"jitter_frac must be in [0, 0.5), got {self.jitter_frac}"
            )
        for bowl in self.bowls:
            if bowl.onset >= self.t_steps - 1:
                raise InvalidConfig(
                    f"bowl onset {bowl.onset} leaves no epochs to develop "
                    f"in a {self.t_steps}-epoch scene"
                )


def _profile(t: np.ndarray, onset: int, t_steps: int, shape: str) -> np.ndarray:
    """Fraction of final bowl depth reached at epoch t, in [0, 1]."""
    span = max(t_steps - 1 - onset, 1)
    s = np.clip((np.asarray(t, dtype=float) - onset) / span, 0.0, 1.0)
    return s * s if shape == "quadratic" else s


def signal_at(cfg: SceneConfig, coords: np.ndarray, t) -> np.ndarray:
    """Noise-free displacement (mm) at arbitrary coordinates and epoch.

    ``coords`` is (M, 2) easting/northing; ``t`` is a scalar epoch index or
    an array broadcastable against M.
    """
    coords = np.asarray(coords, dtype=float)
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise EmptyInput(f"expected (M, 2) coordinates, got {coords.shape}")
    t = np.asarray(t, dtype=float)
    out = np.broadcast_to(
        cfg.trend * t, np.broadcast_shapes(t.shape, (len(coords),))
    ).astype(float).copy()
    for bowl in cfg.bowls:
        d2 = (coords[:, 0] - bowl.center_easting) ** 2 + (
            coords[:, 1] - bowl.center_northing
        ) ** 2
        sigma = bowl.radius / 2.0
        footprint = np.exp(-d2 / (2.0 * sigma * sigma))
        out += bowl.final_depth * _profile(t, bowl.onset, cfg.t_steps, bowl.shape) * footprint
    return out


def generate_scene(cfg: SceneConfig) -> tuple[PointSet, Callable[[np.ndarray, float], np.ndarray]]:
    """Sample a jittered-lattice PointSet plus its analytic truth function.

    The lattice is g x g with g = ceil(sqrt(n_points)); the first n_points
    sites in row-major order are kept. Jitter is uniform within
    +-jitter_frac of the lattice spacing per axis, which keeps points
    well spread and the triangulation well conditioned. The returned
    callable maps (coords, t) to noise-free displacement.
    """
    rng = np.random.default_rng(cfg.seed)
    g = math.ceil(math.sqrt(cfg.n_points))
    spacing = cfg.extent / (g - 1) if g > 1 else cfg.extent
    base = np.linspace(0.0, cfg.extent, g)
    ee, nn = np.meshgrid(base, base)
    sites = np.column_stack([ee.ravel(), nn.ravel()])[: cfg.n_points]
    jitter = rng.uniform(-cfg.jitter_frac, cfg.jitter_frac, size=sites.shape) * spacing
    coords = sites + jitter
    coords[:, 0] += cfg.origin_easting
    coords[:, 1] += cfg.origin_northing

    t = np.arange(cfg.t_steps, dtype=float)
    clean = np.stack([signal_at(cfg, coords, ti) for ti in t], axis=1)  # (N, T)
    noise = rng.normal(0.0, cfg.noise_std, size=clean.shape) if cfg.noise_std > 0 else 0.0
    series = clean + noise

    records = [
        PointRecord(
            point_id=f"P{i:05d}",
            easting=float(coords[i, 0]),
            northing=float(coords[i, 1]),
            series=series[i],
        )
        for i in range(cfg.n_points)
    ]
    labels = [f"t{int(ti):03d}" for ti in t]
    point_set = PointSet(records=records, epoch_labels=labels)

    def truth(query_coords: np.ndarray, epoch) -> np.ndarray:
        return signal_at(cfg, query_coords, epoch)

    return point_set, truth
