"""Scattered-point interpolation onto a regular grid and tensor assembly.

Each epoch's sparse point values are interpolated linearly (Delaunay
triangulation + barycentric weights inside each triangle) onto an H x W
node grid spanning the tight bounding box of the points. Nodes outside the
convex hull stay *missing* until :func:`fill_missing` sets them to 0 mm.
Missingness is an explicit per-cell flag, never a sentinel value, because
0 mm is a legal displacement.

Row 0 of every map is the northernmost row (north-up raster).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay, QhullError

from .errors import DegenerateExtent, EmptyInput, SpecMismatch, TriangulationFailure
from .ingest import PointSet


@dataclass(frozen=True)
class GridSpec:
    """Geometry of the interpolation grid.

    H x W nodes are placed inclusively across the bounding box, so node
    spacing is extent/(N-1) per axis and corner nodes sit exactly on the
    extreme coordinates. Node (0, 0) is at (min_easting, max_northing).
    """

    height: int
    width: int
    min_easting: float
    max_easting: float
    min_northing: float
    max_northing: float

    def __post_init__(self):
        if self.height < 2 or self.width < 2:
            raise DegenerateExtent(
                f"grid must be at least 2x2, got {self.height}x{self.width}"
            )
        if not (self.max_easting > self.min_easting
                and self.max_northing > self.min_northing):
            raise DegenerateExtent(
                "bounding box has no area: "
                f"easting [{self.min_easting}, {self.max_easting}], "
                f"northing [{self.min_northing}, {self.max_northing}]"
            )

    def node_eastings(self) -> np.ndarray:
        return np.linspace(self.min_easting, self.max_easting, self.width)

    def node_northings(self) -> np.ndarray:
        # descending: row 0 = north
        return np.linspace(self.max_northing, self.min_northing, self.height)

    def node_coordinates(self) -> np.ndarray:
        """(H*W, 2) array of (easting, northing) in row-major node order."""
        ee, nn = np.meshgrid(self.node_eastings(), self.node_northings())
        return np.column_stack([ee.ravel(), nn.ravel()])

    def bbox(self) -> dict:
        return {
            "min_easting": self.min_easting,
            "max_easting": self.max_easting,
            "min_northing": self.min_northing,
            "max_northing": self.max_northing,
        }


@dataclass
class DisplacementMap:
    """One dense H x W displacement field (mm) at a single epoch."""

    spec: GridSpec
    values: np.ndarray
    epoch_index: int = 0
    missing: np.ndarray | None = None  # bool mask; None once filled

    def __post_init__(self):
        expected = (self.spec.height, self.spec.width)
        if self.values.shape != expected:
            raise SpecMismatch(
                f"map shape {self.values.shape} does not match grid {expected}"
            )
        if self.missing is not None and self.missing.shape != expected:
            raise SpecMismatch(
                f"missing mask shape {self.missing.shape} does not match grid {expected}"
            )

    @property
    def has_missing(self) -> bool:
        return self.missing is not None and bool(self.missing.any())


def build_grid_spec(ps: PointSet, height: int, width: int) -> GridSpec:
    """Tight bounding-box grid over a PointSet's coordinates."""
    coords = ps.coordinates()
    if coords.size == 0:
        raise EmptyInput("point set has no records")
    min_e, min_n = coords.min(axis=0)
    max_e, max_n = coords.max(axis=0)
    return GridSpec(height, width, float(min_e), float(max_e),
                    float(min_n), float(max_n))


class GridInterpolator:
    """Shared triangulation for interpolating many epochs onto one grid.

    The Delaunay triangulation of the point cloud and the barycentric
    coordinates of every grid node are computed once; each epoch is then a
    single weighted gather, which is what makes per-step interpolation cheap
    and safely parallel.
    """

    def __init__(self, coords: np.ndarray, spec: GridSpec):
        coords = np.asarray(coords, dtype=float)
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise TriangulationFailure(f"expected (N, 2) coordinates, got {coords.shape}")
        if len(coords) < 3:
            raise TriangulationFailure(f"need at least 3 points, got {len(coords)}")
        try:
            self._tri = Delaunay(coords)
        except QhullError as exc:
            raise TriangulationFailure(f"triangulation failed: {exc}") from exc
        self.spec = spec
        self.n_points = len(coords)

        nodes = spec.node_coordinates()
        simplex = self._tri.find_simplex(nodes)
        self._outside = simplex < 0
        inside = ~self._outside
        # barycentric weights of inside nodes w.r.t. their simplex vertices
        s = simplex[inside]
        transform = self._tri.transform[s]  # (n_in, 3, 2)
        delta = nodes[inside] - transform[:, 2, :]
        bary = np.einsum("nij,nj->ni", transform[:, :2, :], delta)
        self._weights = np.column_stack([bary, 1.0 - bary.sum(axis=1)])  # (n_in, 3)
        self._vertices = self._tri.simplices[s]  # (n_in, 3)
        self._inside = inside

    def interpolate(self, values: np.ndarray, epoch_index: int = 0) -> DisplacementMap:
        """Linear interpolation of one epoch's point values; hull-exterior
        nodes come back flagged missing (value 0 under the flag)."""
        values = np.asarray(values, dtype=float)
        if values.shape != (self.n_points,):
            raise SpecMismatch(
                f"expected {self.n_points} values, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise SpecMismatch("point values must be finite")
        flat = np.zeros(self.spec.height * self.spec.width, dtype=float)
        flat[self._inside] = np.einsum(
            "ni,ni->n", self._weights, values[self._vertices]
        )
        grid_values = flat.reshape(self.spec.height, self.spec.width)
        missing = self._outside.reshape(self.spec.height, self.spec.width).copy()
        return DisplacementMap(self.spec, grid_values, epoch_index, missing)


def interpolate_linear(
    coords: np.ndarray, values: np.ndarray, spec: GridSpec, epoch_index: int = 0
) -> DisplacementMap:
    """One-shot convenience wrapper around :class:`GridInterpolator`."""
    return GridInterpolator(coords, spec).interpolate(values, epoch_index)


def fill_missing(m: DisplacementMap) -> DisplacementMap:
    """Replace every missing cell with 0.0 mm; everything else untouched."""
    values = m.values.copy()
    if m.missing is not None:
        values[m.missing] = 0.0
    return DisplacementMap(m.spec, values, m.epoch_index, missing=None)


@dataclass
class SpatioTemporalTensor:
    """Ordered stack of displacement maps sharing one GridSpec."""

    spec: GridSpec
    steps: list[DisplacementMap] = field(default_factory=list)

    @property
    def t(self) -> int:
        return len(self.steps)

    def as_array(self) -> np.ndarray:
        """(T, H, W) float array of the stacked maps."""
        return np.stack([m.values for m in self.steps])


def assemble_tensor(maps: list[DisplacementMap]) -> SpatioTemporalTensor:
    """Stack filled maps in time order into one tensor."""
    if not maps:
        raise EmptyInput("cannot assemble a tensor from zero maps")
    spec = maps[0].spec
    prev_epoch = None
    for m in maps:
        if m.spec != spec:
            raise SpecMismatch(
                f"map at epoch {m.epoch_index} has a different grid spec"
            )
        if m.has_missing:
            raise SpecMismatch(
                f"map at epoch {m.epoch_index} still has missing cells; "
                "run fill_missing first"
            )
        if prev_epoch is not None and m.epoch_index <= prev_epoch:
            raise SpecMismatch(
                f"epoch indices must strictly increase, got {prev_epoch} "
                f"then {m.epoch_index}"
            )
        prev_epoch = m.epoch_index
    return SpatioTemporalTensor(spec=spec, steps=list(maps))


def estimate_memory(t: int, h: int, w: int, bytes_per_value: int = 4) -> float:
    """MiB needed to hold a full (1, t, 1, h, w) training tensor, 2 decimals.

    This is the exact arithmetic value t*h*w*bytes / 2^20; memory profilers
    that include allocator overhead can quote slightly larger figures for
    the same shape (e.g. 76 MB is sometimes reported where this formula
    gives 75.00 for 300 x 256 x 256 x 4).
    """
    if min(t, h, w, bytes_per_value) <= 0:
        raise EmptyInput("all counts must be positive")
    return round(t * h * w * bytes_per_value / 2**20, 2)


# --- persistence -----------------------------------------------------------
# Blob: little-endian float32, t-major then row-major. Sidecar: JSON with
# shape, bounding box and epoch labels.

def save_tensor(
    tensor: SpatioTemporalTensor,
    blob_path: str | Path,
    epoch_labels: list[str] | None = None,
) -> None:
    blob_path = Path(blob_path)
    data = tensor.as_array().astype("<f4")
    blob_path.write_bytes(data.tobytes())
    sidecar = {
        "t": tensor.t,
        "h": tensor.spec.height,
        "w": tensor.spec.width,
        "bbox": tensor.spec.bbox(),
        "epoch_labels": epoch_labels
        or [str(m.epoch_index) for m in tensor.steps],
    }
    blob_path.with_suffix(blob_path.suffix + ".json").write_text(
        json.dumps(sidecar, indent=2) + "\n", encoding="utf-8"
    )


def load_tensor(blob_path: str | Path) -> tuple[SpatioTemporalTensor, list[str]]:
    blob_path = Path(blob_path)
    sidecar = json.loads(
        blob_path.with_suffix(blob_path.suffix + ".json").read_text(encoding="utf-8")
    )
    t, h, w = sidecar["t"], sidecar["h"], sidecar["w"]
    bbox = sidecar["bbox"]
    spec = GridSpec(h, w, bbox["min_easting"], bbox["max_easting"],
                    bbox["min_northing"], bbox["max_northing"])
    raw = np.frombuffer(blob_path.read_bytes(), dtype="<f4").astype(float)
    if raw.size != t * h * w:
        raise SpecMismatch(
            f"blob holds {raw.size} values, sidecar promises {t * h * w}"
        )
    arr = raw.reshape(t, h, w)
    steps = [DisplacementMap(spec, arr[i], epoch_index=i) for i in range(t)]
    return SpatioTemporalTensor(spec, steps), list(sidecar["epoch_labels"])
