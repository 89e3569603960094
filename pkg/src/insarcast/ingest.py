"""Point-measurement CSV ingestion and input/target window slicing.

The on-disk format is a UTF-8, comma-separated file with one header row.
Each data row describes one measurement point: an identifier, projected
easting/northing in meters, and a displacement time series in millimeters,
one column per epoch. The schema object says where those columns live, so
vendor layouts with leading metadata columns are supported by pointing
``first_series_column`` past them.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DuplicatePoint,
    EmptyInput,
    MissingColumn,
    NonNumeric,
    RaggedRow,
    WindowOutOfRange,
)


@dataclass
class CsvSchema:
    """Column layout of a point-series CSV.

    ``easting`` / ``northing`` / ``point_id`` are header names; the
    displacement block is addressed positionally because vendor exports label
    those columns with dates. All indices are 0-based.
    """

    easting: str = "easting"
    northing: str = "northing"
    first_series_column: int = 3
    point_id: str | None = "pid"


@dataclass
class PointRecord:
    point_id: str
    easting: float
    northing: float
    series: np.ndarray  # mm, one value per epoch


@dataclass
class PointSet:
    """All measurement points of one file, with shared epoch labels."""

    records: list[PointRecord]
    epoch_labels: list[str] = field(default_factory=list)

    def __post_init__(self):
        n_epochs = len(self.epoch_labels)
        for rec in self.records:
            if len(rec.series) != n_epochs:
                raise RaggedRow(
                    f"point {rec.point_id!r} has {len(rec.series)} values, "
                    f"expected {n_epochs}"
                )

    @property
    def n_points(self) -> int:
        return len(self.records)

    @property
    def n_epochs(self) -> int:
        return len(self.epoch_labels)

    def coordinates(self) -> np.ndarray:
        """(N, 2) array of (easting, northing)."""
        return np.array([(r.easting, r.northing) for r in self.records], dtype=float)

    def values_at(self, epoch: int) -> np.ndarray:
        """Displacements of every point at one epoch, in record order."""
        return np.array([r.series[epoch] for r in self.records], dtype=float)


@dataclass
class WindowSelection:
    """Which series columns feed the model and which one is predicted.

    ``target_index`` must lie strictly after the input window; a gap between
    the two is allowed (it is configuration, not an error).
    """

    input_start: int
    input_len: int
    target_index: int

    def validate(self, series_length: int) -> None:
        if self.input_start < 0 or self.input_len < 1:
            raise WindowOutOfRange(
                f"input window [{self.input_start}, +{self.input_len}) is empty or negative"
            )
        input_end = self.input_start + self.input_len
        if not (input_end <= self.target_index < series_length):
            raise WindowOutOfRange(
                f"target index {self.target_index} must lie in "
                f"[{input_end}, {series_length}) for input window "
                f"[{self.input_start}, {input_end})"
            )


def _parse_cell(text: str, row: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise NonNumeric(f"row {row}, column {column}: cannot parse {text!r}") from None
    if not math.isfinite(value):
        raise NonNumeric(f"row {row}, column {column}: non-finite value {text!r}")
    return value


def parse_csv(path: str | Path, schema: CsvSchema | None = None) -> PointSet:
    """Read a point-series CSV into a validated :class:`PointSet`.

    Raises :class:`MissingColumn`, :class:`RaggedRow`, :class:`NonNumeric`
    (with the 1-based data-row index and column), or :class:`DuplicatePoint`.
    Duplicated coordinates are rejected rather than merged because they break
    the uniqueness the gridding stage relies on.
    """
    schema = schema or CsvSchema()
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MissingColumn(f"{path}: file has no header row") from None
        rows = list(reader)

    def column_index(name: str) -> int:
        try:
            return header.index(name)
        except ValueError:
            raise MissingColumn(f"{path}: column {name!r} not in header") from None

    e_col = column_index(schema.easting)
    n_col = column_index(schema.northing)
    id_col = column_index(schema.point_id) if schema.point_id is not None else None
    if not 0 <= schema.first_series_column < len(header):
        raise MissingColumn(
            f"{path}: first displacement column {schema.first_series_column} "
            f"outside header of {len(header)} columns"
        )
    epoch_labels = header[schema.first_series_column:]

    records: list[PointRecord] = []
    seen: dict[tuple[float, float], str] = {}
    for i, row in enumerate(rows, start=1):
        if len(row) != len(header):
            raise RaggedRow(
                f"row {i}: {len(row)} cells, header has {len(header)}"
            )
        easting = _parse_cell(row[e_col], i, schema.easting)
        northing = _parse_cell(row[n_col], i, schema.northing)
        point_id = row[id_col] if id_col is not None else f"row{i}"
        series = np.array(
            [
                _parse_cell(cell, i, header[j])
                for j, cell in enumerate(row[schema.first_series_column:],
                                         start=schema.first_series_column)
            ],
            dtype=float,
        )
        key = (easting, northing)
        if key in seen:
            raise DuplicatePoint(
                f"row {i}: location {key} already used by point {seen[key]!r}"
            )
        seen[key] = point_id
        records.append(PointRecord(point_id, easting, northing, series))

    if not records:
        raise EmptyInput(f"{path}: no data rows below the header")
    return PointSet(records=records, epoch_labels=epoch_labels)


def write_csv(ps: PointSet, path: str | Path, schema: CsvSchema | None = None) -> None:
    """Serialize a PointSet to the same CSV layout :func:`parse_csv` consumes.

    Numeric content is written with 6 decimal places, so parse -> write is
    byte-stable and write -> parse preserves values at that precision.
    Only the compact layout (id, easting, northing, series...) is emitted;
    ``schema.first_series_column`` must equal 3 for round-trips.
    """
    schema = schema or CsvSchema()
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        id_name = schema.point_id or "pid"
        writer.writerow([id_name, schema.easting, schema.northing, *ps.epoch_labels])
        for rec in ps.records:
            writer.writerow(
                [rec.point_id, f"{rec.easting:.6f}", f"{rec.northing:.6f}"]
                + [f"{v:.6f}" for v in rec.series]
            )


def select_window(
    ps: PointSet, w: WindowSelection
) -> tuple[np.ndarray, np.ndarray]:
    """Slice every point's series into (inputs, target).

    Returns ``inputs`` of shape (N, input_len) and ``targets`` of shape (N,),
    both in record order, so ``targets[i]`` always belongs to the same point
    as ``inputs[i]``.
    """
    w.validate(ps.n_epochs)
    inputs = np.empty((ps.n_points, w.input_len), dtype=float)
    targets = np.empty(ps.n_points, dtype=float)
    for i, rec in enumerate(ps.records):
        inputs[i] = rec.series[w.input_start:w.input_start + w.input_len]
        targets[i] = rec.series[w.target_index]
    return inputs, targets
