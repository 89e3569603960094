"""Exception types shared across the toolkit.

Every error raised by insarcast derives from :class:`InsarcastError`, so
callers (and the CLI) can catch one base class per failing stage.
"""


class InsarcastError(Exception):
    """Base class for all toolkit errors."""


# --- CSV ingestion ---------------------------------------------------------

class MissingColumn(InsarcastError):
    """A column named by the schema is absent from the CSV header."""


class RaggedRow(InsarcastError):
    """A data row has a different number of cells than the header."""


class NonNumeric(InsarcastError):
    """A cell that must be numeric could not be parsed."""


class DuplicatePoint(InsarcastError):
    """Two records share the same (easting, northing) location."""


class WindowOutOfRange(InsarcastError):
    """Input/target window indices do not fit the series."""


# --- Gridding --------------------------------------------------------------

class DegenerateExtent(InsarcastError):
    """All points share one easting or one northing; bounding box has no area."""


class TriangulationFailure(InsarcastError):
    """Scattered points do not admit a triangulation (collinear or too few)."""


class SpecMismatch(InsarcastError):
    """Grid specifications (or epoch ordering) disagree where they must match."""


class EmptyInput(InsarcastError):
    """An operation received an empty collection it cannot work with."""


# --- Models ----------------------------------------------------------------

class ShapeMismatch(InsarcastError):
    """Array shapes are inconsistent with the model or grid configuration."""


class NonFiniteLoss(InsarcastError):
    """Training diverged; carries the epoch at which loss became non-finite."""

    def __init__(self, epoch: int):
        super().__init__(f"loss became non-finite at epoch {epoch}")
        self.epoch = epoch


class FeatureCountMismatch(InsarcastError):
    """Prediction input has a different feature count than the trained model."""


# --- Attribution -----------------------------------------------------------

class ZeroCover(InsarcastError):
    """A tree node carries zero cover; path-dependent expectations are undefined."""


class TooManyFeatures(InsarcastError):
    """Brute-force Shapley enumeration is limited to small feature counts."""


class IndexOutOfRange(InsarcastError):
    """A row index exceeds the explained sample."""


# --- Metrics ---------------------------------------------------------------

class LengthMismatch(InsarcastError):
    """Two vectors that must align have different lengths."""


class ZeroVariance(InsarcastError):
    """The reference vector is constant; the statistic is undefined."""


# --- Configuration ---------------------------------------------------------

class InvalidConfig(InsarcastError):
    """A configuration value violates its documented constraints."""
