"""Exception types shared across the toolkit."""


class SelectivityError(Exception):
    """Base class for all toolkit errors."""


class FormatError(SelectivityError):
    """Malformed binary file (bad magic, truncated payload, bad version)."""


class GraphError(SelectivityError):
    """Model manifest or weight-store inconsistency (names, shapes, geometry)."""


class SchemaError(SelectivityError):
    """CSV ingestion failure; message carries the offending row number."""


class ZeroVarianceError(SelectivityError):
    """A statistic that needs variance was given constant data."""


class ComparisonError(SelectivityError):
    """Map sets cannot be compared (mismatched image ids or sizes)."""


class EstimatorError(SelectivityError):
    """A behavioral map estimator could not be computed from the given records."""
