"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes (config -> 2, data -> 3, everything
solver-side -> 4); the service maps them onto HTTP statuses.
"""


class FedsspError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(FedsspError):
    """Invalid or inconsistent experiment configuration."""


class DataError(FedsspError):
    """Dataset ingestion, schema, or artifact-file failure."""


class DimensionError(FedsspError):
    """Operands with incompatible shapes."""


class NumericalError(FedsspError):
    """A numerical routine produced garbage (non-finite values, failed root find)."""


class RetractionError(NumericalError):
    """QR retraction hit a rank-deficient update."""


class InfeasibleError(FedsspError):
    """A point violates the orthonormality constraint where feasibility is required."""


class ProtocolError(FedsspError):
    """Federation round protocol violation (empty aggregate, shape or round mismatch)."""


class RoundTimeoutError(ProtocolError):
    """A gateway did not reply within the coordinator's timeout."""
