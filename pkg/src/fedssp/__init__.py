"""Federated structured-sparse subspace learning for anomaly detection.

Gateways learn one shared orthonormal projection from local traffic without
ever exchanging samples; double sparsity (row-wise and element-wise) keeps the
projection interpretable and noise-resistant, and reconstruction error against
the shared subspace flags anomalous traffic.
"""

__version__ = "0.1.0"

from .config import (
    ExperimentConfig,
    HyperParams,
    load_config,
    resolve_config,
)
from .data import (
    GatewayDataset,
    LabeledTestSet,
    Standardizer,
    load_csv,
    load_matrix,
    partition_noniid,
    save_matrix,
    synth_planted,
)
from .detector import (
    DetectionReport,
    classify,
    compute_metrics,
    evaluate,
    fit_threshold,
    score,
)
from .errors import (
    ConfigError,
    DataError,
    DimensionError,
    FedsspError,
    InfeasibleError,
    NumericalError,
    ProtocolError,
    RetractionError,
    RoundTimeoutError,
)
from .experiments import run_detect, run_fit, run_sweep, run_synth
from .federation import RunResult, aggregate_z, run_rounds
from .local_solver import GatewayState, init_state, local_round
from .manifold import cg_minimize_w, qr_orthonormalize, qr_retract
from .proximal import ProxParams, prox_elementwise, prox_rowwise, prox_scalar

__all__ = [
    "__version__",
    "ExperimentConfig", "HyperParams", "load_config", "resolve_config",
    "GatewayDataset", "LabeledTestSet", "Standardizer", "load_csv",
    "load_matrix", "partition_noniid", "save_matrix", "synth_planted",
    "DetectionReport", "classify", "compute_metrics", "evaluate",
    "fit_threshold", "score",
    "ConfigError", "DataError", "DimensionError", "FedsspError",
    "InfeasibleError", "NumericalError", "ProtocolError", "RetractionError",
    "RoundTimeoutError",
    "run_detect", "run_fit", "run_sweep", "run_synth",
    "RunResult", "aggregate_z", "run_rounds",
    "GatewayState", "init_state", "local_round",
    "cg_minimize_w", "qr_orthonormalize", "qr_retract",
    "ProxParams", "prox_elementwise", "prox_rowwise", "prox_scalar",
]
