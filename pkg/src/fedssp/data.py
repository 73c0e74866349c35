"""Dataset ingestion, standardization, non-i.i.d. partitioning, and the
planted-subspace synthetic generator.

Matrices downstream are feature-major: X is d x n with one sample per column.
CSV tables on disk are the usual sample-per-row layout and get transposed on
the way in.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DataError, DimensionError
from .manifold import qr_orthonormalize

CONTAINER_MAGIC = b"FSSP1"

# a column is numeric when more than this fraction of its data cells parse
_NUMERIC_FRACTION = 0.5


@dataclass(frozen=True)
class RawTable:
    """Numeric table straight out of a CSV: rows are samples, columns named."""

    columns: tuple[str, ...]
    values: np.ndarray  # (n_rows, n_columns)
    dropped_columns: tuple[str, ...] = ()
    n_rejected_rows: int = 0

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    def column(self, name: str) -> np.ndarray:
        if name not in self.columns:
            raise DataError(f"column {name!r} not in table (have {list(self.columns)})")
        return self.values[:, self.columns.index(name)]


def _try_float(cell: str) -> Optional[float]:
    try:
        return float(cell)
    except ValueError:
        return None


def _read_csv(path: str, columns: Optional[Sequence[str]],
              label_column: Optional[str]) -> tuple[RawTable, tuple[str, ...]]:
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = [h.strip() for h in next(reader)]
            except StopIteration:
                raise DataError(f"{path}: empty file, expected a header row")
            rows = [row for row in reader if row]
    except FileNotFoundError as exc:
        raise DataError(f"csv file not found: {path}") from exc

    label_idx: Optional[int] = None
    if label_column is not None:
        if label_column not in header:
            raise DataError(f"{path}: label column {label_column!r} not in header")
        label_idx = header.index(label_column)

    if columns is not None:
        missing = [c for c in columns if c not in header]
        if missing:
            raise DataError(f"{path}: allowlisted columns missing from header: {missing}")
        keep_idx = [header.index(c) for c in columns]
    else:
        keep_idx = list(range(len(header)))
    # the label is metadata, never a feature
    keep_idx = [i for i in keep_idx if i != label_idx]
    names = [header[i] for i in keep_idx]

    n_rejected = 0
    parsed: list[list[Optional[float]]] = []
    row_labels: list[str] = []
    for row in rows:
        if len(row) < len(header):
            n_rejected += 1
            continue
        parsed.append([_try_float(row[i].strip()) for i in keep_idx])
        if label_idx is not None:
            row_labels.append(row[label_idx].strip())

    if not parsed:
        table = RawTable(columns=tuple(names),
                         values=np.zeros((0, len(names))),
                         n_rejected_rows=n_rejected)
        return table, ()

    ok = np.array([[cell is not None for cell in row] for row in parsed], dtype=bool)
    numeric_mask = ok.mean(axis=0) > _NUMERIC_FRACTION
    dropped = tuple(n for n, keep in zip(names, numeric_mask) if not keep)
    if not np.any(numeric_mask):
        raise DataError(f"{path}: no numeric columns after parsing")

    row_ok = ok[:, numeric_mask].all(axis=1)
    n_rejected += int(np.sum(~row_ok))
    kept_names = tuple(n for n, keep in zip(names, numeric_mask) if keep)
    col_idx = np.flatnonzero(numeric_mask)
    values = np.array(
        [[parsed[r][c] for c in col_idx] for r in np.flatnonzero(row_ok)],
        dtype=float,
    ).reshape(int(np.sum(row_ok)), len(kept_names))
    labels = tuple(row_labels[r] for r in np.flatnonzero(row_ok)) if label_idx is not None else ()
    table = RawTable(columns=kept_names, values=values,
                     dropped_columns=dropped, n_rejected_rows=n_rejected)
    return table, labels


def load_csv(path: str, columns: Optional[Sequence[str]] = None) -> RawTable:
    """Read a comma-delimited, header-first CSV into a numeric table.

    Columns where half or more of the data cells fail to parse as floats are
    dropped and reported in dropped_columns; remaining rows containing any
    unparseable cell are rejected and counted. A header-only file yields an
    empty table. `columns` restricts the table to an allowlist (missing
    allowlisted columns are an error).
    """
    table, _ = _read_csv(path, columns, None)
    return table


def load_labeled_csv(path: str, label_column: str,
                     columns: Optional[Sequence[str]] = None) -> tuple[RawTable, tuple[str, ...]]:
    """Like load_csv, but also return the label column as raw strings.

    The label column is excluded from the numeric table and its values stay
    aligned with the retained rows.
    """
    return _read_csv(path, columns, label_column)


@dataclass(frozen=True)
class Standardizer:
    """Per-feature z-score transform fitted on training data.

    Constant features (std below 1e-12) are flagged and map to 0; the inverse
    restores their mean.
    """

    mean: np.ndarray
    std: np.ndarray
    constant_mask: np.ndarray
    feature_names: tuple[str, ...] = ()

    @property
    def is_identity(self) -> bool:
        return bool(np.all(self.mean == 0.0) and np.all(self.std == 1.0))


def identity_standardizer(d: int, feature_names: tuple[str, ...] = ()) -> Standardizer:
    return Standardizer(mean=np.zeros(d), std=np.ones(d),
                        constant_mask=np.zeros(d, dtype=bool),
                        feature_names=feature_names)


def fit_standardizer(values: np.ndarray, feature_names: Sequence[str] = ()) -> Standardizer:
    """Fit per-feature mean and population std on an (n_samples, d) array."""
    values = np.asarray(values, dtype=float)
    if values.ndim != 2 or values.shape[0] == 0:
        raise DataError(f"cannot fit a standardizer on shape {values.shape}")
    mean = values.mean(axis=0)
    std = values.std(axis=0)
    constant = std < 1e-12
    return Standardizer(mean=mean, std=np.where(constant, 1.0, std),
                        constant_mask=constant, feature_names=tuple(feature_names))


def apply_standardizer(std: Standardizer, values: np.ndarray) -> np.ndarray:
    """Standardize an (n_samples, d) array and return it feature-major (d x n)."""
    values = np.asarray(values, dtype=float)
    if values.ndim != 2 or values.shape[1] != std.mean.shape[0]:
        raise DimensionError(
            f"expected (n, {std.mean.shape[0]}) samples, got shape {values.shape}")
    out = (values - std.mean) / std.std
    out[:, std.constant_mask] = 0.0
    return out.T


def invert_standardizer(std: Standardizer, X: np.ndarray) -> np.ndarray:
    """Undo apply_standardizer on a feature-major d x n matrix."""
    X = np.asarray(X, dtype=float)
    return (X.T * std.std + std.mean).T


@dataclass(frozen=True)
class GatewayDataset:
    """One gateway's standardized d x n block plus its cached Gram matrix."""

    gateway_id: int
    X: np.ndarray
    gram: np.ndarray = field(repr=False)
    data_const: float

    @classmethod
    def from_matrix(cls, X: np.ndarray, gateway_id: int) -> "GatewayDataset":
        X = np.asarray(X, dtype=float)
        if X.ndim != 2:
            raise DimensionError(f"gateway data must be a d x n matrix, got {X.shape}")
        gram = X @ X.T
        gram = 0.5 * (gram + gram.T)
        return cls(gateway_id=gateway_id, X=X, gram=gram,
                   data_const=float(np.sum(X * X)))

    @property
    def d(self) -> int:
        return self.X.shape[0]

    @property
    def n_samples(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class LabeledTestSet:
    """Feature-major test matrix with one binary label per column (1 = attack)."""

    X: np.ndarray
    labels: np.ndarray
    categories: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        if self.labels.shape != (self.X.shape[1],):
            raise DimensionError(
                f"labels shape {self.labels.shape} does not match {self.X.shape[1]} samples")


def partition_indices(key_values: np.ndarray, n_parts: int) -> list[np.ndarray]:
    """Index blocks for a sorted-contiguous split by one raw key feature.

    Samples are ordered ascending by key (ties keep the original column
    order); the first n mod N blocks get one extra sample. This produces
    maximal skew of the key feature across gateways.
    """
    key_values = np.asarray(key_values, dtype=float)
    n = key_values.shape[0]
    if n_parts < 1 or n_parts > n:
        raise DataError(f"cannot split {n} samples into {n_parts} gateways")
    order = np.argsort(key_values, kind="stable")
    base, extra = divmod(n, n_parts)
    blocks = []
    start = 0
    for gid in range(n_parts):
        size = base + (1 if gid < extra else 0)
        blocks.append(order[start:start + size])
        start += size
    return blocks


def partition_noniid(X: np.ndarray, key_values: np.ndarray, n_parts: int) -> list[GatewayDataset]:
    """Split columns of X into contiguous blocks sorted by a raw key feature."""
    X = np.asarray(X, dtype=float)
    key_values = np.asarray(key_values, dtype=float)
    n = X.shape[1]
    if key_values.shape != (n,):
        raise DimensionError(f"key values shape {key_values.shape}, expected ({n},)")
    return [GatewayDataset.from_matrix(X[:, idx], gateway_id=gid)
            for gid, idx in enumerate(partition_indices(key_values, n_parts))]


@dataclass(frozen=True)
class SynthData:
    """Planted-subspace draw: partitioned training blocks, labeled test set,
    the generating orthonormal basis, and the unpartitioned training matrix."""

    gateways: list[GatewayDataset]
    test: LabeledTestSet
    basis: np.ndarray
    train: np.ndarray


def synth_planted(seed: int, d: int, m: int, n_normal: int, n_anomaly: int,
                  noise_sigma: float, anomaly_scale: float,
                  n_gateways: int = 1,
                  n_test_normal: Optional[int] = None) -> SynthData:
    """Draw a planted-subspace dataset for desk-scale verification.

    Normal samples are basis @ g + noise_sigma * eps; anomalies add
    anomaly_scale times a random unit direction orthogonal to the basis, so
    their residual against the true subspace is bounded below by the scale.
    Training normals are partitioned non-i.i.d. by raw feature 0. Fixed seeds
    give bit-identical draws.
    """
    if not (0 < m < d):
        raise DimensionError(f"planted subspace needs 0 < m < d, got d={d}, m={m}")
    if n_test_normal is None:
        n_test_normal = n_anomaly
    rng = np.random.default_rng(seed)
    basis = qr_orthonormalize(rng.standard_normal((d, m)))

    def draw_normals(count: int) -> np.ndarray:
        g = rng.standard_normal((m, count))
        eps = rng.standard_normal((d, count))
        return basis @ g + noise_sigma * eps

    train = draw_normals(n_normal)
    test_normal = draw_normals(n_test_normal)
    anomalies = draw_normals(n_anomaly)
    for j in range(n_anomaly):
        v = rng.standard_normal(d)
        v -= basis @ (basis.T @ v)
        anomalies[:, j] += anomaly_scale * (v / np.linalg.norm(v))

    X_test = np.hstack([test_normal, anomalies])
    labels = np.concatenate([np.zeros(n_test_normal, dtype=int),
                             np.ones(n_anomaly, dtype=int)])
    gateways = partition_noniid(train, train[0, :], n_gateways)
    return SynthData(gateways=gateways,
                     test=LabeledTestSet(X=X_test, labels=labels),
                     basis=basis, train=train)


def save_matrix(path: str, X: np.ndarray) -> None:
    """Write a d x n float64 matrix in the FSSP1 binary container.

    Layout: magic bytes, little-endian u64 d and n, then d*n little-endian
    f64 values in column-major order.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DimensionError(f"container stores 2-D matrices, got shape {X.shape}")
    d, n = X.shape
    with open(path, "wb") as fh:
        fh.write(CONTAINER_MAGIC)
        fh.write(struct.pack("<QQ", d, n))
        fh.write(np.ascontiguousarray(X.T, dtype="<f8").tobytes())


def load_matrix(path: str) -> np.ndarray:
    """Read a matrix written by save_matrix."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except FileNotFoundError as exc:
        raise DataError(f"matrix container not found: {path}") from exc
    header = len(CONTAINER_MAGIC) + 16
    if len(blob) < header or blob[: len(CONTAINER_MAGIC)] != CONTAINER_MAGIC:
        raise DataError(f"{path}: not an FSSP1 matrix container")
    d, n = struct.unpack("<QQ", blob[len(CONTAINER_MAGIC):header])
    body = blob[header:]
    if len(body) != 8 * d * n:
        raise DataError(f"{path}: truncated container (expected {8 * d * n} payload "
                        f"bytes, found {len(body)})")
    flat = np.frombuffer(body, dtype="<f8")
    return flat.reshape(n, d).T.astype(float)
