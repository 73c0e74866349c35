"""End-to-end experiment drivers: fit, detect, parameter sweeps, synthesis.

These functions sit between the solver stack and the service/CLI front ends.
Each run splits the configured seed into independent data and initializer
streams, writes every artifact under the configured output directory, and
embeds the resolved config and seed in the reports, so reruns with the same
config are byte-identical and every file is auditable on its own.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .config import ExperimentConfig, HyperParams, SynthSource, resolve_config
from .data import (
    GatewayDataset,
    LabeledTestSet,
    Standardizer,
    apply_standardizer,
    fit_standardizer,
    identity_standardizer,
    load_csv,
    load_labeled_csv,
    load_matrix,
    partition_indices,
    save_matrix,
    synth_planted,
)
from .detector import DetectionReport, evaluate, fit_threshold, score
from .errors import ConfigError, DataError, FedsspError
from .federation import RunResult, global_objective, run_rounds
from .local_solver import init_state

MODEL_FILE = "model.fssp"
HISTORY_FILE = "history.jsonl"
TRAIN_SCORES_FILE = "train_scores.csv"
STANDARDIZER_FILE = "standardizer.json"
CONFIG_FILE = "config.json"
BASIS_FILE = "basis_true.fssp"
REPORT_FILE = "report.json"
TEST_SCORES_FILE = "test_scores.csv"
SWEEP_CSV_FILE = "sweep.csv"
SWEEP_JSON_FILE = "sweep.json"

_METRIC_COLUMNS = ("acc", "pre", "recall", "fnr", "f1", "threshold",
                   "tp", "fp", "tn", "fn")


def seed_split(seed: int) -> tuple[int, int]:
    """Derive independent (data_seed, init_seed) streams from one seed."""
    state = np.random.SeedSequence(seed).generate_state(2)
    return int(state[0]), int(state[1])


@dataclass(frozen=True)
class PreparedData:
    """Standardized gateway blocks plus everything detection needs later."""

    gateways: list[GatewayDataset]
    standardizer: Standardizer
    train_scored: np.ndarray  # pooled-transform training matrix, partition order
    test: Optional[LabeledTestSet]
    basis: Optional[np.ndarray]


def _load_test_csv(path: str, label_column: str, normal_label: str,
                   std: Standardizer) -> LabeledTestSet:
    table, labels = load_labeled_csv(path, label_column,
                                     columns=list(std.feature_names))
    if table.columns != tuple(std.feature_names):
        raise DataError(f"{path}: test columns {list(table.columns)} do not match "
                        f"the fitted features {list(std.feature_names)}")
    if table.n_rows == 0:
        raise DataError(f"{path}: no usable test rows")
    X = apply_standardizer(std, table.values)
    truth = np.array([lab != normal_label for lab in labels], dtype=int)
    return LabeledTestSet(X=X, labels=truth)


def prepare_data(config: ExperimentConfig, data_seed: int) -> PreparedData:
    """Load or draw training data, standardize, and split across gateways.

    CSV mode keeps only rows whose label equals the configured normal value,
    fits a pooled standardizer on them, and partitions by the raw (pre-scaling)
    key feature. The per-gateway flag standardizes each block locally instead;
    test data and threshold scores always use the pooled transform so scores
    stay comparable. Synthetic mode draws a planted-subspace dataset and skips
    scaling (the generator is already centered).
    """
    src = config.data
    n_gateways = config.partition.n_gateways

    if src.kind == "synth":
        sd = synth_planted(data_seed, d=src.d, m=src.m, n_normal=src.n_normal,
                           n_anomaly=src.n_anomaly, noise_sigma=src.noise_sigma,
                           anomaly_scale=src.anomaly_scale,
                           n_gateways=n_gateways,
                           n_test_normal=src.n_test_normal)
        names = tuple(f"f{i}" for i in range(src.d))
        test = sd.test if sd.test.X.shape[1] > 0 else None
        return PreparedData(gateways=sd.gateways,
                            standardizer=identity_standardizer(src.d, names),
                            train_scored=np.hstack([g.X for g in sd.gateways]),
                            test=test, basis=sd.basis)

    if src.label_column is not None:
        table, labels = load_labeled_csv(src.train_path, src.label_column,
                                         src.columns)
        keep = np.array([lab == src.normal_label for lab in labels], dtype=bool)
        values = table.values[keep]
    else:
        table = load_csv(src.train_path, src.columns)
        values = table.values
    if values.shape[0] == 0:
        raise DataError(f"{src.train_path}: no normal training rows "
                        f"(normal label {src.normal_label!r})")
    key = config.partition.key
    if key not in table.columns:
        raise DataError(f"partition key {key!r} is not a retained numeric column "
                        f"(have {list(table.columns)})")
    key_raw = values[:, table.columns.index(key)]

    std = fit_standardizer(values, table.columns)
    X_std = apply_standardizer(std, values)
    blocks = partition_indices(key_raw, n_gateways)
    if config.partition.per_gateway_standardize:
        gateways = []
        for gid, idx in enumerate(blocks):
            local = fit_standardizer(values[idx], table.columns)
            gateways.append(GatewayDataset.from_matrix(
                apply_standardizer(local, values[idx]), gateway_id=gid))
    else:
        gateways = [GatewayDataset.from_matrix(X_std[:, idx], gateway_id=gid)
                    for gid, idx in enumerate(blocks)]

    test = None
    if src.test_path is not None:
        if src.label_column is None:
            raise DataError("a labeled test set needs data.label_column")
        test = _load_test_csv(src.test_path, src.label_column,
                              src.normal_label, std)

    return PreparedData(gateways=gateways, standardizer=std,
                        train_scored=X_std[:, np.concatenate(blocks)],
                        test=test, basis=None)


def _check_m(hp: HyperParams, d: int) -> None:
    if hp.m > d:
        raise ConfigError(f"subspace dimension m={hp.m} exceeds the {d} features")


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _write_scores_csv(path: str, scores: np.ndarray,
                      labels: Optional[np.ndarray] = None) -> None:
    lines = ["sample,score" if labels is None else "sample,score,label"]
    for i, s in enumerate(scores):
        row = f"{i},{float(s)!r}"
        if labels is not None:
            row += f",{int(labels[i])}"
        lines.append(row)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _read_scores_csv(path: str) -> np.ndarray:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except FileNotFoundError as exc:
        raise DataError(f"scores file not found: {path}") from exc
    return np.array([float(line.split(",")[1]) for line in lines[1:]], dtype=float)


def _standardizer_payload(std: Standardizer) -> dict:
    return {
        "feature_names": list(std.feature_names),
        "mean": [float(x) for x in std.mean],
        "std": [float(x) for x in std.std],
        "constant_mask": [bool(x) for x in std.constant_mask],
    }


def _standardizer_from_payload(payload: dict) -> Standardizer:
    return Standardizer(mean=np.array(payload["mean"], dtype=float),
                        std=np.array(payload["std"], dtype=float),
                        constant_mask=np.array(payload["constant_mask"], dtype=bool),
                        feature_names=tuple(payload["feature_names"]))


@dataclass(frozen=True)
class FitArtifacts:
    run_dir: str
    result: RunResult
    rounds_completed: int
    final_objective: float
    final_consensus: float
    model_path: str
    history_path: str
    train_scores_path: str
    config_path: str


def _fit_cell(prepared: PreparedData, hp: HyperParams, init_seed: int,
              out_dir: str) -> tuple[RunResult, np.ndarray]:
    """Run federation on prepared data and drop the core artifacts in out_dir."""
    states = [init_state(g, hp.m, init_seed) for g in prepared.gateways]
    result = run_rounds(states, hp)
    os.makedirs(out_dir, exist_ok=True)
    save_matrix(os.path.join(out_dir, MODEL_FILE), result.Z)
    result.history.write_jsonl(os.path.join(out_dir, HISTORY_FILE))
    train_scores = score(result.Z, prepared.train_scored)
    _write_scores_csv(os.path.join(out_dir, TRAIN_SCORES_FILE), train_scores)
    return result, train_scores


def run_fit(config: ExperimentConfig) -> FitArtifacts:
    """Fit the shared projection and persist the model directory.

    Writes the aggregated frame, the per-round history, per-sample training
    scores for threshold calibration, the standardizer, and the resolved
    config snapshot under config.out_dir.
    """
    data_seed, init_seed = seed_split(config.seed)
    prepared = prepare_data(config, data_seed)
    hp = config.hyperparams
    _check_m(hp, prepared.gateways[0].d)

    out_dir = config.out_dir
    result, _ = _fit_cell(prepared, hp, init_seed, out_dir)
    _write_json(os.path.join(out_dir, STANDARDIZER_FILE),
                _standardizer_payload(prepared.standardizer))
    _write_json(os.path.join(out_dir, CONFIG_FILE), config.model_dump())
    if prepared.basis is not None:
        save_matrix(os.path.join(out_dir, BASIS_FILE), prepared.basis)

    final_obj = global_objective(result.gateways, result.Z, hp)
    final_cons = max(float(np.linalg.norm(s.W - result.Z)) for s in result.gateways)
    return FitArtifacts(
        run_dir=out_dir,
        result=result,
        rounds_completed=len(result.history.records),
        final_objective=final_obj,
        final_consensus=final_cons,
        model_path=os.path.join(out_dir, MODEL_FILE),
        history_path=os.path.join(out_dir, HISTORY_FILE),
        train_scores_path=os.path.join(out_dir, TRAIN_SCORES_FILE),
        config_path=os.path.join(out_dir, CONFIG_FILE),
    )


@dataclass(frozen=True)
class DetectArtifacts:
    report: DetectionReport
    report_path: str
    scores_path: str


def load_model_config(model_dir: str) -> ExperimentConfig:
    path = os.path.join(model_dir, CONFIG_FILE)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            mapping = json.load(fh)
    except FileNotFoundError as exc:
        raise DataError(f"{model_dir} is not a fitted model directory "
                        f"(missing {CONFIG_FILE})") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"cannot parse {path}: {exc}") from exc
    # frozen snapshot: the environment must not rewrite a finished run
    return resolve_config(mapping, env={})


def run_detect(model_dir: str, quantile: Optional[float] = None,
               test_path: Optional[str] = None,
               out_dir: Optional[str] = None) -> DetectArtifacts:
    """Score a labeled test set against a fitted model directory.

    The threshold is an empirical quantile of the persisted training scores.
    The test set comes from --test (CSV), the fitted config's test_path, or a
    regeneration of the synthetic draw with the stored seed. Writes report.json
    and test_scores.csv next to the model unless out_dir says otherwise.
    """
    config = load_model_config(model_dir)
    Z = load_matrix(os.path.join(model_dir, MODEL_FILE))
    with open(os.path.join(model_dir, STANDARDIZER_FILE), "r", encoding="utf-8") as fh:
        std = _standardizer_from_payload(json.load(fh))
    train_scores = _read_scores_csv(os.path.join(model_dir, TRAIN_SCORES_FILE))

    q = config.detect.quantile if quantile is None else quantile
    if not (0.0 < q <= 1.0):
        raise ConfigError(f"quantile must be in (0, 1], got {q}")
    threshold = fit_threshold(train_scores, q)

    src = config.data
    if test_path is not None:
        if src.kind == "csv" and src.label_column is not None:
            label_column, normal_label = src.label_column, src.normal_label
        else:
            label_column, normal_label = "label", "0"
        test = _load_test_csv(test_path, label_column, normal_label, std)
    elif src.kind == "csv":
        if src.test_path is None:
            raise DataError("the fitted config has no data.test_path; pass a test csv")
        if src.label_column is None:
            raise DataError("a labeled test set needs data.label_column")
        test = _load_test_csv(src.test_path, src.label_column, src.normal_label, std)
    else:
        data_seed, _ = seed_split(config.seed)
        sd = synth_planted(data_seed, d=src.d, m=src.m, n_normal=src.n_normal,
                           n_anomaly=src.n_anomaly, noise_sigma=src.noise_sigma,
                           anomaly_scale=src.anomaly_scale,
                           n_gateways=config.partition.n_gateways,
                           n_test_normal=src.n_test_normal)
        if sd.test.X.shape[1] == 0:
            raise DataError("the synthetic config draws an empty test set")
        test = sd.test

    report = evaluate(Z, test.X, test.labels, threshold)

    out_dir = model_dir if out_dir is None else out_dir
    os.makedirs(out_dir, exist_ok=True)
    report_path = os.path.join(out_dir, REPORT_FILE)
    scores_path = os.path.join(out_dir, TEST_SCORES_FILE)
    payload = dict(report.to_record())
    payload["quantile"] = q
    payload["config"] = config.model_dump()
    payload["seed"] = config.seed
    _write_json(report_path, payload)
    _write_scores_csv(scores_path, report.scores, labels=test.labels)
    return DetectArtifacts(report=report, report_path=report_path,
                           scores_path=scores_path)


@dataclass(frozen=True)
class SweepArtifacts:
    rows: list[dict]
    csv_path: str
    json_path: str
    out_dir: str


def _cell_name(p: float, q: float) -> str:
    return f"p{p:g}_q{q:g}"


def run_sweep(config: ExperimentConfig, p_values: Sequence[float],
              q_values: Sequence[float]) -> SweepArtifacts:
    """Grid-run fit+detect over (p, q) pairs on one shared data preparation.

    The partition, standardizer, test set, and initializer seed are fixed
    across cells so only the exponents (and the zeroed-penalty baseline cell)
    vary. Cell failures are recorded with status "error" and do not stop the
    sweep. Emits sweep.csv and sweep.json plus one artifact subdirectory per
    cell.
    """
    for v in list(p_values) + list(q_values):
        if not (0.0 <= v < 1.0):
            raise ConfigError(f"sweep exponents must lie in [0, 1), got {v}")
    if not p_values or not q_values:
        raise ConfigError("sweep needs at least one p and one q value")

    data_seed, init_seed = seed_split(config.seed)
    prepared = prepare_data(config, data_seed)
    if prepared.test is None:
        raise DataError("a sweep needs a labeled test set "
                        "(synthetic anomalies or data.test_path)")
    hp = config.hyperparams
    _check_m(hp, prepared.gateways[0].d)

    cells = [("baseline", hp.model_copy(update={
        "lambda1": 0.0, "lambda2": 0.0, "p": 0.0, "q": 0.0}))]
    for p in p_values:
        for q in q_values:
            cells.append((_cell_name(p, q),
                          hp.model_copy(update={"p": float(p), "q": float(q)})))

    os.makedirs(config.out_dir, exist_ok=True)
    rows = []
    for name, hp_cell in cells:
        cell_dir = os.path.join(config.out_dir, name)
        row = {"cell": name, "p": hp_cell.p, "q": hp_cell.q,
               "lambda1": hp_cell.lambda1, "lambda2": hp_cell.lambda2}
        try:
            result, train_scores = _fit_cell(prepared, hp_cell, init_seed, cell_dir)
            threshold = fit_threshold(train_scores, config.detect.quantile)
            report = evaluate(result.Z, prepared.test.X, prepared.test.labels,
                              threshold)
            record = report.to_record()
            _write_json(os.path.join(cell_dir, REPORT_FILE),
                        {**record, "config": config.model_dump(),
                         "seed": config.seed, "quantile": config.detect.quantile})
            row.update(status="ok", **{k: record[k] for k in _METRIC_COLUMNS})
        except FedsspError as exc:
            row.update(status="error", error=str(exc))
        rows.append(row)

    csv_path = os.path.join(config.out_dir, SWEEP_CSV_FILE)
    header = ["cell", "p", "q", "lambda1", "lambda2", "status", *_METRIC_COLUMNS]
    lines = [",".join(header)]
    for row in rows:
        cells_out = []
        for col in header:
            v = row.get(col, "")
            if isinstance(v, float):
                cells_out.append(repr(v))
            else:
                cells_out.append(str(v))
        lines.append(",".join(cells_out))
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")

    json_path = os.path.join(config.out_dir, SWEEP_JSON_FILE)
    _write_json(json_path, {"config": config.model_dump(), "seed": config.seed,
                            "cells": rows})
    return SweepArtifacts(rows=rows, csv_path=csv_path, json_path=json_path,
                          out_dir=config.out_dir)


@dataclass(frozen=True)
class SynthArtifacts:
    train_path: str
    test_path: str
    basis_path: str
    meta_path: str
    n_train: int
    n_test: int


def run_synth(spec: SynthSource, out_dir: str, seed: int = 0) -> SynthArtifacts:
    """Materialize one planted-subspace draw as CSV files plus the true basis.

    train.csv holds the normal samples (features f0..f{d-1}); test.csv adds a
    binary label column; basis_true.fssp stores the generating frame for
    subspace-recovery checks; meta.json records the draw parameters and seed.
    """
    sd = synth_planted(seed, d=spec.d, m=spec.m, n_normal=spec.n_normal,
                       n_anomaly=spec.n_anomaly, noise_sigma=spec.noise_sigma,
                       anomaly_scale=spec.anomaly_scale, n_gateways=1,
                       n_test_normal=spec.n_test_normal)
    header = ",".join([f"f{i}" for i in range(spec.d)] + ["label"])
    os.makedirs(out_dir, exist_ok=True)

    def labeled_lines(X: np.ndarray, labels: np.ndarray) -> list[str]:
        return [",".join(repr(float(x)) for x in X[:, j]) + f",{int(labels[j])}"
                for j in range(X.shape[1])]

    train_path = os.path.join(out_dir, "train.csv")
    train_labels = np.zeros(sd.train.shape[1], dtype=int)
    with open(train_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join([header, *labeled_lines(sd.train, train_labels)]) + "\n")

    test_path = os.path.join(out_dir, "test.csv")
    with open(test_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join([header, *labeled_lines(sd.test.X, sd.test.labels)]) + "\n")

    basis_path = os.path.join(out_dir, BASIS_FILE)
    save_matrix(basis_path, sd.basis)

    meta_path = os.path.join(out_dir, "meta.json")
    n_test_normal = spec.n_anomaly if spec.n_test_normal is None else spec.n_test_normal
    _write_json(meta_path, {
        "anomaly_scale": spec.anomaly_scale, "d": spec.d, "m": spec.m,
        "n_anomaly": spec.n_anomaly, "n_normal": spec.n_normal,
        "n_test_normal": n_test_normal, "noise_sigma": spec.noise_sigma,
        "seed": seed,
    })
    return SynthArtifacts(train_path=train_path, test_path=test_path,
                          basis_path=basis_path, meta_path=meta_path,
                          n_train=sd.train.shape[1], n_test=sd.test.X.shape[1])
