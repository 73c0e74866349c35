"""Request and response bodies for the HTTP service."""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field

from ..config import ExperimentConfig, SynthSource


class HealthResponse(BaseModel):
    status: str
    version: str


class FitRequest(BaseModel):
    config: ExperimentConfig


class FitResponse(BaseModel):
    run_dir: str
    rounds_completed: int
    stopped: str
    final_objective: float
    final_consensus: float
    model_path: str
    history_path: str
    train_scores_path: str
    config_path: str


class DetectRequest(BaseModel):
    model_dir: str
    quantile: Optional[float] = None
    test_path: Optional[str] = None
    out_dir: Optional[str] = None


class MetricsRecord(BaseModel):
    acc: float
    pre: float
    recall: float
    fnr: float
    f1: float
    threshold: float
    tp: int
    fp: int
    tn: int
    fn: int
    degenerate: list[str] = Field(default_factory=list)


class DetectResponse(BaseModel):
    report: MetricsRecord
    report_path: str
    scores_path: str


class SweepRequest(BaseModel):
    config: ExperimentConfig
    p_values: list[float]
    q_values: list[float]


class SweepCell(BaseModel):
    cell: str
    p: float
    q: float
    lambda1: float
    lambda2: float
    status: str
    error: Optional[str] = None
    acc: Optional[float] = None
    pre: Optional[float] = None
    recall: Optional[float] = None
    fnr: Optional[float] = None
    f1: Optional[float] = None
    threshold: Optional[float] = None
    tp: Optional[int] = None
    fp: Optional[int] = None
    tn: Optional[int] = None
    fn: Optional[int] = None


class SweepResponse(BaseModel):
    cells: list[SweepCell]
    csv_path: str
    json_path: str
    out_dir: str


class SynthRequest(BaseModel):
    spec: SynthSource
    out_dir: str
    seed: int = 0


class SynthResponse(BaseModel):
    train_path: str
    test_path: str
    basis_path: str
    meta_path: str
    n_train: int
    n_test: int
