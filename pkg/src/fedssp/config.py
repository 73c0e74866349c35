"""Experiment configuration models and the YAML loader.

Configs are plain YAML mappings mirroring these models; unknown keys are
rejected everywhere. Dotted --set overrides and the FEDSSP_SEED environment
variable are applied to the raw mapping before validation.
"""

from __future__ import annotations

import os
from typing import Annotated, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError
from .manifold import CgOptions

SEED_ENV_VAR = "FEDSSP_SEED"


class _StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class HyperParams(_StrictModel):
    """Solver weights, exponents, and iteration controls.

    lambda1 weighs the row-wise penalty on V, lambda2 the element-wise penalty
    on U; p and q are the matching exponents in [0, 1). beta1..3 couple W to
    U, V, and the global Z; tau1..4 are the proximal damping weights of the
    four block updates. m is the subspace dimension.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    lambda1: float = Field(default=0.0, ge=0.0)
    lambda2: float = Field(default=0.0, ge=0.0)
    p: float = Field(default=0.5, ge=0.0, lt=1.0)
    q: float = Field(default=0.5, ge=0.0, lt=1.0)
    beta1: float = Field(default=1.0, gt=0.0)
    beta2: float = Field(default=1.0, gt=0.0)
    beta3: float = Field(default=1.0, gt=0.0)
    tau1: float = Field(default=1e-3, gt=0.0)
    tau2: float = Field(default=1e-3, gt=0.0)
    tau3: float = Field(default=1e-3, gt=0.0)
    tau4: float = Field(default=1e-3, gt=0.0)
    m: int = Field(ge=1)
    rounds: int = Field(default=100, ge=0)
    outer_tol: float = Field(default=1e-6, ge=0.0)
    inner_max_iters: int = Field(default=100, ge=1)
    inner_grad_tol: float = Field(default=1e-6, ge=0.0)

    def cg_options(self) -> CgOptions:
        return CgOptions(max_iters=self.inner_max_iters, grad_tol=self.inner_grad_tol)


class CsvSource(_StrictModel):
    """Train/test tables on disk (CSV with a header row, comma-delimited)."""

    kind: Literal["csv"] = "csv"
    train_path: str
    test_path: Optional[str] = None
    label_column: Optional[str] = None
    normal_label: str = "0"
    columns: Optional[list[str]] = None


class SynthSource(_StrictModel):
    """Planted-subspace generator for desk-scale verification.

    Normal samples are basis @ g + noise_sigma * eps with g standard normal in
    m dimensions; anomalies add anomaly_scale times a random unit direction
    from the orthogonal complement of the basis. The labeled test set holds
    n_test_normal fresh normal samples (defaults to n_anomaly) plus the
    anomalies.
    """

    kind: Literal["synth"] = "synth"
    d: int = Field(ge=2)
    m: int = Field(ge=1)
    n_normal: int = Field(ge=1)
    n_anomaly: int = Field(default=0, ge=0)
    noise_sigma: float = Field(default=0.1, ge=0.0)
    anomaly_scale: float = Field(default=3.0, ge=0.0)
    n_test_normal: Optional[int] = Field(default=None, ge=0)

    @model_validator(mode="after")
    def _check_dims(self) -> "SynthSource":
        if self.m >= self.d:
            raise ValueError(f"planted subspace needs m < d, got m={self.m}, d={self.d}")
        return self


DataSource = Annotated[Union[CsvSource, SynthSource], Field(discriminator="kind")]


class PartitionConfig(_StrictModel):
    """Non-i.i.d. split: sort by one raw feature, cut into contiguous blocks."""

    key: str = "dst_bytes"
    n_gateways: int = Field(default=20, ge=1)
    per_gateway_standardize: bool = False


class DetectConfig(_StrictModel):
    quantile: float = Field(default=0.95, gt=0.0, le=1.0)


class ExperimentConfig(_StrictModel):
    """Everything one run needs: data source, split, weights, seed, outputs."""

    seed: int = 0
    out_dir: str
    data: DataSource
    partition: PartitionConfig = PartitionConfig()
    hyperparams: HyperParams
    detect: DetectConfig = DetectConfig()


def parse_override(spec: str) -> tuple[list[str], object]:
    """Split one dotted KEY=VALUE override; the value is parsed as YAML."""
    key, sep, raw = spec.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"override must look like section.key=value, got {spec!r}")
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse override value {raw!r}: {exc}") from exc
    return key.strip().split("."), value


def apply_overrides(mapping: dict, overrides: list[str]) -> dict:
    """Apply dotted KEY=VALUE overrides to a raw config mapping (in place)."""
    for spec in overrides:
        path, value = parse_override(spec)
        node = mapping
        for part in path[:-1]:
            nxt = node.get(part)
            if not isinstance(nxt, dict):
                nxt = {}
                node[part] = nxt
            node = nxt
        node[path[-1]] = value
    return mapping


def resolve_config(mapping: dict, overrides: list[str] | None = None,
                   env: dict | None = None) -> ExperimentConfig:
    """Validate a raw mapping into an ExperimentConfig.

    Flag overrides beat the file; FEDSSP_SEED beats everything.
    """
    if not isinstance(mapping, dict):
        raise ConfigError(f"config must be a mapping, got {type(mapping).__name__}")
    mapping = dict(mapping)
    if overrides:
        apply_overrides(mapping, overrides)
    env = os.environ if env is None else env
    if SEED_ENV_VAR in env:
        try:
            mapping["seed"] = int(env[SEED_ENV_VAR])
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got "
                              f"{env[SEED_ENV_VAR]!r}") from exc
    try:
        return ExperimentConfig.model_validate(mapping)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str, overrides: list[str] | None = None,
                env: dict | None = None) -> ExperimentConfig:
    """Read a YAML config file and validate it."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            mapping = yaml.safe_load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if mapping is None:
        mapping = {}
    return resolve_config(mapping, overrides=overrides, env=env)
