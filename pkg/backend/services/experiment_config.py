"""
Experiment configuration: flat KEY=VALUE files read with python-dotenv and
validated with pydantic.

Sections are key prefixes (MODEL_, GRID_, NOISE_, MITIGATION_, SPECTRUM_,
BUDGET_, EUCLIDEAN_); MODE, SEED, SHOTS, OUTPUT_DIR, Q_LIST, ORDERINGS,
T_CONNECTIVITY, STEPS, FIDELITY and RELATIVE_ERROR are top level. Values are
taken from the file only; the process environment is never consulted.
"""

from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Tuple
import hashlib
import json
import logging

import numpy as np
from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

import config
from .exceptions import ConfigError
from .mitigation_service import MitigationConfig
from .model_service import ModelParams, MomentumVector, TrotterOrdering
from .noisy_sim_service import NoiseModel

logger = logging.getLogger(__name__)

Mode = Literal["correlator", "spectrum", "budget", "counts", "euclidean"]


class GridSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    start: float = 0.0
    stop: float = 0.5
    points: int = Field(default=11, ge=1)

    @property
    def taus(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.points)


class NoiseSettings(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    enabled: bool = True
    p1: float = Field(default=config.DEFAULT_P1, ge=0.0, le=1.0)
    p2: float = Field(default=config.DEFAULT_P2, ge=0.0, le=1.0)
    readout_flip_0: float = Field(default=config.DEFAULT_READOUT_FLIP, ge=0.0, lt=0.5)
    readout_flip_1: Optional[float] = Field(default=None, ge=0.0, lt=0.5)

    def to_noise_model(self) -> Optional[NoiseModel]:
        if not self.enabled:
            return None
        return NoiseModel.depolarizing(self.p1, self.p2, self.readout_flip_0, self.readout_flip_1)


class SpectrumSettings(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    source: Literal["exact", "trotter", "noisy"] = "exact"
    delta: float = Field(default=0.2, gt=0.0)
    delta_omega: float = Field(default=0.5, gt=0.0)
    max_step: float = Field(default=0.1, gt=0.0)


class BudgetSettings(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    epsilon: float = Field(default=0.01, gt=0.0)


class EuclideanSettings(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    amplitudes: Tuple[float, ...] = (1e-3, 1e-2, 1e-1)
    level: Optional[int] = None
    tau_stop: float = Field(default=2.0, gt=0.0)
    tau_points: int = Field(default=21, ge=1)

    @field_validator("amplitudes")
    @classmethod
    def _in_unit_interval(cls, amplitudes):
        if not amplitudes or any(not 0.0 <= a < 1.0 for a in amplitudes):
            raise ValueError("contamination amplitudes must lie in [0, 1)")
        return tuple(amplitudes)

    @field_validator("level")
    @classmethod
    def _excited_level(cls, level):
        if level is not None and not 0 < level < 2 ** config.N_TARGET_QUBITS:
            raise ValueError(f"level must select an excited state in 1..{2 ** config.N_TARGET_QUBITS - 1}")
        return level


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    mode: Mode = "correlator"
    model: ModelParams = ModelParams()
    q_list: Tuple[MomentumVector, ...] = (MomentumVector(m=0, n=1),)
    orderings: Tuple[TrotterOrdering, ...] = tuple(TrotterOrdering)
    grid: GridSpec = GridSpec()
    shots: int = Field(default=config.DEFAULT_SHOTS, ge=1)
    steps: int = Field(default=1, ge=1)
    fidelity: float = Field(default=1.0, gt=0.0, le=1.0)
    relative_error: float = Field(default=config.DEFAULT_RELATIVE_ERROR, gt=0.0)
    noise: NoiseSettings = NoiseSettings()
    mitigation: MitigationConfig = MitigationConfig()
    spectrum: SpectrumSettings = SpectrumSettings()
    budget: BudgetSettings = BudgetSettings()
    euclidean: EuclideanSettings = EuclideanSettings()
    seed: int = config.DEFAULT_SEED
    output_dir: str = "results"
    t_connectivity: bool = False

    @model_validator(mode="after")
    def _non_empty(self):
        if not self.q_list:
            raise ValueError("Q_LIST must name at least one momentum")
        if not self.orderings:
            raise ValueError("ORDERINGS must name at least one ordering")
        return self

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON dump, leaving out where results are written"""
        canonical = json.dumps(self.model_dump(mode="json", exclude={"output_dir"}), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


_SECTIONS = {
    "MODEL_": "model",
    "GRID_": "grid",
    "NOISE_": "noise",
    "MITIGATION_": "mitigation",
    "SPECTRUM_": "spectrum",
    "BUDGET_": "budget",
    "EUCLIDEAN_": "euclidean",
}
_MODEL_KEYS = {"t": "t", "u": "U", "v": "V", "e_a": "e_A", "e_b": "e_B", "zzz_coefficient": "zzz_coefficient"}
_LIST_FIELDS = {"q_list", "orderings", "scales", "amplitudes"}


def _split_list(value: str) -> List[str]:
    return [item.strip() for item in value.replace(";", ",").split(",") if item.strip()]


def _coerce(field: str, value: str) -> Any:
    if field in _LIST_FIELDS:
        items = _split_list(value)
        if field == "q_list":
            return [MomentumVector.parse(item) for item in items]
        return items
    return value


def parse_config_values(values: Mapping[str, Optional[str]]) -> Dict[str, Any]:
    """Turn flat KEY=VALUE pairs into the nested mapping ExperimentConfig validates"""
    nested: Dict[str, Any] = {}
    for raw_key, raw_value in values.items():
        if raw_value is None:
            raise ConfigError(f"key {raw_key} has no value")
        key = raw_key.strip().upper()
        value = raw_value.strip()
        for prefix, section in _SECTIONS.items():
            if key.startswith(prefix):
                field = key[len(prefix):].lower()
                if section == "model":
                    field = _MODEL_KEYS.get(field, field)
                nested.setdefault(section, {})[field] = _coerce(field, value)
                break
        else:
            field = key.lower()
            nested[field] = _coerce(field, value)
    return nested


def build_experiment_config(values: Mapping[str, Optional[str]], overrides: Optional[Mapping[str, Any]] = None) -> ExperimentConfig:
    """
    Validate flat configuration values

    Args:
        values: KEY=VALUE pairs
        overrides: Top-level fields that replace file values (command-line flags)

    Returns:
        ExperimentConfig

    Raises:
        ConfigError: If any value is missing, unknown or invalid
    """
    try:
        nested = parse_config_values(values)
        for key, value in (overrides or {}).items():
            if value is not None:
                nested[key] = value
        return ExperimentConfig.model_validate(nested)
    except (ValidationError, ValueError) as error:
        raise ConfigError(f"invalid experiment configuration: {error}") from error


def load_experiment_config(path: Optional[str], overrides: Optional[Mapping[str, Any]] = None) -> ExperimentConfig:
    """
    Read and validate an experiment configuration file

    Args:
        path: KEY=VALUE file, or None for all defaults
        overrides: Values from command-line flags

    Returns:
        ExperimentConfig
    """
    values: Mapping[str, Optional[str]] = {}
    if path is not None:
        file_path = Path(path)
        if not file_path.is_file():
            raise FileNotFoundError(f"configuration file not found: {path}")
        values = dotenv_values(file_path, interpolate=False)
    experiment = build_experiment_config(values, overrides)
    logger.info("loaded %s configuration (hash %s)", experiment.mode, experiment.config_hash()[:12])
    return experiment
