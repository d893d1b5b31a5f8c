"""
Загрузка конфигурации запуска: JSON/YAML -> jsonschema -> pydantic.
"""

import copy
import json
import logging
import os
from typing import Any, Dict, List, Optional

import jsonschema
import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from core_model import BareParams, DispersiveParams, DriveSpec, ProbeSpec, derive_dispersive, operating_probe
from simulation_errors import ConfigError

logger = logging.getLogger(__name__)

CONFIG_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "config")
SCHEMA_PATH = os.path.join(CONFIG_DIR, "config_schema.json")
DEFAULTS_PATH = os.path.join(CONFIG_DIR, "reference_defaults.json")


def _axis(value: Any) -> List[float]:
    """Список чисел или {start, stop, num}"""
    if isinstance(value, dict):
        return [float(v) for v in np.linspace(value["start"], value["stop"], int(value["num"]))]
    return [float(v) for v in value]


class DriveSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    omega_d: float = Field(..., gt=0)
    Omega_d: Optional[float] = Field(None, ge=0)  # None -> согласование импедансов
    band_drives: List[float] = Field(default_factory=list)
    match_bracket: List[float] = Field(default_factory=lambda: [0.1, 40.0], min_length=2, max_length=2)

    @model_validator(mode="after")
    def _bracket(self) -> "DriveSection":
        lo, hi = self.match_bracket
        if not 0 <= lo < hi:
            raise ValueError(f"match_bracket must satisfy 0 <= lo < hi, got {self.match_bracket}")
        return self


class ProbeSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    omega_p: Optional[float] = Field(None, gt=0)  # None -> ω_b − 2χ_b
    n_b_mean: float = Field(0.05, ge=0)


class PulseSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    omega_s: float = Field(..., gt=0)
    length: float = Field(..., gt=0)


class IntegratorSettings(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    dt: float = Field(0.1, gt=0)
    background_dt: float = Field(0.2, gt=0)
    record_dt: float = Field(1.0, gt=0)
    tmax: float = Field(2000.0, gt=0)
    verify_step: bool = True
    check_truncation: bool = True

    @model_validator(mode="after")
    def _record_step(self) -> "IntegratorSettings":
        if self.record_dt < self.dt:
            raise ValueError(f"record_dt ({self.record_dt}) must not be smaller than dt ({self.dt})")
        return self


class GridSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    rates_Omega_d: List[float] = Field(..., min_length=1)
    map_Omega_d: List[float] = Field(..., min_length=1)
    map_omega_s: List[float] = Field(..., min_length=1)
    n_b: List[float] = Field(..., min_length=1)
    Delta_t: List[float] = Field(..., min_length=1)
    lengths: List[float] = Field(..., min_length=1)
    efficiency_Omega_d: List[float] = Field(..., min_length=1)
    efficiency_omega_s: List[float] = Field(..., min_length=1)
    Gamma_inv_us: List[float] = Field(..., min_length=1)
    appendix_Delta_t: List[float] = Field(..., min_length=1)

    @field_validator("*", mode="before")
    @classmethod
    def _expand(cls, value: Any) -> List[float]:
        return _axis(value)

    @field_validator("n_b", "Delta_t", "lengths", "Gamma_inv_us", "appendix_Delta_t",
                     "rates_Omega_d", "map_Omega_d", "efficiency_Omega_d")
    @classmethod
    def _non_negative(cls, value: List[float]) -> List[float]:
        if any(v < 0 for v in value):
            raise ValueError("grid values must be non-negative")
        return value


class RunSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    out: str = "results"
    workers: Optional[int] = Field(None, ge=1)


class LoggingSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    level: str = "INFO"
    file: str = "logs/lambda_scope.log"


class RunConfig(BaseModel):
    """Полная конфигурация запуска"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    device: BareParams
    drive: DriveSection
    probe: ProbeSection
    pulse: PulseSection
    integrator: IntegratorSettings
    grids: GridSpec
    run: RunSection = RunSection()
    logging: LoggingSection = LoggingSection()
    source: Optional[str] = None

    def dispersive(self) -> DispersiveParams:
        return derive_dispersive(self.device)

    def drive_spec(self, Omega_d: Optional[float] = None) -> DriveSpec:
        value = self.drive.Omega_d if Omega_d is None else Omega_d
        return DriveSpec(omega_d=self.drive.omega_d, Omega_d=value or 0.0)

    def probe_spec(self, n_b_mean: Optional[float] = None) -> ProbeSpec:
        dp = self.dispersive()
        n_b = self.probe.n_b_mean if n_b_mean is None else n_b_mean
        if self.probe.omega_p is None:
            return operating_probe(dp, n_b)
        return ProbeSpec(omega_p=self.probe.omega_p, n_b_mean=n_b)


def deep_merge(base: Dict[str, Any], update: Dict[str, Any]) -> Dict[str, Any]:
    """Рекурсивное наложение словарей"""
    merged = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict) and not _is_linspace(value):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _is_linspace(value: Dict[str, Any]) -> bool:
    return set(value) == {"start", "stop", "num"}


def load_document(path: str) -> Dict[str, Any]:
    """Чтение JSON или YAML документа"""
    if not os.path.isfile(path):
        raise ConfigError(f"Config file not found: {path}", {"path": path})
    try:
        with open(path, 'r', encoding='utf-8') as f:
            if path.endswith((".yaml", ".yml")):
                document = yaml.safe_load(f) or {}
            else:
                document = json.load(f)
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise ConfigError(f"Failed to parse config {path}: {e}", {"path": path})
    if not isinstance(document, dict):
        raise ConfigError(f"Config root must be an object: {path}", {"path": path})
    return document


def validate_document(document: Dict[str, Any], schema_path: str = SCHEMA_PATH) -> None:
    with open(schema_path, 'r', encoding='utf-8') as f:
        schema = json.load(f)
    try:
        jsonschema.validate(instance=document, schema=schema)
    except jsonschema.ValidationError as e:
        location = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"Config schema violation at {location}: {e.message}",
                          {"path": location, "validator": e.validator})


def apply_overrides(document: Dict[str, Any], out: Optional[str] = None, workers: Optional[int] = None,
                    dt: Optional[float] = None, na_max: Optional[int] = None,
                    nb_max: Optional[int] = None, level: Optional[str] = None) -> Dict[str, Any]:
    """Параметры командной строки поверх документа"""
    update: Dict[str, Any] = {}
    if out is not None:
        update.setdefault("run", {})["out"] = out
    if workers is not None:
        update.setdefault("run", {})["workers"] = workers
    if dt is not None:
        update.setdefault("integrator", {})["dt"] = dt
    if na_max is not None:
        update.setdefault("device", {})["n_a_max"] = na_max
    if nb_max is not None:
        update.setdefault("device", {})["n_b_max"] = nb_max
    if level is not None:
        update.setdefault("logging", {})["level"] = level
    return deep_merge(document, update)


def build_config(document: Dict[str, Any], source: Optional[str] = None) -> RunConfig:
    validate_document(document)
    try:
        return RunConfig.model_validate({**document, "source": source})
    except ValidationError as e:
        first = e.errors()[0]
        location = ".".join(str(p) for p in first["loc"])
        raise ConfigError(f"Invalid config value at {location}: {first['msg']}",
                          {"errors": [{"loc": ".".join(str(p) for p in err["loc"]), "msg": err["msg"]}
                                      for err in e.errors()]})


def load_config(path: Optional[str] = None, **overrides: Any) -> RunConfig:
    """Опорные значения, затем файл, затем параметры командной строки"""
    document = load_document(DEFAULTS_PATH)
    if path is not None:
        document = deep_merge(document, load_document(path))
    document = apply_overrides(document, **overrides)
    config = build_config(document, source=path or DEFAULTS_PATH)
    logger.debug(f"Loaded config from {config.source}")
    return config


__all__ = [
    'RunConfig',
    'DriveSection',
    'ProbeSection',
    'PulseSection',
    'IntegratorSettings',
    'GridSpec',
    'RunSection',
    'LoggingSection',
    'deep_merge',
    'load_document',
    'validate_document',
    'apply_overrides',
    'build_config',
    'load_config',
]
