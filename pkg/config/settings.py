"""
Run configuration: JSON file, CLI flags and environment, merged in that priority
(CLI > STEADY_THREADS > file > built-in defaults).
"""
import json
import os
from dataclasses import asdict, dataclass, field
from datetime import datetime
from enum import Enum
from typing import Any, Dict, List, Optional

from common.constants import (
    CONFIG_VERSION,
    DEFAULT_DESIGN_LR,
    DEFAULT_DESIGN_POWER,
    DEFAULT_DESIGN_STEPS,
    DEFAULT_CRB_TRIALS,
    DEFAULT_DURATION,
    DEFAULT_LSQ_P,
    DEFAULT_LSQ_TRIALS,
    DEFAULT_PULSES,
    DEFAULT_QUBITS,
    DEFAULT_SHOTS,
    DEFAULT_SYSTEM_SEED,
    DEFAULT_THREADS,
    DEFAULT_VALIDATION_DURATION,
    DEFAULT_VALIDATION_PULSES,
    DEFAULT_VALIDATION_SEED,
    ENV_THREADS,
    RUNS_DIRECTORY,
    AnnealSchedule,
    DistanceKind,
    ErrorMessage,
    InitKind,
    IntegrationMethod,
    ModelKind,
    Scenario,
)
from common.errors import ConfigError
from core.estimation import FitConfig
from utils.config_validator import ConfigValidator
from utils.validators import normalize_path, validate_input_file, validate_output_dir


@dataclass(frozen=True)
class SystemSection:
    qubits: int = DEFAULT_QUBITS
    seed: int = DEFAULT_SYSTEM_SEED
    decay: float = 0.0
    undriven_coupling: Optional[float] = None


@dataclass(frozen=True)
class ModelSection:
    kind: ModelKind = ModelKind.LINEAR_MIX
    drift: bool = True
    lindblad: bool = False
    integrator: IntegrationMethod = IntegrationMethod.RK4
    steps: Optional[int] = None


@dataclass(frozen=True)
class DataSection:
    pulses: int = DEFAULT_PULSES
    shots: int = DEFAULT_SHOTS
    duration: float = DEFAULT_DURATION
    spam: float = 0.0
    seed: int = 0
    dataset: Optional[str] = None     # existing dataset.json to fit instead of generating
    pulse_file: Optional[str] = None  # designed pulse set to measure in `generate`
    report: Optional[str] = None      # fit_report.json read by `validate` and `design`


@dataclass(frozen=True)
class GridSection:
    pulses: List[int] = field(default_factory=lambda: [DEFAULT_PULSES])
    shots: List[int] = field(default_factory=lambda: [DEFAULT_SHOTS])
    durations: List[float] = field(default_factory=lambda: [DEFAULT_DURATION])
    spam: List[float] = field(default_factory=lambda: [0.0])
    decay: List[float] = field(default_factory=lambda: [0.0])
    coupling: List[float] = field(default_factory=lambda: [0.0])
    distances: List[DistanceKind] = field(default_factory=lambda: list(DistanceKind))
    trials: int = DEFAULT_LSQ_TRIALS
    p: float = DEFAULT_LSQ_P
    fits: int = DEFAULT_CRB_TRIALS


@dataclass(frozen=True)
class ValidationSection:
    pulses: int = DEFAULT_VALIDATION_PULSES
    duration: float = DEFAULT_VALIDATION_DURATION
    seed: int = DEFAULT_VALIDATION_SEED


@dataclass(frozen=True)
class DesignSection:
    steps: int = DEFAULT_DESIGN_STEPS
    lr: float = DEFAULT_DESIGN_LR
    power: float = DEFAULT_DESIGN_POWER


# Field kinds: int, float, bool, str, int?, float?, str?, [int], [float], an Enum class, or [Enum]
SCHEMA: Dict[str, Dict[str, Any]] = {
    "system": {"qubits": "int", "seed": "int", "decay": "float", "undriven_coupling": "float?"},
    "model": {"kind": ModelKind, "drift": "bool", "lindblad": "bool", "integrator": IntegrationMethod,
              "steps": "int?"},
    "data": {"pulses": "int", "shots": "int", "duration": "float", "spam": "float", "seed": "int",
             "dataset": "str?", "pulse_file": "str?", "report": "str?"},
    "grid": {"pulses": "[int]", "shots": "[int]", "durations": "[float]", "spam": "[float]",
             "decay": "[float]", "coupling": "[float]", "distances": [DistanceKind], "trials": "int",
             "p": "float", "fits": "int"},
    "fit": {"distance": DistanceKind, "lr0": "float", "lr_decay": "float", "lambda0": "float",
            "anneal": AnnealSchedule, "lambda_decay": "float", "batch_size": "int", "max_epochs": "int",
            "tol": "float", "init_scale": "float", "init": InitKind, "restarts": "int", "seed": "int",
            "patience": "int", "plateau_threshold": "float", "min_lr": "float", "cost_ema": "float",
            "validate_every": "int"},
    "validation": {"pulses": "int", "duration": "float", "seed": "int"},
    "design": {"steps": "int", "lr": "float", "power": "float"},
}
TOP_LEVEL = {"version", "scenario", "description"} | set(SCHEMA)


def _type_error(key: str, expected: str, value: Any) -> ConfigError:
    return ConfigError(ErrorMessage.CONFIG_TYPE.format(key=key, expected=expected, found=value))


def _coerce(kind: Any, value: Any, key: str) -> Any:
    """Check one JSON value against its field kind."""
    if isinstance(kind, list):
        if not isinstance(value, list):
            raise _type_error(key, f"a list of {kind[0].__name__}", value)
        return [_coerce(kind[0], item, f"{key}[{i}]") for i, item in enumerate(value)]
    if isinstance(kind, type) and issubclass(kind, Enum):
        try:
            return kind(value)
        except ValueError:
            raise _type_error(key, f"one of {[m.value for m in kind]}", value) from None
    if kind.endswith("?"):
        return None if value is None else _coerce(kind[:-1], value, key)
    if kind.startswith("["):
        if not isinstance(value, list):
            raise _type_error(key, f"a list of {kind[1:-1]}", value)
        return [_coerce(kind[1:-1], item, f"{key}[{i}]") for i, item in enumerate(value)]
    if kind == "bool":
        if not isinstance(value, bool):
            raise _type_error(key, "a boolean", value)
        return value
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise _type_error(key, "an integer", value)
        return value
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise _type_error(key, "a number", value)
        return float(value)
    if not isinstance(value, str):
        raise _type_error(key, "a string", value)
    return value


def parse_sections(raw: Dict[str, Any]) -> Dict[str, Dict[str, Any]]:
    """
    Validate the structure of a config document.

    Returns:
        {section: {field: coerced value}} for the fields present in `raw`

    Raises:
        ConfigError: Missing or wrong version, unknown keys (reported with their
            dotted path) or values of the wrong type
    """
    if not isinstance(raw, dict):
        raise ConfigError(ErrorMessage.CONFIG_TYPE.format(key="<root>", expected="an object", found=raw))
    if raw.get("version") != CONFIG_VERSION:
        raise ConfigError(ErrorMessage.CONFIG_VERSION.format(found=raw.get("version"), expected=CONFIG_VERSION))
    for key in raw:
        if key not in TOP_LEVEL:
            raise ConfigError(ErrorMessage.CONFIG_UNKNOWN_KEY.format(key=key))

    sections: Dict[str, Dict[str, Any]] = {}
    for name, fields in SCHEMA.items():
        section = raw.get(name, {})
        if not isinstance(section, dict):
            raise _type_error(name, "an object", section)
        parsed = {}
        for key, value in section.items():
            if key not in fields:
                raise ConfigError(ErrorMessage.CONFIG_UNKNOWN_KEY.format(key=f"{name}.{key}"))
            parsed[key] = _coerce(fields[key], value, f"{name}.{key}")
        sections[name] = parsed
    return sections


def load_config_file(path: str) -> Dict[str, Any]:
    if not os.path.isfile(path):
        raise ConfigError(ErrorMessage.CONFIG_NOT_FOUND.format(path=path))
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(ErrorMessage.CONFIG_PARSE_FAILED.format(path=path, error=e)) from e


class Config:
    def __init__(self, args):
        self.args = args
        self.scenario = Scenario(args.scenario)
        self.full_scale = bool(getattr(args, "full_scale", False))
        self.quiet = bool(getattr(args, "quiet", False))

        # Session
        self.timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
        self.session_id = f"run_{self.timestamp}"

        self.config_path = normalize_path(args.config) if getattr(args, "config", None) else None
        if self.config_path:
            self._require_file(self.config_path)
        raw = load_config_file(self.config_path) if self.config_path else {"version": CONFIG_VERSION}
        declared = raw.get("scenario")
        if declared is not None and declared != self.scenario.value:
            raise ConfigError(ErrorMessage.SCENARIO_MISMATCH.format(
                declared=declared, requested=self.scenario.value))
        self.description = raw.get("description", "")
        sections = parse_sections(raw)

        # Seed override: --seed replaces the dataset seed
        if getattr(args, "seed", None) is not None:
            sections["data"]["seed"] = int(args.seed)

        self.system = SystemSection(**sections["system"])
        self.model = ModelSection(**sections["model"])
        self.data = DataSection(**sections["data"])
        self.grid = GridSection(**sections["grid"])
        self.fit = FitConfig(**sections["fit"])
        self.validation = ValidationSection(**sections["validation"])
        self.design = DesignSection(**sections["design"])
        self._validate()

        self.threads = self._resolve_threads()
        out = getattr(args, "out", None)
        self.out_dir = normalize_path(out) if out else os.path.join(RUNS_DIRECTORY, f"{self.scenario.value}_{self.timestamp}")
        ok, msg = validate_output_dir(self.out_dir)
        if not ok:
            raise ConfigError(f"{ErrorMessage.OUTPUT_NOT_WRITABLE.format(path=self.out_dir)} ({msg})")

    @staticmethod
    def _require_file(path: str) -> None:
        ok, msg = validate_input_file(path)
        if not ok:
            raise ConfigError(f"{ErrorMessage.INPUT_UNREADABLE.format(path=path)} ({msg})")

    def _validate(self) -> None:
        v = ConfigValidator
        v.validate_system(self.system)
        v.validate_spam(self.data.spam, self.system.qubits)
        self.data = v.validate_data(self.data, self.full_scale)
        self.grid = v.validate_grid(self.grid, self.scenario, self.system.qubits, self.full_scale)
        v.validate_model(self.model)
        v.validate_fit(self.fit, self.model)
        v.validate_validation(self.validation)
        v.validate_design(self.design)
        for path in (self.data.dataset, self.data.pulse_file, self.data.report):
            if path:
                self._require_file(path)

    def _resolve_threads(self) -> int:
        requested = getattr(self.args, "threads", None)
        if requested is None:
            env = os.environ.get(ENV_THREADS)
            if env is not None:
                try:
                    requested = int(env)
                except ValueError:
                    raise ConfigError(ErrorMessage.CONFIG_TYPE.format(
                        key=ENV_THREADS, expected="an integer", found=env)) from None
        if requested is None:
            requested = DEFAULT_THREADS
        return ConfigValidator.validate_threads(requested)

    @property
    def seeds(self) -> Dict[str, int]:
        return {"system": self.system.seed, "data": self.data.seed, "fit": self.fit.seed,
                "validation": self.validation.seed}

    def to_dict(self) -> Dict[str, Any]:
        """Echo of the effective configuration, as written to the manifest."""
        def section(obj) -> Dict[str, Any]:
            out = {}
            for key, value in asdict(obj).items():
                if isinstance(value, Enum):
                    value = value.value
                elif isinstance(value, list):
                    value = [item.value if isinstance(item, Enum) else item for item in value]
                out[key] = value
            return out

        return {
            "version": CONFIG_VERSION,
            "scenario": self.scenario.value,
            "system": section(self.system),
            "model": section(self.model),
            "data": section(self.data),
            "grid": section(self.grid),
            "fit": self.fit.to_dict(),
            "validation": section(self.validation),
            "design": section(self.design),
            "threads": self.threads,
            "full_scale": self.full_scale,
        }
