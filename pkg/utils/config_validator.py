"""
Configuration validation utilities for STEADY.
Ensures all configuration values are within acceptable ranges before a run starts.
"""
import dataclasses
import warnings
from typing import List, Sequence

from common.constants import (
    DESK_BUDGET_CAP,
    MAX_QUBITS,
    MAX_THREADS,
    MIN_THREADS,
    ErrorMessage,
    InitKind,
    ModelKind,
    Scenario,
)
from common.errors import ConfigError


def _range_error(name: str, bounds: str, value) -> ConfigError:
    return ConfigError(ErrorMessage.VALUE_RANGE.format(name=name, bounds=bounds, value=value))


class ConfigValidator:
    """Validates configuration parameters before use."""

    @staticmethod
    def validate_threads(count: int) -> int:
        """
        Validate and normalize worker count.

        Returns:
            Validated worker count (capped to MAX_THREADS)

        Raises:
            ConfigError: If count is below MIN_THREADS
        """
        if count < MIN_THREADS:
            raise ConfigError(ErrorMessage.THREAD_COUNT_INVALID.format(min=MIN_THREADS, max=MAX_THREADS))
        if count > MAX_THREADS:
            warnings.warn(
                f"Thread count {count} exceeds maximum {MAX_THREADS}, capping to {MAX_THREADS}"
            )
            return MAX_THREADS
        return count

    @staticmethod
    def validate_budget(name: str, value: int, full_scale: bool) -> int:
        """Cap P or S at DESK_BUDGET_CAP unless full scale is requested."""
        if value > DESK_BUDGET_CAP and not full_scale:
            warnings.warn(
                f"{name} = {value} exceeds the desk budget {DESK_BUDGET_CAP}, capping "
                f"(pass --full-scale to keep it)"
            )
            return DESK_BUDGET_CAP
        return value

    @staticmethod
    def validate_grid_list(name: str, values: Sequence, minimum: float, full_scale: bool = True,
                           budget: bool = False, strict: bool = False) -> List:
        """
        Validate a non-empty grid list.

        Args:
            name: Dotted field name for messages
            values: Grid values
            minimum: Smallest accepted value
            budget: Apply the desk-budget cap to each value
            strict: Values must be strictly greater than `minimum`

        Raises:
            ConfigError: Empty list or out-of-range value
        """
        if not values:
            raise ConfigError(ErrorMessage.GRID_EMPTY.format(name=name))
        out = []
        for value in values:
            if value < minimum or (strict and value == minimum):
                raise _range_error(name, f"{'(' if strict else '['}{minimum}, inf)", value)
            out.append(ConfigValidator.validate_budget(name, value, full_scale) if budget else value)
        return out

    @staticmethod
    def validate_system(system) -> None:
        if not 1 <= system.qubits <= MAX_QUBITS:
            raise _range_error("system.qubits", f"[1, {MAX_QUBITS}]", system.qubits)
        if system.decay < 0:
            raise _range_error("system.decay", "[0, inf)", system.decay)
        if system.undriven_coupling is not None and system.qubits < 2:
            raise ConfigError("system.undriven_coupling needs at least two qubits")

    @staticmethod
    def validate_spam(s: float, qubits: int) -> float:
        limit = 1.0 / qubits
        if not 0.0 <= s < limit:
            raise ConfigError(ErrorMessage.SPAM_RANGE.format(limit=limit, s=s))
        return s

    @staticmethod
    def validate_data(data, full_scale: bool):
        if data.pulses < 1:
            raise _range_error("data.pulses", "[1, inf)", data.pulses)
        if data.shots < 0:
            raise _range_error("data.shots", "[0, inf)", data.shots)
        if data.duration <= 0:
            raise _range_error("data.duration", "(0, inf)", data.duration)
        return dataclasses.replace(
            data,
            pulses=ConfigValidator.validate_budget("data.pulses", data.pulses, full_scale),
            shots=ConfigValidator.validate_budget("data.shots", data.shots, full_scale),
        )

    @staticmethod
    def validate_grid(grid, scenario: Scenario, qubits: int, full_scale: bool):
        """Range-check every grid list; only lists a scenario reads need to be non-trivial."""
        v = ConfigValidator
        spam = v.validate_grid_list("grid.spam", grid.spam, 0.0)
        for s in spam:
            v.validate_spam(s, qubits)
        if scenario is Scenario.INCOMPLETE_COMPARE and qubits < 2:
            raise ConfigError("incomplete_compare needs at least two qubits")
        if grid.trials < 1:
            raise _range_error("grid.trials", "[1, inf)", grid.trials)
        if grid.fits < 2:
            raise _range_error("grid.fits", "[2, inf)", grid.fits)
        if not 0.0 <= grid.p <= 1.0:
            raise _range_error("grid.p", "[0, 1]", grid.p)
        if scenario is Scenario.LSQ_DEMO:
            pulses = v.validate_grid_list("grid.pulses", grid.pulses, 3, full_scale, budget=True)
            shots = v.validate_grid_list("grid.shots", grid.shots, 1, full_scale, budget=True)
        else:
            pulses = v.validate_grid_list("grid.pulses", grid.pulses, 1, full_scale, budget=True)
            shots = v.validate_grid_list("grid.shots", grid.shots, 0, full_scale, budget=True)
        if scenario is Scenario.DESIGN_COMPARE and 0 in shots:
            raise _range_error("grid.shots", "[1, inf)", 0)
        if not grid.distances:
            raise ConfigError(ErrorMessage.GRID_EMPTY.format(name="grid.distances"))
        return dataclasses.replace(
            grid,
            pulses=pulses,
            shots=shots,
            durations=v.validate_grid_list("grid.durations", grid.durations, 0.0, strict=True),
            spam=spam,
            decay=v.validate_grid_list("grid.decay", grid.decay, 0.0),
            coupling=v.validate_grid_list("grid.coupling", grid.coupling, 0.0),
        )

    @staticmethod
    def validate_model(model) -> None:
        if model.steps is not None and model.steps < 1:
            raise _range_error("model.steps", "[1, inf)", model.steps)
        if model.kind is ModelKind.GENERAL and not model.drift:
            raise ConfigError("model.drift = false only applies to linear_mix models")

    @staticmethod
    def validate_fit(fit, model=None) -> None:
        if fit.lr0 <= 0:
            raise _range_error("fit.lr0", "(0, inf)", fit.lr0)
        if not 0 < fit.lr_decay < 1:
            raise _range_error("fit.lr_decay", "(0, 1)", fit.lr_decay)
        if fit.lambda0 < 0:
            raise _range_error("fit.lambda0", "[0, inf)", fit.lambda0)
        if not 0 < fit.lambda_decay <= 1:
            raise _range_error("fit.lambda_decay", "(0, 1]", fit.lambda_decay)
        if fit.batch_size < 1:
            raise _range_error("fit.batch_size", "[1, inf)", fit.batch_size)
        if fit.max_epochs < 1:
            raise _range_error("fit.max_epochs", "[1, inf)", fit.max_epochs)
        if fit.tol < 0:
            raise _range_error("fit.tol", "[0, inf)", fit.tol)
        if fit.init_scale < 0:
            raise _range_error("fit.init_scale", "[0, inf)", fit.init_scale)
        if fit.restarts < 1:
            raise _range_error("fit.restarts", "[1, inf)", fit.restarts)
        if fit.patience < 1:
            raise _range_error("fit.patience", "[1, inf)", fit.patience)
        if fit.min_lr < 0:
            raise _range_error("fit.min_lr", "[0, inf)", fit.min_lr)
        if not 0 <= fit.cost_ema < 1:
            raise _range_error("fit.cost_ema", "[0, 1)", fit.cost_ema)
        if fit.validate_every < 0:
            raise _range_error("fit.validate_every", "[0, inf)", fit.validate_every)
        if model is not None and fit.init is InitKind.NOMINAL and model.kind is ModelKind.GENERAL:
            raise ConfigError("fit.init = nominal needs a linear_mix model")

    @staticmethod
    def validate_validation(validation) -> None:
        if validation.pulses < 1:
            raise _range_error("validation.pulses", "[1, inf)", validation.pulses)
        if validation.duration <= 0:
            raise _range_error("validation.duration", "(0, inf)", validation.duration)

    @staticmethod
    def validate_design(design) -> None:
        if design.steps < 0:
            raise _range_error("design.steps", "[0, inf)", design.steps)
        if design.lr <= 0:
            raise _range_error("design.lr", "(0, inf)", design.lr)
        if design.power <= 0:
            raise _range_error("design.power", "(0, inf)", design.power)
