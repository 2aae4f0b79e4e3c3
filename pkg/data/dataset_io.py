"""
Dataset JSON schema.

{
  "meta":   {"seed": int, "T": float, "S": int, "P": int, "s": float, "system": str, ...},
  "pulses": [[D floats], ...],
  "counts": [[2^Q ints], ...]     (S >= 1)
  "probs":  [[2^Q floats], ...]   (S == 0)
}

Designed pulse sets use the same layout without observations; fit reports carry
"omega_hat" and "labels" next to their diagnostics.
"""
import json
import os
from typing import Any, Dict, List, Tuple

import numpy as np

from common.constants import EXACT_SHOTS, ErrorMessage
from common.errors import ConfigError
from core.hardware import Dataset

REQUIRED_META = ("seed", "T", "S", "P", "s", "system")


def dataset_to_dict(dataset: Dataset) -> Dict[str, Any]:
    payload = {"meta": dict(dataset.meta), "pulses": dataset.pulses.tolist()}
    payload["meta"].update({"T": dataset.duration, "S": dataset.shots, "P": dataset.size})
    if dataset.exact:
        payload["probs"] = dataset.probs.tolist()
    else:
        payload["counts"] = dataset.counts.tolist()
    return payload


def _schema_error(path: str, reason: str) -> ConfigError:
    return ConfigError(ErrorMessage.DATASET_SCHEMA.format(path=path, reason=reason))


def _read(path: str) -> Dict[str, Any]:
    if not os.path.exists(path):
        raise ConfigError(ErrorMessage.CONFIG_NOT_FOUND.format(path=path))
    try:
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
    except json.JSONDecodeError as e:
        raise _schema_error(path, f"invalid JSON ({e})") from e
    if not isinstance(payload, dict):
        raise _schema_error(path, "top level must be an object")
    return payload


def dataset_from_dict(payload: Dict[str, Any], source: str = "<memory>") -> Dataset:
    """
    Rebuild a Dataset, checking the documented schema.

    Raises:
        ConfigError: On missing fields, unknown fields or inconsistent shapes
    """
    unknown = set(payload) - {"meta", "pulses", "counts", "probs"}
    if unknown:
        raise _schema_error(source, f"unknown fields {sorted(unknown)}")
    meta = payload.get("meta")
    if not isinstance(meta, dict):
        raise _schema_error(source, "missing 'meta' object")
    missing = [key for key in REQUIRED_META if key not in meta]
    if missing:
        raise _schema_error(source, f"meta lacks {missing}")
    if "pulses" not in payload:
        raise _schema_error(source, "missing 'pulses'")

    shots = int(meta["S"])
    key = "probs" if shots == EXACT_SHOTS else "counts"
    if key not in payload or ({"counts", "probs"} - {key}) & set(payload):
        raise _schema_error(source, f"S = {shots} requires exactly the '{key}' field")
    try:
        pulses = np.array(payload["pulses"], dtype=np.float64)
        observations = np.array(payload[key], dtype=np.float64 if key == "probs" else np.int64)
    except (TypeError, ValueError) as e:
        raise _schema_error(source, f"non-numeric entries ({e})") from e
    if pulses.ndim != 2 or observations.ndim != 2 or pulses.shape[0] != observations.shape[0]:
        raise _schema_error(source, f"pulses {pulses.shape} and {key} {observations.shape} do not align")
    if pulses.shape[0] != int(meta["P"]):
        raise _schema_error(source, f"meta.P = {meta['P']} but {pulses.shape[0]} pulses stored")

    try:
        if key == "probs":
            return Dataset(pulses, float(meta["T"]), shots, probs=observations, meta=meta)
        return Dataset(pulses, float(meta["T"]), shots, counts=observations, meta=meta)
    except ValueError as e:
        raise _schema_error(source, str(e)) from e


def load_dataset(path: str) -> Dataset:
    return dataset_from_dict(_read(path), path)


def pulses_to_dict(pulses: np.ndarray, duration: float, meta: Dict[str, Any]) -> Dict[str, Any]:
    info = dict(meta)
    info.update({"T": float(duration), "P": int(pulses.shape[0])})
    return {"meta": info, "pulses": np.asarray(pulses).tolist()}


def load_pulses(path: str) -> Tuple[np.ndarray, float]:
    """Pulse array and duration from a designed pulse set (or any dataset file)."""
    payload = _read(path)
    try:
        pulses = np.array(payload["pulses"], dtype=np.float64)
        duration = float(payload["meta"]["T"])
    except (KeyError, TypeError, ValueError) as e:
        raise _schema_error(path, f"pulse set needs meta.T and pulses ({e})") from e
    if pulses.ndim != 2:
        raise _schema_error(path, f"pulses must be P x D, got {pulses.shape}")
    return pulses, duration


def load_report_omega(path: str) -> Tuple[np.ndarray, List[str]]:
    """Fitted parameters and their labels from a fit_report.json."""
    payload = _read(path)
    try:
        omega = np.array(payload["omega_hat"], dtype=np.float64)
        labels = [str(label) for label in payload["labels"]]
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"Fit report {path} lacks omega_hat/labels ({e})") from e
    if omega.ndim != 1 or omega.size != len(labels):
        raise ConfigError(f"Fit report {path}: {omega.size} values for {len(labels)} labels")
    return omega, labels
