"""
Fisher information, Cramer-Rao bounds and D-optimal pulse design.

The per-pulse Fisher matrix uses the first-derivative form
sum_k (1 / p_k) (dp_k / d omega_i) (dp_k / d omega_j), exact for multinomial
outcomes, and is additive over pulses and shots.
"""
import logging
from concurrent.futures import Executor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from numpy.typing import NDArray

from common.constants import (
    DEFAULT_DESIGN_LR,
    DEFAULT_DESIGN_POWER,
    DEFAULT_DESIGN_STEPS,
    DESIGN_FD_STEP,
    LOGGER_NAME,
    TOLERANCES,
    ErrorMessage,
    ModelKind,
    Tolerances,
)
from common.errors import DimensionError
from core.estimation import NesterovAdam, map_ordered, xy_row_pairs, z_gauge_rotate
from core.hardware import random_pulses
from core.models import ControlPulse, LindbladParams, ModelSpec

logger = logging.getLogger(f"{LOGGER_NAME}.fisher")


@dataclass(frozen=True, eq=False)
class FisherMatrix:
    """Symmetric PSD information matrix accumulated over `pulse_count` pulses of `shots` shots."""
    entries: NDArray
    pulse_count: int
    shots: int

    def __add__(self, other: "FisherMatrix") -> "FisherMatrix":
        if self.shots != other.shots:
            raise ValueError("Only Fisher matrices with equal shot counts add up")
        return FisherMatrix(self.entries + other.entries, self.pulse_count + other.pulse_count, self.shots)

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.entries)[0])


@dataclass
class CRBReport:
    """Per-parameter variance (or MSE) lower bounds; flagged parameters overlap the null space."""
    bounds: NDArray
    flagged: NDArray
    null_space: NDArray
    eigenvalues: NDArray = field(default=None)

    def to_dict(self, labels: Optional[Sequence[str]] = None) -> dict:
        names = list(labels) if labels is not None else [str(i) for i in range(self.bounds.size)]
        return {
            "bounds": {name: (None if not np.isfinite(b) else float(b)) for name, b in zip(names, self.bounds)},
            "flagged": [name for name, flag in zip(names, self.flagged) if flag],
            "null_dimension": int(self.null_space.shape[1]),
        }


def fisher_from_jacobian(probs: NDArray, jac: NDArray, tolerances: Tolerances = TOLERANCES) -> NDArray:
    weights = 1.0 / np.maximum(probs, tolerances.prob_clip)
    info = jac.T @ (weights[:, None] * jac)
    return 0.5 * (info + info.T)


def fisher_per_pulse(omega, model: ModelSpec, pulse: ControlPulse,
                     tolerances: Tolerances = TOLERANCES) -> FisherMatrix:
    """Information carried by a single shot of one pulse."""
    probs, jac = model.predict_grad(omega, pulse)
    return FisherMatrix(fisher_from_jacobian(probs, jac, tolerances), 1, 1)


def as_pulses(pulses, duration: Optional[float] = None) -> List[ControlPulse]:
    """ControlPulse list from a P x D array (needs `duration`) or a pulse sequence."""
    if isinstance(pulses, np.ndarray):
        if duration is None:
            raise ValueError("A pulse array needs a duration")
        return [ControlPulse(row, duration) for row in pulses]
    return list(pulses)


def fisher_total(omega, model: ModelSpec, pulses: Sequence[ControlPulse], shots: int,
                 executor: Optional[Executor] = None) -> FisherMatrix:
    """S times the sum of per-pulse Fisher matrices."""
    if shots < 1:
        raise ValueError(ErrorMessage.VALUE_RANGE.format(name="shots", bounds="[1, inf)", value=shots))
    pulses = list(pulses)
    if not pulses:
        raise ValueError("fisher_total needs at least one pulse")
    parts = map_ordered(lambda p: fisher_per_pulse(omega, model, p).entries, pulses, executor)
    return FisherMatrix(shots * np.sum(parts, axis=0), len(pulses), shots)


def crb_report(fisher: FisherMatrix, bias=None, bias_grad=None,
               tolerances: Tolerances = TOLERANCES) -> CRBReport:
    """
    Cramer-Rao lower bounds from the pseudo-inverse of the Fisher matrix.

    Eigenvalues below tolerances.pinv_cutoff * lambda_max span the null space; a
    parameter whose unit vector has more than tolerances.null_overlap weight there
    is flagged and its bound is infinite. With `bias` b and `bias_grad` db/domega_l
    the bound becomes (1 - db)^2 [I^+]_ll + b^2.
    """
    entries = 0.5 * (fisher.entries + fisher.entries.T)
    eigenvalues, vectors = np.linalg.eigh(entries)
    lam_max = float(eigenvalues[-1]) if eigenvalues.size else 0.0
    if lam_max <= 0:
        keep = np.zeros(eigenvalues.shape, dtype=bool)
    else:
        keep = eigenvalues > tolerances.pinv_cutoff * lam_max

    kept = vectors[:, keep]
    diag_pinv = np.sum(kept ** 2 / eigenvalues[keep], axis=1)
    null_space = vectors[:, ~keep]
    overlap = np.sum(null_space ** 2, axis=1)
    flagged = overlap > tolerances.null_overlap

    bounds = diag_pinv.copy()
    if bias is not None or bias_grad is not None:
        b = np.zeros_like(bounds) if bias is None else np.broadcast_to(np.asarray(bias, dtype=np.float64), bounds.shape)
        db = np.zeros_like(bounds) if bias_grad is None else np.broadcast_to(
            np.asarray(bias_grad, dtype=np.float64), bounds.shape)
        bounds = (1.0 - db) ** 2 * bounds + b ** 2
    bounds = np.where(flagged, np.inf, bounds)
    if flagged.any():
        logger.warning(f"Fisher matrix has a {null_space.shape[1]}-dimensional null space; "
                       f"{int(flagged.sum())} parameters are unbounded")
    return CRBReport(bounds=bounds, flagged=flagged, null_space=null_space, eigenvalues=eigenvalues)


def _log_det(matrix: NDArray, ridge: float) -> float:
    sign, value = np.linalg.slogdet(matrix + ridge * np.eye(matrix.shape[0]))
    return float(value) if sign > 0 else -np.inf


def log_det_information(omega, model: ModelSpec, pulses, duration: Optional[float] = None,
                        tolerances: Tolerances = TOLERANCES, executor: Optional[Executor] = None) -> float:
    """log det(sum_i I_samp(pulse_i) + ridge I), the D-optimal design objective."""
    info = fisher_total(omega, model, as_pulses(pulses, duration), 1, executor)
    return _log_det(info.entries, tolerances.design_ridge)


def gauge_direction(omega, model: ModelSpec) -> NDArray:
    """
    Tangent of the simultaneous-z-rotation orbit through omega, in omega layout.

    Raises:
        ValueError: For models without a linear-mix Hamiltonian part
    """
    spec = model.hamiltonian_spec
    if spec.kind is not ModelKind.LINEAR_MIX:
        raise ValueError(ErrorMessage.WRONG_MODEL_KIND.format(
            operation="gauge_direction", expected=ModelKind.LINEAR_MIX.value, found=spec.kind.value))
    params = model.unpack(omega)
    ham = params.hamiltonian if isinstance(params, LindbladParams) else params
    labels = spec.basis.labels
    # on the X/Y rows the derivative at theta = 0 equals the rotation by pi/2
    d_alpha = z_gauge_rotate(ham.alpha, np.pi / 2, labels)
    d_beta = z_gauge_rotate(ham.beta, np.pi / 2, labels)
    rotated = np.zeros(len(labels), dtype=bool)
    for ix, iy in xy_row_pairs(labels):
        rotated[[ix, iy]] = True
    d_alpha[~rotated] = 0.0
    d_beta[~rotated] = 0.0
    tangent = type(ham)(d_alpha, d_beta)
    if isinstance(params, LindbladParams):
        tangent = LindbladParams(tangent, params.collapse_ops, np.zeros(params.strengths.size))
    return model.pack(tangent)


@dataclass
class DesignResult:
    pulses: NDArray
    initial_pulses: NDArray
    log_det_trace: List[float]
    duration: float

    @property
    def initial_log_det(self) -> float:
        return self.log_det_trace[0]

    @property
    def final_log_det(self) -> float:
        return self.log_det_trace[-1]


def normalise_power(pulses, power: float) -> NDArray:
    """Rescale a pulse set so its mean squared amplitude equals power."""
    pulses = np.asarray(pulses, dtype=np.float64)
    if power <= 0:
        raise ValueError(ErrorMessage.VALUE_RANGE.format(name="power", bounds="(0, inf)", value=power))
    scale = np.sqrt(power / np.mean(pulses ** 2))
    return pulses * scale


def _design_gradient(omega, model: ModelSpec, pulses: NDArray, duration: float, inverse: NDArray,
                     step: float, executor: Optional[Executor]) -> NDArray:
    """d log det / d pulse entries: tr(M^-1 dF_i / dd_ik) with central differences of the exact F_i."""
    def pulse_gradient(i: int) -> NDArray:
        grad = np.zeros(pulses.shape[1])
        for k in range(pulses.shape[1]):
            plus, minus = pulses[i].copy(), pulses[i].copy()
            plus[k] += step
            minus[k] -= step
            d_info = (fisher_per_pulse(omega, model, ControlPulse(plus, duration)).entries
                      - fisher_per_pulse(omega, model, ControlPulse(minus, duration)).entries) / (2.0 * step)
            grad[k] = float(np.sum(inverse * d_info))
        return grad

    return np.array(map_ordered(pulse_gradient, range(pulses.shape[0]), executor))


def design_pulses(omega, model: ModelSpec, P: int, duration: float, power: float = DEFAULT_DESIGN_POWER,
                  steps: int = DEFAULT_DESIGN_STEPS, lr: float = DEFAULT_DESIGN_LR, seed: int = 0,
                  initial=None, fd_step: float = DESIGN_FD_STEP, tolerances: Tolerances = TOLERANCES,
                  executor: Optional[Executor] = None) -> DesignResult:
    """
    Gradient ascent on log det of the total per-shot Fisher information.

    Args:
        omega: Current parameter estimate
        model: Model specification
        P: Number of constant pulses
        duration: Pulse duration T
        power: Mean squared amplitude restored after every step
        steps: Ascent steps; 0 returns the initialization unchanged
        lr: Optimizer learning rate
        seed: Seed of the N(0, 1) initialization (same pulses as a dataset with this seed)
        initial: Explicit P x D starting pulses
        fd_step: Central-difference step on the pulse amplitudes

    Returns:
        DesignResult with the pulses and the log-det trace (index 0 is the initialization)
    """
    if initial is None:
        pulses = random_pulses(P, model.n_drives, seed)
    else:
        pulses = np.array(initial, dtype=np.float64)
        if pulses.shape != (P, model.n_drives):
            raise DimensionError(ErrorMessage.DIMENSION_MISMATCH.format(
                what="initial pulses", expected=(P, model.n_drives), found=pulses.shape))
    if power <= 0:
        raise ValueError(ErrorMessage.VALUE_RANGE.format(name="power", bounds="(0, inf)", value=power))
    initial_pulses = pulses.copy()

    def information(current: NDArray) -> NDArray:
        return fisher_total(omega, model, as_pulses(current, duration), 1, executor).entries

    ridge = tolerances.design_ridge * np.eye(model.n_params)
    info = information(pulses)
    trace = [_log_det(info, tolerances.design_ridge)]
    optimizer = NesterovAdam(lr)
    for step in range(steps):
        inverse = np.linalg.inv(info + ridge)
        grad = _design_gradient(omega, model, pulses, duration, inverse, fd_step, executor)
        pulses = normalise_power(optimizer.step(pulses, -grad), power)
        info = information(pulses)
        trace.append(_log_det(info, tolerances.design_ridge))
        logger.debug(f"design step {step}: log det = {trace[-1]:.6f}")

    if steps:
        logger.info(f"Designed {P} pulses: log det {trace[0]:.3f} -> {trace[-1]:.3f}")
    return DesignResult(pulses=pulses, initial_pulses=initial_pulses, log_det_trace=trace, duration=duration)
