"""
Parameter estimation by mini-batch stochastic gradient descent.

The cost is the mean distance between measured populations and model predictions
over the pulses of a dataset. It is minimised with a Nesterov-momentum Adam
optimizer plus an annealed L1 penalty, and judged by the validation function on
held-out pulses with exact truth probabilities.
"""
import logging
import time
from concurrent.futures import Executor, ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import minimize_scalar

from common.constants import (
    ADAM_BETA1,
    ADAM_BETA2,
    ADAM_EPSILON,
    DEFAULT_BATCH_SIZE,
    DEFAULT_COST_EMA,
    DEFAULT_FIT_SEED,
    DEFAULT_INIT_SCALE,
    DEFAULT_LAMBDA0,
    DEFAULT_LAMBDA_DECAY,
    DEFAULT_LR0,
    DEFAULT_LR_DECAY,
    DEFAULT_MAX_EPOCHS,
    DEFAULT_MIN_LR,
    DEFAULT_PLATEAU_PATIENCE,
    DEFAULT_PLATEAU_THRESHOLD,
    DEFAULT_RESTARTS,
    DEFAULT_TOL,
    DEFAULT_VALIDATION_DURATION,
    DEFAULT_VALIDATION_PULSES,
    DEFAULT_VALIDATION_SEED,
    GAUGE_SCAN_POINTS,
    LOGGER_NAME,
    TOLERANCES,
    AnnealSchedule,
    DistanceKind,
    ErrorMessage,
    InitKind,
    ModelKind,
    SuccessMessage,
    Tolerances,
)
from common.errors import DimensionError, FitDivergedError
from core.hardware import Dataset, SpamModel, TrueSystem, random_pulses, true_probs
from core.models import ControlPulse, ModelSpec

logger = logging.getLogger(f"{LOGGER_NAME}.estimation")

VALIDATION_STREAM = 2


# =============================================================================
# DISTANCES
# =============================================================================
def _check_pair(p_hat: NDArray, p_tilde: NDArray) -> Tuple[NDArray, NDArray]:
    p_hat = np.asarray(p_hat, dtype=np.float64)
    p_tilde = np.asarray(p_tilde, dtype=np.float64)
    if p_hat.shape != p_tilde.shape:
        raise DimensionError(ErrorMessage.DIMENSION_MISMATCH.format(
            what="population vector length", expected=p_hat.shape, found=p_tilde.shape))
    return p_hat, p_tilde


def distance_and_grad(kind: DistanceKind, p_hat, p_tilde,
                      tolerances: Tolerances = TOLERANCES) -> Tuple[float, NDArray]:
    """
    dist(p_hat, p_tilde) and its derivative with respect to p_tilde.

    MSE and MAE sum over the components. Cross entropy is -sum p_hat log p_tilde and
    Bhattacharyya is -log sum sqrt(p_hat p_tilde); both clamp p_tilde below at
    tolerances.prob_clip, and the derivative vanishes where the clamp is active.
    """
    p_hat, p_tilde = _check_pair(p_hat, p_tilde)
    kind = DistanceKind(kind)
    if kind is DistanceKind.MSE:
        diff = p_tilde - p_hat
        return float(np.sum(diff ** 2)), 2.0 * diff
    if kind is DistanceKind.MAE:
        diff = p_tilde - p_hat
        return float(np.sum(np.abs(diff))), np.sign(diff)

    clip = tolerances.prob_clip
    active = p_tilde > clip
    clamped = np.maximum(p_tilde, clip)
    if kind is DistanceKind.CROSS_ENTROPY:
        return float(-np.sum(p_hat * np.log(clamped))), np.where(active, -p_hat / clamped, 0.0)

    roots = np.sqrt(np.maximum(p_hat, 0.0) * clamped)
    overlap = max(float(np.sum(roots)), clip)
    grad = np.where(active, -0.5 * roots / clamped / overlap, 0.0)
    return float(-np.log(overlap)), grad


def distance(kind: DistanceKind, p_hat, p_tilde, tolerances: Tolerances = TOLERANCES) -> float:
    return distance_and_grad(kind, p_hat, p_tilde, tolerances)[0]


def _entropy(p: NDArray) -> float:
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)))


def noise_floor(kind: DistanceKind, p_model, shots: int) -> float:
    """
    Expected distance of multinomial estimates from their own distribution.

    Args:
        kind: Distance kind
        p_model: One probability vector or a P x n array (rows are averaged)
        shots: S, 0 for exact data

    Returns:
        MSE sum p(1-p)/S; MAE sum sqrt(2 p(1-p) / (pi S)); Bhattacharyya
        (n_nonzero - 1) / (8 S); cross entropy the entropy of p. Exact data gives 0
        except for cross entropy.
    """
    rows = np.atleast_2d(np.asarray(p_model, dtype=np.float64))
    kind = DistanceKind(kind)
    if kind is DistanceKind.CROSS_ENTROPY:
        return float(np.mean([_entropy(row) for row in rows]))
    if shots == 0:
        return 0.0
    var = np.clip(rows * (1.0 - rows), 0.0, None)
    if kind is DistanceKind.MSE:
        per_row = var.sum(axis=1) / shots
    elif kind is DistanceKind.MAE:
        per_row = np.sqrt(2.0 * var / (np.pi * shots)).sum(axis=1)
    else:
        per_row = (np.count_nonzero(rows > TOLERANCES.prob_clip, axis=1) - 1) / (8.0 * shots)
    return float(np.mean(per_row))


# =============================================================================
# COST
# =============================================================================
def map_ordered(fn: Callable, items: Sequence, executor: Optional[Executor]) -> List:
    if executor is None:
        return [fn(item) for item in items]
    return list(executor.map(fn, items))


def _check_model(dataset: Dataset, model: ModelSpec) -> None:
    if dataset.pulses.shape[1] != model.n_drives:
        raise DimensionError(ErrorMessage.DIMENSION_MISMATCH.format(
            what="dataset drive count", expected=model.n_drives, found=dataset.pulses.shape[1]))
    if dataset.observed.shape[1] != model.dim:
        raise DimensionError(ErrorMessage.DIMENSION_MISMATCH.format(
            what="dataset outcome count", expected=model.dim, found=dataset.observed.shape[1]))


def _indices(dataset: Dataset, indices) -> NDArray:
    indices = np.arange(dataset.size) if indices is None else np.asarray(indices, dtype=int)
    if indices.size == 0:
        raise ValueError("The pulse batch must not be empty")
    return indices


def cost(omega, dataset: Dataset, model: ModelSpec, kind: DistanceKind = DistanceKind.MSE,
         indices=None, executor: Optional[Executor] = None) -> float:
    """C(omega) = (1/P) sum_i dist(p_hat_i, p_tilde_i(omega)) over `indices` (default: all pulses)."""
    _check_model(dataset, model)
    indices = _indices(dataset, indices)
    observed = dataset.observed

    def term(i: int) -> float:
        return distance(kind, observed[i], model.predict(omega, dataset.pulse(i)))

    return float(np.mean(map_ordered(term, indices, executor)))


def cost_and_grad(omega, dataset: Dataset, model: ModelSpec, kind: DistanceKind = DistanceKind.MSE,
                  indices=None, executor: Optional[Executor] = None) -> Tuple[float, NDArray, NDArray]:
    """
    Batch cost, its exact gradient, and the batch predictions.

    Returns:
        (cost, grad, predictions) where predictions is len(indices) x 2^Q
    """
    _check_model(dataset, model)
    indices = _indices(dataset, indices)
    observed = dataset.observed

    def term(i: int):
        probs, jac = model.predict_grad(omega, dataset.pulse(i))
        value, d_dist = distance_and_grad(kind, observed[i], probs)
        return value, d_dist @ jac, probs

    terms = map_ordered(term, indices, executor)
    values = np.array([t[0] for t in terms])
    grads = np.array([t[1] for t in terms])
    return float(values.mean()), grads.mean(axis=0), np.array([t[2] for t in terms])


def cost_grad(omega, dataset: Dataset, model: ModelSpec, kind: DistanceKind = DistanceKind.MSE,
              indices=None, executor: Optional[Executor] = None) -> NDArray:
    return cost_and_grad(omega, dataset, model, kind, indices, executor)[1]


def cross_entropy_surplus(omega, dataset: Dataset, model: ModelSpec,
                          executor: Optional[Executor] = None) -> float:
    """Mean of sum p_hat log p_hat - p_hat log p_tilde: cross entropy in excess of the data entropy."""
    _check_model(dataset, model)
    observed = dataset.observed
    clip = TOLERANCES.prob_clip

    def term(i: int) -> float:
        p_hat = observed[i]
        p_tilde = np.maximum(model.predict(omega, dataset.pulse(i)), clip)
        nz = p_hat > 0
        return float(np.sum(p_hat[nz] * (np.log(p_hat[nz]) - np.log(p_tilde[nz]))))

    return float(np.mean(map_ordered(term, range(dataset.size), executor)))


# =============================================================================
# OPTIMIZER
# =============================================================================
class NesterovAdam:
    """
    Adam with a Nesterov lookahead on the first moment.

    The learning rate is a plain attribute so the caller can anneal it.
    """

    def __init__(self, lr: float = DEFAULT_LR0, beta1: float = ADAM_BETA1, beta2: float = ADAM_BETA2,
                 epsilon: float = ADAM_EPSILON):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.m = None
        self.v = None
        self.t = 0

    def step(self, params: NDArray, grad: NDArray) -> NDArray:
        """Return params moved against grad (pass -grad to ascend)."""
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1

        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * (grad * grad)

        m_hat = (self.beta1 * self.m / (1.0 - self.beta1 ** (self.t + 1))
                 + (1.0 - self.beta1) * grad / (1.0 - self.beta1 ** self.t))
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.epsilon)


@dataclass(frozen=True)
class FitConfig:
    """Hyperparameters of one fit."""
    distance: DistanceKind = DistanceKind.MSE
    lr0: float = DEFAULT_LR0
    lr_decay: float = DEFAULT_LR_DECAY
    lambda0: float = DEFAULT_LAMBDA0
    anneal: AnnealSchedule = AnnealSchedule.COST_TRACKING
    lambda_decay: float = DEFAULT_LAMBDA_DECAY
    batch_size: int = DEFAULT_BATCH_SIZE
    max_epochs: int = DEFAULT_MAX_EPOCHS
    tol: float = DEFAULT_TOL
    init_scale: float = DEFAULT_INIT_SCALE
    init: InitKind = InitKind.ZERO
    restarts: int = DEFAULT_RESTARTS
    seed: int = DEFAULT_FIT_SEED
    patience: int = DEFAULT_PLATEAU_PATIENCE
    plateau_threshold: float = DEFAULT_PLATEAU_THRESHOLD
    min_lr: float = DEFAULT_MIN_LR
    cost_ema: float = DEFAULT_COST_EMA
    validate_every: int = 0

    def to_dict(self) -> Dict:
        out = asdict(self)
        out["distance"] = self.distance.value
        out["anneal"] = self.anneal.value
        out["init"] = self.init.value
        return out


@dataclass
class DescentResult:
    x: NDArray
    cost_trace: List[float]
    reg_trace: List[float]
    lr_trace: List[float]
    epochs: int
    converged: bool
    stop_reason: str


class _L1Weight:
    """
    lambda_k for the configured schedule.

    Cost tracking gives lambda0 * max(c, floor), with c and floor the running averages of
    the batch cost and of its noise floor. The excess schedule gives lambda0 * (max(c, floor) - floor).
    """

    def __init__(self, config: FitConfig):
        self.config = config
        self.cost_avg = None
        self.floor_avg = None

    def update(self, batch_cost: float, batch_floor: float) -> None:
        ema = self.config.cost_ema
        if self.cost_avg is None:
            self.cost_avg, self.floor_avg = batch_cost, batch_floor
        else:
            self.cost_avg = ema * self.cost_avg + (1.0 - ema) * batch_cost
            self.floor_avg = ema * self.floor_avg + (1.0 - ema) * batch_floor

    def value(self, epoch: int) -> float:
        schedule = self.config.anneal
        if schedule is AnnealSchedule.NONE:
            return 0.0
        if schedule is AnnealSchedule.EXPONENTIAL:
            return self.config.lambda0 * self.config.lambda_decay ** epoch
        clipped = max(self.cost_avg, self.floor_avg)
        if schedule is AnnealSchedule.EXCESS:
            return self.config.lambda0 * (clipped - self.floor_avg)
        return self.config.lambda0 * clipped


def _start_key(stream: int, start: int) -> Tuple[int, ...]:
    """Spawn key of a fit substream; the first start keeps the single-start key."""
    return (stream,) if start == 0 else (stream, start)


def descend(objective: Callable, x0, n_items: int, config: FitConfig,
            project: Optional[Callable[[NDArray], NDArray]] = None,
            callback: Optional[Callable[[int, NDArray], None]] = None, start: int = 0) -> DescentResult:
    """
    Mini-batch annealed Nesterov-Adam on an item-indexed objective.

    Args:
        objective: f(x, indices) -> (cost, grad) or (cost, grad, noise_floor)
        x0: Starting point
        n_items: Number of items shuffled into batches every epoch
        config: Fit hyperparameters (distance is ignored here)
        project: Applied to x after every step
        callback: Called as callback(epoch, x) after every epoch
        start: Index of the restart; selects the batch-order substream

    Returns:
        DescentResult

    Raises:
        FitDivergedError: If the objective returns a non-finite cost or gradient
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(config.seed, spawn_key=_start_key(1, start))))
    x = np.array(x0, dtype=np.float64)
    optimizer = NesterovAdam(config.lr0)
    weight = _L1Weight(config)
    cost_trace: List[float] = []
    reg_trace: List[float] = []
    lr_trace: List[float] = []
    last_decay = 0
    stop_reason = "max_epochs"
    converged = False
    epoch = -1

    for epoch in range(config.max_epochs):
        order = rng.permutation(n_items)
        total = 0.0
        lam = 0.0
        for batch, start in enumerate(range(0, n_items, config.batch_size)):
            indices = order[start:start + config.batch_size]
            result = objective(x, indices)
            value, grad = result[0], np.asarray(result[1], dtype=np.float64)
            floor = result[2] if len(result) > 2 else 0.0
            if not np.isfinite(value) or not np.all(np.isfinite(grad)):
                raise FitDivergedError(ErrorMessage.FIT_DIVERGED.format(epoch=epoch, batch=batch), epoch)

            weight.update(value, floor)
            lam = weight.value(epoch)
            x = optimizer.step(x, grad + lam * np.sign(x))
            if project is not None:
                x = project(x)
            total += value * len(indices)

        epoch_cost = total / n_items
        cost_trace.append(epoch_cost)
        reg_trace.append(lam)
        lr_trace.append(optimizer.lr)
        logger.debug(f"epoch {epoch}: cost={epoch_cost:.6e} lambda={lam:.3e} lr={optimizer.lr:.3e}")
        if callback is not None:
            callback(epoch, x)

        if epoch_cost <= config.tol * cost_trace[0]:
            converged, stop_reason = True, "tolerance"
            break
        if epoch >= config.patience and epoch - last_decay >= config.patience:
            reference = cost_trace[epoch - config.patience]
            if reference <= 0 or (reference - epoch_cost) / reference < config.plateau_threshold:
                optimizer.lr *= config.lr_decay
                last_decay = epoch
                logger.info(f"Plateau at epoch {epoch}: learning rate -> {optimizer.lr:.3e}")
                if optimizer.lr < config.min_lr:
                    converged, stop_reason = True, "learning_rate"
                    break

    return DescentResult(x, cost_trace, reg_trace, lr_trace, epoch + 1, converged, stop_reason)


# =============================================================================
# VALIDATION
# =============================================================================
def build_validation_set(system: TrueSystem, pulses: int = DEFAULT_VALIDATION_PULSES,
                         duration: float = DEFAULT_VALIDATION_DURATION, seed: int = DEFAULT_VALIDATION_SEED,
                         executor: Optional[Executor] = None) -> Dataset:
    """Held-out unit-variance pulses with exact, SPAM-free truth probabilities."""
    amplitudes = random_pulses(pulses, system.n_drives, seed, stream=VALIDATION_STREAM)
    spam_free = SpamModel(0.0, system.qubits)
    probs = map_ordered(lambda i: true_probs(system, spam_free, ControlPulse(amplitudes[i], duration)),
                 range(pulses), executor)
    meta = {"seed": int(seed), "T": float(duration), "S": 0, "P": int(pulses), "s": 0.0,
            "system": system.tag, "role": "validation"}
    return Dataset(amplitudes, duration, 0, probs=np.array(probs), meta=meta)


def validate(omega, system: TrueSystem, model: ModelSpec, pulses: int = DEFAULT_VALIDATION_PULSES,
             duration: float = DEFAULT_VALIDATION_DURATION, seed: int = DEFAULT_VALIDATION_SEED,
             kind: DistanceKind = DistanceKind.MSE, validation_set: Optional[Dataset] = None,
             executor: Optional[Executor] = None) -> float:
    """
    V(omega): the cost against exact truth probabilities on fixed validation pulses.

    Pass a prebuilt `validation_set` to reuse the truth evaluations across calls.
    """
    if validation_set is None:
        validation_set = build_validation_set(system, pulses, duration, seed, executor)
    return cost(omega, validation_set, model, kind, executor=executor)


# =============================================================================
# GAUGE
# =============================================================================
def xy_row_pairs(labels: Sequence[str]) -> List[Tuple[int, int]]:
    labels = list(labels)
    rows = []
    for label in labels:
        if label.startswith("X") and f"Y{label[1:]}" in labels:
            rows.append((labels.index(label), labels.index(f"Y{label[1:]}")))
    return rows


def z_gauge_rotate(matrix, theta: float, labels: Sequence[str]) -> NDArray:
    """
    Apply a simultaneous z rotation by theta to the X/Y rows of `matrix`.

    Rows become X' = cos(theta) X + sin(theta) Y and Y' = -sin(theta) X + cos(theta) Y,
    the coefficient map of conjugating the Hamiltonian by exp(i theta sum_q Z_q / 2).
    """
    out = np.array(matrix, dtype=np.float64)
    c, s = np.cos(theta), np.sin(theta)
    for ix, iy in xy_row_pairs(labels):
        x_row, y_row = out[ix].copy(), out[iy].copy()
        out[ix] = c * x_row + s * y_row
        out[iy] = -s * x_row + c * y_row
    return out


def gauge_angle(alpha_hat, alpha_true, labels: Sequence[str],
                scan_points: int = GAUGE_SCAN_POINTS) -> Tuple[float, float]:
    """
    Angle theta minimizing mean((alpha_hat - rotate(alpha_true, theta))^2).

    A dense scan over [0, 2 pi) is refined by bounded Brent search within one grid step.

    Returns:
        (theta, residual)
    """
    alpha_hat = np.asarray(alpha_hat, dtype=np.float64)
    alpha_true = np.asarray(alpha_true, dtype=np.float64)
    if alpha_hat.shape != alpha_true.shape:
        raise DimensionError(ErrorMessage.DIMENSION_MISMATCH.format(
            what="alpha shape", expected=alpha_true.shape, found=alpha_hat.shape))
    if not xy_row_pairs(labels):
        raise ValueError(ErrorMessage.WRONG_MODEL_KIND.format(
            operation="Gauge alignment", expected="linear-mix model with X/Y operators", found=list(labels)))

    def residual(theta: float) -> float:
        return float(np.mean((alpha_hat - z_gauge_rotate(alpha_true, theta, labels)) ** 2))

    grid = np.linspace(0.0, 2.0 * np.pi, scan_points, endpoint=False)
    values = np.array([residual(t) for t in grid])
    best = int(np.argmin(values))
    step = grid[1] - grid[0]
    refined = minimize_scalar(residual, bounds=(grid[best] - step, grid[best] + step), method="bounded",
                              options={"xatol": 1e-12})
    if refined.success and refined.fun <= values[best]:
        return float(refined.x % (2.0 * np.pi)), float(refined.fun)
    return float(grid[best]), float(values[best])


def parameter_error_mod_gauge(alpha_hat, alpha_true, labels: Sequence[str]) -> float:
    """Mean squared alpha error after removing the best simultaneous z rotation."""
    return gauge_angle(alpha_hat, alpha_true, labels)[1]


def gauge_error(omega_hat, omega_true, model: ModelSpec) -> float:
    """parameter_error_mod_gauge on the alpha block of a linear-mix (or linear-mix Lindblad) model."""
    spec = model.hamiltonian_spec
    if spec.kind is not ModelKind.LINEAR_MIX:
        raise ValueError(ErrorMessage.WRONG_MODEL_KIND.format(
            operation="Gauge alignment", expected=ModelKind.LINEAR_MIX.value, found=spec.kind.value))
    hat = model.unpack(omega_hat)
    true = model.unpack(omega_true)
    if model.kind is ModelKind.LINDBLAD:
        hat, true = hat.hamiltonian, true.hamiltonian
    return parameter_error_mod_gauge(hat.alpha, true.alpha, spec.basis.labels)


def gauge_align(omega_hat, omega_true, model: ModelSpec) -> NDArray:
    """omega_hat with the best simultaneous z rotation towards omega_true undone (alpha and beta)."""
    spec = model.hamiltonian_spec
    if spec.kind is not ModelKind.LINEAR_MIX:
        raise ValueError(ErrorMessage.WRONG_MODEL_KIND.format(
            operation="Gauge alignment", expected=ModelKind.LINEAR_MIX.value, found=spec.kind.value))
    params = model.unpack(omega_hat)
    hat = params.hamiltonian if model.kind is ModelKind.LINDBLAD else params
    true = model.unpack(omega_true)
    true = true.hamiltonian if model.kind is ModelKind.LINDBLAD else true
    labels = spec.basis.labels
    theta, _ = gauge_angle(hat.alpha, true.alpha, labels)
    aligned = type(hat)(z_gauge_rotate(hat.alpha, -theta, labels), z_gauge_rotate(hat.beta, -theta, labels))
    if model.kind is ModelKind.LINDBLAD:
        aligned = type(params)(aligned, params.collapse_ops, params.strengths)
    return model.pack(aligned)


# =============================================================================
# FIT
# =============================================================================
@dataclass
class EstimationReport:
    """Outcome of one fit."""
    omega_hat: NDArray
    labels: List[str]
    cost_trace: List[float]
    reg_trace: List[float]
    lr_trace: List[float]
    validation_trace: List[Tuple[int, float]]
    final_cost: float
    epochs: int
    converged: bool
    stop_reason: str
    wall_time: float
    seed: int
    config: Dict
    model: Dict
    diagnostics: Dict = field(default_factory=dict)

    def parameters(self) -> Dict[str, float]:
        return dict(zip(self.labels, self.omega_hat.tolist()))

    def to_dict(self) -> Dict:
        return {
            "omega_hat": self.omega_hat.tolist(),
            "labels": self.labels,
            "final_cost": self.final_cost,
            "epochs": self.epochs,
            "converged": self.converged,
            "stop_reason": self.stop_reason,
            "wall_time": self.wall_time,
            "seed": self.seed,
            "config": self.config,
            "model": self.model,
            "diagnostics": self.diagnostics,
            "cost_trace": self.cost_trace,
            "reg_trace": self.reg_trace,
            "lr_trace": self.lr_trace,
            "validation_trace": [list(item) for item in self.validation_trace],
        }


def nominal_omega(model: ModelSpec) -> NDArray:
    """Linear-mix parameters with alpha[k, k] = 1 (drive k on operator k) and everything else 0."""
    spec = model.hamiltonian_spec
    if spec.kind is not ModelKind.LINEAR_MIX:
        raise ValueError(ErrorMessage.WRONG_MODEL_KIND.format(
            operation="A nominal start", expected=ModelKind.LINEAR_MIX.value, found=spec.kind.value))
    params = model.template()
    ham = params.hamiltonian if model.kind is ModelKind.LINDBLAD else params
    centre = type(ham)(np.eye(spec.basis.size, spec.n_drives), ham.beta)
    if model.kind is ModelKind.LINDBLAD:
        centre = type(params)(centre, params.collapse_ops, params.strengths)
    return model.pack(centre)


def initial_omega(model: ModelSpec, config: FitConfig, start: int = 0) -> NDArray:
    """
    N(0, init_scale^2) draw from the fit seed around the configured centre.

    Every restart draws from its own substream. Collapse strengths start at |draw|.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(config.seed, spawn_key=_start_key(0, start))))
    omega = config.init_scale * rng.standard_normal(model.n_params)
    if config.init is InitKind.NOMINAL:
        omega = omega + nominal_omega(model)
    if model.strength_slice is not None:
        omega[model.strength_slice] = np.abs(omega[model.strength_slice])
    return omega


def fit(dataset: Dataset, model: ModelSpec, config: FitConfig = FitConfig(), system: Optional[TrueSystem] = None,
        omega0=None, threads: int = 1, validation_set: Optional[Dataset] = None) -> EstimationReport:
    """
    Minimise C(omega) + lambda_k |omega|_1 with annealed Nesterov-Adam.

    With config.restarts > 1 the descent runs from that many seeded starts and the
    estimate with the lowest final cost is kept.

    Args:
        dataset: Measured (or exact) dataset
        model: Model specification
        config: Fit hyperparameters
        system: True system; enables the validation trace and diagnostics
        omega0: Starting point (default: seeded draws); a given start is used alone
        threads: Workers for per-pulse evaluations inside a batch
        validation_set: Prebuilt validation data for `system`

    Returns:
        EstimationReport, bit-identical for identical inputs

    Raises:
        FitDivergedError: On a non-finite cost, with the epoch in the message
    """
    started = time.perf_counter()
    _check_model(dataset, model)
    if omega0 is None:
        starts = [initial_omega(model, config, start) for start in range(config.restarts)]
    else:
        starts = [model.project(np.asarray(omega0, dtype=np.float64))]
    executor = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None

    try:
        if system is not None and validation_set is None:
            validation_set = build_validation_set(system, executor=executor)

        def objective(x, indices):
            value, grad, predictions = cost_and_grad(x, dataset, model, config.distance, indices, executor)
            return value, grad, noise_floor(config.distance, predictions, dataset.shots)

        def recorder(trace: List[Tuple[int, float]]) -> Callable[[int, NDArray], None]:
            def record(epoch: int, x: NDArray) -> None:
                if validation_set is not None and config.validate_every and epoch % config.validate_every == 0:
                    trace.append((epoch, cost(x, validation_set, model, executor=executor)))
            return record

        result, final_cost, best_start = None, float("inf"), 0
        validation_trace: List[Tuple[int, float]] = []
        start_costs: List[float] = []
        for start, x0 in enumerate(starts):
            trace: List[Tuple[int, float]] = []
            candidate = descend(objective, x0, dataset.size, config, project=model.project,
                                callback=recorder(trace), start=start)
            candidate_cost = cost(candidate.x, dataset, model, config.distance, executor=executor)
            start_costs.append(candidate_cost)
            if result is None or candidate_cost < final_cost:
                result, final_cost, best_start, validation_trace = candidate, candidate_cost, start, trace
            if len(starts) > 1:
                logger.info(f"Start {start + 1}/{len(starts)}: cost={candidate_cost:.6e} ({candidate.stop_reason})")

        diagnostics: Dict = {}
        if len(starts) > 1:
            diagnostics["start_costs"] = start_costs
            diagnostics["best_start"] = best_start
        if validation_set is not None:
            diagnostics["validation"] = cost(result.x, validation_set, model, executor=executor)
        if system is not None and model.hamiltonian_spec.kind is ModelKind.LINEAR_MIX:
            try:
                omega_true = system.omega_true(model)
            except ValueError:
                omega_true = None
            if omega_true is not None:
                diagnostics["gauge_residual"] = gauge_error(result.x, omega_true, model)
    finally:
        if executor is not None:
            executor.shutdown(wait=True)

    wall_time = time.perf_counter() - started
    logger.info(SuccessMessage.FIT_COMPLETE.format(epochs=result.epochs, cost=final_cost))
    return EstimationReport(
        omega_hat=result.x,
        labels=model.labels(),
        cost_trace=result.cost_trace,
        reg_trace=result.reg_trace,
        lr_trace=result.lr_trace,
        validation_trace=validation_trace,
        final_cost=final_cost,
        epochs=result.epochs,
        converged=result.converged,
        stop_reason=result.stop_reason,
        wall_time=wall_time,
        seed=config.seed,
        config=config.to_dict(),
        model=model.describe(),
        diagnostics=diagnostics,
    )
