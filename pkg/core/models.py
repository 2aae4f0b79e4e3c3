"""
Parameterized dynamical models.

A model maps parameters omega and a control pulse d to a Hamiltonian (or a
Lindbladian) and predicts the Born probabilities of the computational basis
after the pulse, together with their exact derivatives with respect to omega.

Flat parameter layout (ParameterVector):
    linear mix : alpha row-major (M x D), then beta (M)
    general    : h_sym upper triangle incl. diagonal (row-major), h_antisym strict
                 upper triangle, then the same two blocks of sigma_*[:, :, k] for
                 k = 0 .. D-1
    lindblad   : the Hamiltonian layout, then the C collapse strengths

Every Hamiltonian model is handled internally in generator form
H(d) = sum_j (A d + b)_j G_j with fixed Hermitian generators G_j; for the linear
mix G is the operator basis, for the general model it is the Hermitian matrix
unit basis.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.typing import NDArray

from common.constants import (
    LINDBLAD_MIN_STEPS,
    LINDBLAD_STEPS_PER_TIME,
    LOGGER_NAME,
    TOLERANCES,
    ErrorMessage,
    IntegrationMethod,
    ModelKind,
    Tolerances,
)
from common.errors import DimensionError, IntegrationError
from core.linalg import (
    check_hermitian,
    dexp_frechet_on_state,
    eig_hermitian,
    evolve_unitary,
    hermitian_from_parts,
    propagator,
)

logger = logging.getLogger(f"{LOGGER_NAME}.models")

InitialState = Union[None, int, NDArray]


# =============================================================================
# DOMAIN TYPES
# =============================================================================
def _frozen_array(value, dtype, what: str) -> NDArray:
    arr = np.array(value, dtype=dtype)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} has non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class OperatorBasis:
    """The fixed Hermitian operators A_k of a linear-mix model, with labels."""
    ops: NDArray
    labels: Tuple[str, ...]

    def __post_init__(self):
        ops = _frozen_array(self.ops, np.complex128, "basis")
        if ops.ndim != 3 or ops.shape[0] < 1 or ops.shape[1] != ops.shape[2]:
            raise DimensionError(ErrorMessage.DIMENSION_MISMATCH.format(
                what="basis shape", expected="(M >= 1, n, n)", found=ops.shape))
        if len(self.labels) != ops.shape[0]:
            raise DimensionError(ErrorMessage.DIMENSION_MISMATCH.format(
                what="label count", expected=ops.shape[0], found=len(self.labels)))
        for label, op in zip(self.labels, ops):
            check_hermitian(op, what=f"basis operator {label}")
        object.__setattr__(self, "ops", ops)
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def size(self) -> int:
        return self.ops.shape[0]

    @property
    def dim(self) -> int:
        return self.ops.shape[1]

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def without(self, labels: Sequence[str]) -> "OperatorBasis":
        """Basis with the named operators removed."""
        keep = [i for i, label in enumerate(self.labels) if label not in set(labels)]
        return OperatorBasis(self.ops[keep], tuple(self.labels[i] for i in keep))


@dataclass(frozen=True, eq=False)
class LinearMixParams:
    """alpha (M x D) mixes drives into operator weights; beta (M) is the drift."""
    alpha: NDArray
    beta: NDArray

    def __post_init__(self):
        alpha = _frozen_array(self.alpha, np.float64, "alpha")
        beta = _frozen_array(self.beta, np.float64, "beta")
        if alpha.ndim != 2 or beta.shape != (alpha.shape[0],):
            raise DimensionError(ErrorMessage.DIMENSION_MISMATCH.format(
                what="alpha/beta shapes", expected="(M, D) and (M,)",
                found=(alpha.shape, beta.shape)))
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @property
    def n_drives(self) -> int:
        return self.alpha.shape[1]

    def scaled(self, factor: float) -> "LinearMixParams":
        return LinearMixParams(self.alpha * factor, self.beta * factor)


@dataclass(frozen=True, eq=False)
class GeneralParams:
    """H_ij = h_ij + sum_k sigma_ijk d_k split into symmetric and antisymmetric real parts."""
    h_sym: NDArray
    h_antisym: NDArray
    sigma_sym: NDArray
    sigma_antisym: NDArray

    def __post_init__(self):
        h_sym = _frozen_array(self.h_sym, np.float64, "h_sym")
        h_antisym = _frozen_array(self.h_antisym, np.float64, "h_antisym")
        sigma_sym = _frozen_array(self.sigma_sym, np.float64, "sigma_sym")
        sigma_antisym = _frozen_array(self.sigma_antisym, np.float64, "sigma_antisym")
        n = h_sym.shape[0] if h_sym.ndim == 2 else -1
        if (h_sym.shape != (n, n) or h_antisym.shape != (n, n) or sigma_sym.ndim != 3
                or sigma_sym.shape[:2] != (n, n) or sigma_antisym.shape != sigma_sym.shape):
            raise DimensionError(ErrorMessage.DIMENSION_MISMATCH.format(
                what="general parameter shapes", expected="(n, n) and (n, n, D)",
                found=(h_sym.shape, h_antisym.shape, sigma_sym.shape, sigma_antisym.shape)))
        tol = TOLERANCES.hermitian
        checks = [
            ("h_sym", h_sym - h_sym.T, "symmetric"),
            ("h_antisym", h_antisym + h_antisym.T, "antisymmetric"),
            ("sigma_sym", sigma_sym - sigma_sym.transpose(1, 0, 2), "symmetric"),
            ("sigma_antisym", sigma_antisym + sigma_antisym.transpose(1, 0, 2), "antisymmetric"),
        ]
        for what, residual, kind in checks:
            dev = float(np.max(np.abs(residual))) if residual.size else 0.0
            if dev > tol:
                raise ValueError(ErrorMessage.NOT_SYMMETRIC.format(what=what, kind=kind, tol=tol, dev=dev))
        object.__setattr__(self, "h_sym", h_sym)
        object.__setattr__(self, "h_antisym", h_antisym)
        object.__setattr__(self, "sigma_sym", sigma_sym)
        object.__setattr__(self, "sigma_antisym", sigma_antisym)

    @property
    def dim(self) -> int:
        return self.h_sym.shape[0]

    @property
    def n_drives(self) -> int:
        return self.sigma_sym.shape[2]


HamiltonianParams = Union[LinearMixParams, GeneralParams]


@dataclass(frozen=True, eq=False)
class LindbladParams:
    """Hamiltonian part plus fixed collapse operators L_i with strengths c_i >= 0."""
    hamiltonian: HamiltonianParams
    collapse_ops: NDArray
    strengths: NDArray

    def __post_init__(self):
        ops = _frozen_array(self.collapse_ops, np.complex128, "collapse_ops")
        strengths = _frozen_array(self.strengths, np.float64, "strengths")
        if ops.ndim != 3 or ops.shape[1] != ops.shape[2] or strengths.shape != (ops.shape[0],):
            raise DimensionError(ErrorMessage.DIMENSION_MISMATCH.format(
                what="collapse operators / strengths", expected="(C, n, n) and (C,)",
                found=(ops.shape, strengths.shape)))
        if np.any(strengths < 0):
            raise ValueError(ErrorMessage.VALUE_RANGE.format(
                name="collapse strengths", bounds="[0, inf)", value=strengths.tolist()))
        object.__setattr__(self, "collapse_ops", ops)
        object.__setattr__(self, "strengths", strengths)

    @property
    def n_drives(self) -> int:
        return self.hamiltonian.n_drives


@dataclass(frozen=True, eq=False)
class ControlPulse:
    """D constant amplitudes or a Theta x D piecewise-constant schedule, applied for `duration`."""
    amplitudes: NDArray
    duration: float

    def __post_init__(self):
        amps = _frozen_array(self.amplitudes, np.float64, "pulse amplitudes")
        if amps.ndim not in (1, 2) or amps.shape[0] < 1:
            raise DimensionError(ErrorMessage.DIMENSION_MISMATCH.format(
                what="pulse amplitudes", expected="(D,) or (Theta >= 1, D)", found=amps.shape))
        duration = float(self.duration)
        if not np.isfinite(duration) or duration <= 0:
            raise ValueError(ErrorMessage.VALUE_RANGE.format(name="pulse duration", bounds="(0, inf)", value=duration))
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "duration", duration)

    @property
    def schedule(self) -> NDArray:
        return self.amplitudes if self.amplitudes.ndim == 2 else self.amplitudes[None, :]

    @property
    def n_drives(self) -> int:
        return self.schedule.shape[1]

    @property
    def segments(self) -> int:
        return self.schedule.shape[0]


# =============================================================================
# GENERATOR FORM
# =============================================================================
def hermitian_unit_basis(dim: int) -> NDArray:
    """Real-coefficient basis of dim x dim Hermitian matrices in general-model order."""
    units = []
    rows, cols = np.triu_indices(dim)
    for i, j in zip(rows, cols):
        unit = np.zeros((dim, dim), dtype=np.complex128)
        unit[i, j] = 1.0
        unit[j, i] = 1.0
        units.append(unit)
    rows, cols = np.triu_indices(dim, k=1)
    for i, j in zip(rows, cols):
        unit = np.zeros((dim, dim), dtype=np.complex128)
        unit[i, j] = 1j
        unit[j, i] = -1j
        units.append(unit)
    return np.array(units)


def _general_coefficients(params: GeneralParams) -> Tuple[NDArray, NDArray]:
    """(A, b) of the generator form: b from h, column k of A from sigma[:, :, k]."""
    n = params.dim
    upper = np.triu_indices(n)
    strict = np.triu_indices(n, k=1)
    b = np.concatenate([params.h_sym[upper], params.h_antisym[strict]])
    A = np.concatenate([params.sigma_sym[upper], params.sigma_antisym[strict]], axis=0)
    return A, b


def _generator_form(params: HamiltonianParams, basis: Optional[OperatorBasis]) -> Tuple[NDArray, NDArray, NDArray]:
    if isinstance(params, LinearMixParams):
        if basis is None:
            raise DimensionError("Linear-mix parameters need an operator basis")
        if basis.size != params.alpha.shape[0]:
            raise DimensionError(ErrorMessage.DIMENSION_MISMATCH.format(
                what="basis size", expected=params.alpha.shape[0], found=basis.size))
        return basis.ops, params.alpha, params.beta
    A, b = _general_coefficients(params)
    return hermitian_unit_basis(params.dim), A, b


def _check_drive(schedule: NDArray, n_drives: int) -> None:
    if schedule.shape[1] != n_drives:
        raise DimensionError(ErrorMessage.DIMENSION_MISMATCH.format(
            what="drive count", expected=n_drives, found=schedule.shape[1]))


# =============================================================================
# PARAMETER VECTOR
# =============================================================================
def params_to_vector(params) -> NDArray:
    """Flatten structured parameters into the canonical layout."""
    if isinstance(params, LinearMixParams):
        return np.concatenate([params.alpha.ravel(), params.beta])
    if isinstance(params, GeneralParams):
        A, b = _general_coefficients(params)
        return np.concatenate([b, A.T.ravel()])
    if isinstance(params, LindbladParams):
        return np.concatenate([params_to_vector(params.hamiltonian), params.strengths])
    raise TypeError(f"Unsupported parameter type: {type(params).__name__}")


def vector_size(params) -> int:
    if isinstance(params, LinearMixParams):
        return params.alpha.size + params.beta.size
    if isinstance(params, GeneralParams):
        return params.dim ** 2 * (params.n_drives + 1)
    if isinstance(params, LindbladParams):
        return vector_size(params.hamiltonian) + params.strengths.size
    raise TypeError(f"Unsupported parameter type: {type(params).__name__}")


def _general_from_coefficients(dim: int, A: NDArray, b: NDArray) -> GeneralParams:
    n_drives = A.shape[1]
    upper = np.triu_indices(dim)
    strict = np.triu_indices(dim, k=1)
    n_upper = len(upper[0])

    def symmetric(values):
        out = np.zeros((dim, dim) + values.shape[1:])
        out[upper] = values
        out[(upper[1], upper[0])] = values
        return out

    def antisymmetric(values):
        out = np.zeros((dim, dim) + values.shape[1:])
        out[strict] = values
        out[(strict[1], strict[0])] = -values
        return out

    return GeneralParams(
        h_sym=symmetric(b[:n_upper]),
        h_antisym=antisymmetric(b[n_upper:]),
        sigma_sym=symmetric(A[:n_upper]).reshape(dim, dim, n_drives),
        sigma_antisym=antisymmetric(A[n_upper:]).reshape(dim, dim, n_drives),
    )


def vector_to_params(vector, template):
    """
    Rebuild structured parameters from a flat vector.

    Args:
        vector: Flat parameter vector in the canonical layout
        template: Parameters of the same kind and shape (values ignored, collapse ops reused)

    Returns:
        Structured parameters of the template's type
    """
    vector = np.asarray(vector, dtype=np.float64)
    expected = vector_size(template)
    if vector.shape != (expected,):
        raise DimensionError(ErrorMessage.DIMENSION_MISMATCH.format(
            what="parameter vector length", expected=expected, found=vector.shape))
    if isinstance(template, LinearMixParams):
        M, D = template.alpha.shape
        return LinearMixParams(vector[:M * D].reshape(M, D), vector[M * D:])
    if isinstance(template, GeneralParams):
        J = template.dim ** 2
        b = vector[:J]
        A = vector[J:].reshape(template.n_drives, J).T
        return _general_from_coefficients(template.dim, A, b)
    if isinstance(template, LindbladParams):
        n_ham = vector_size(template.hamiltonian)
        return LindbladParams(
            hamiltonian=vector_to_params(vector[:n_ham], template.hamiltonian),
            collapse_ops=template.collapse_ops,
            strengths=vector[n_ham:],
        )
    raise TypeError(f"Unsupported parameter type: {type(template).__name__}")


def _coefficient_gradient(params: HamiltonianParams, schedule: NDArray, per_segment: NDArray) -> NDArray:
    """
    Chain rule from generator weights a_s = A d_s + b to the canonical layout.

    per_segment has shape (Theta, n_out, J): d p / d a_{s, j}.
    """
    d_b = per_segment.sum(axis=0)
    d_A = np.einsum("snj,sk->njk", per_segment, schedule)
    if isinstance(params, LinearMixParams):
        return np.concatenate([d_A.reshape(d_A.shape[0], -1), d_b], axis=1)
    return np.concatenate([d_b, d_A.transpose(0, 2, 1).reshape(d_A.shape[0], -1)], axis=1)


# =============================================================================
# HAMILTONIAN AND UNITARY PATH
# =============================================================================
def hamiltonian_at(params: HamiltonianParams, basis: Optional[OperatorBasis], d) -> NDArray:
    """
    Model Hamiltonian at drive amplitudes d.

    Linear mix: sum_k (alpha d + beta)_k A_k. General: (h_sym + sigma_sym d) + i (h_antisym + sigma_antisym d).
    """
    d = np.asarray(d, dtype=np.float64)
    if d.shape != (params.n_drives,):
        raise DimensionError(ErrorMessage.DIMENSION_MISMATCH.format(
            what="drive vector", expected=(params.n_drives,), found=d.shape))
    if isinstance(params, GeneralParams):
        sym = params.h_sym + params.sigma_sym @ d
        antisym = params.h_antisym + params.sigma_antisym @ d
        return hermitian_from_parts(sym, antisym)
    ops, A, b = _generator_form(params, basis)
    return np.tensordot(A @ d + b, ops, axes=1)


def _initial_vector(dim: int, initial_state: InitialState) -> NDArray:
    if initial_state is None:
        initial_state = 0
    if isinstance(initial_state, (int, np.integer)):
        if not 0 <= initial_state < dim:
            raise DimensionError(ErrorMessage.DIMENSION_MISMATCH.format(
                what="initial basis state", expected=f"0..{dim - 1}", found=initial_state))
        psi = np.zeros(dim, dtype=np.complex128)
        psi[initial_state] = 1.0
        return psi
    psi = np.asarray(initial_state, dtype=np.complex128)
    if psi.shape != (dim,):
        raise DimensionError(ErrorMessage.DIMENSION_MISMATCH.format(
            what="initial state length", expected=dim, found=psi.shape))
    if abs(np.linalg.norm(psi) - 1.0) > TOLERANCES.norm:
        raise ValueError("Initial state must be normalized")
    return psi


def _unitary_path(params: HamiltonianParams, basis, schedule: NDArray, T: float,
                  initial_state: InitialState, with_grad: bool):
    ops, A, b = _generator_form(params, basis)
    _check_drive(schedule, A.shape[1])
    tau = T / schedule.shape[0]
    psi = _initial_vector(ops.shape[1], initial_state)

    eigs, before = [], []
    for d in schedule:
        eig = eig_hermitian(np.tensordot(A @ d + b, ops, axes=1), check=False)
        before.append(psi)
        psi = evolve_unitary(None, tau, psi, eig)
        eigs.append(eig)
    if not with_grad:
        return psi, None

    # psi_final = B_s U_s psi_{s-1} with B_s the product of later segment propagators
    per_segment = np.zeros((schedule.shape[0], psi.shape[0], ops.shape[0]))
    after = np.eye(psi.shape[0], dtype=np.complex128)
    for s in reversed(range(schedule.shape[0])):
        d_psi = dexp_frechet_on_state(eigs[s], tau, ops, before[s]) @ after.T
        per_segment[s] = 2.0 * np.real(psi.conj()[None, :] * d_psi).T
        after = after @ propagator(None, tau, eigs[s])
    return psi, _coefficient_gradient(params, schedule, per_segment)


def evolve_piecewise(params: HamiltonianParams, basis: Optional[OperatorBasis], schedule, T: float,
                     initial_state: InitialState = None) -> NDArray:
    """
    Product of Theta segment propagators, each of duration T / Theta, applied to the initial state.

    Args:
        params: Linear-mix or general parameters
        basis: Operator basis (linear mix only)
        schedule: Theta x D amplitudes
        T: Total duration
        initial_state: Basis index or state vector, default |0...0>

    Returns:
        Final state vector
    """
    schedule = ControlPulse(schedule, T).schedule
    state, _ = _unitary_path(params, basis, schedule, T, initial_state, with_grad=False)
    return state


# =============================================================================
# LINDBLAD PATH
# =============================================================================
def default_lindblad_steps(T: float) -> int:
    """max(100, ceil(100 T)) substeps."""
    return max(LINDBLAD_MIN_STEPS, int(math.ceil(LINDBLAD_STEPS_PER_TIME * T)))


def _lindblad_rhs(H: NDArray, rho: NDArray, jumps: Sequence[Tuple[float, NDArray, NDArray]]) -> NDArray:
    out = -1j * (H @ rho - rho @ H)
    for strength, op, op_dag_op in jumps:
        if strength == 0.0:
            continue
        out = out + strength * (op @ rho @ op.conj().T - 0.5 * (op_dag_op @ rho + rho @ op_dag_op))
    return out


def _euler_step(H, rho, jumps, dt):
    return rho + dt * _lindblad_rhs(H, rho, jumps)


def _rk4_step(H, rho, jumps, dt):
    k1 = _lindblad_rhs(H, rho, jumps)
    k2 = _lindblad_rhs(H, rho + 0.5 * dt * k1, jumps)
    k3 = _lindblad_rhs(H, rho + 0.5 * dt * k2, jumps)
    k4 = _lindblad_rhs(H, rho + dt * k3, jumps)
    return rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


_STEPPERS = {IntegrationMethod.EULER: _euler_step, IntegrationMethod.RK4: _rk4_step}


def _initial_density(dim: int, initial_state) -> NDArray:
    arr = None if initial_state is None or isinstance(initial_state, (int, np.integer)) else np.asarray(initial_state)
    if arr is not None and arr.ndim == 2:
        if arr.shape != (dim, dim):
            raise DimensionError(ErrorMessage.DIMENSION_MISMATCH.format(
                what="initial density matrix", expected=(dim, dim), found=arr.shape))
        return arr.astype(np.complex128)
    psi = _initial_vector(dim, initial_state)
    return np.outer(psi, psi.conj())


def _segment_steps(steps: int, segments: int) -> int:
    return max(1, int(math.ceil(steps / segments)))


def density_diagnostics(rho: NDArray) -> dict:
    """Trace error, Hermiticity error and smallest eigenvalue of a density matrix."""
    rho = np.asarray(rho)
    herm = 0.5 * (rho + rho.conj().T)
    return {
        "trace_error": float(abs(np.trace(rho) - 1.0)),
        "hermiticity_error": float(np.max(np.abs(rho - rho.conj().T))),
        "min_eigenvalue": float(np.linalg.eigvalsh(herm)[0]),
    }


def evolve_lindblad(params: LindbladParams, basis: Optional[OperatorBasis], schedule, T: float,
                    steps: Optional[int] = None, method: IntegrationMethod = IntegrationMethod.RK4,
                    initial_state=None, tolerances: Tolerances = TOLERANCES) -> NDArray:
    """
    Integrate the Lindblad master equation over a piecewise-constant schedule.

    Args:
        params: Lindblad parameters (Hamiltonian part, collapse operators, strengths)
        basis: Operator basis of a linear-mix Hamiltonian part
        schedule: D amplitudes or Theta x D schedule
        T: Total duration
        steps: Total substeps, default max(100, ceil(100 T)); split evenly over segments
        method: IntegrationMethod.EULER or IntegrationMethod.RK4
        initial_state: Basis index, state vector or density matrix, default |0...0><0...0|
        tolerances: Tolerance record for the diagnostic checks

    Returns:
        Final density matrix; positivity is checked and logged, never enforced

    Raises:
        IntegrationError: If the state stops being finite (step size too large)
    """
    method = IntegrationMethod(method)
    schedule = ControlPulse(schedule, T).schedule
    steps = default_lindblad_steps(T) if steps is None else int(steps)
    if steps < 1:
        raise ValueError(ErrorMessage.VALUE_RANGE.format(name="steps", bounds="[1, inf)", value=steps))
    ops, A, b = _generator_form(params.hamiltonian, basis)
    _check_drive(schedule, A.shape[1])

    per_segment = _segment_steps(steps, schedule.shape[0])
    dt = T / schedule.shape[0] / per_segment
    jumps = [(float(c), L, L.conj().T @ L) for c, L in zip(params.strengths, params.collapse_ops)]
    stepper = _STEPPERS[method]

    rho = _initial_density(ops.shape[1], initial_state)
    step = 0
    for d in schedule:
        H = np.tensordot(A @ d + b, ops, axes=1)
        for _ in range(per_segment):
            rho = stepper(H, rho, jumps, dt)
            step += 1
            if not np.all(np.isfinite(rho)):
                raise IntegrationError(ErrorMessage.INTEGRATION_FAILED.format(step=step, dt=dt), step=step)

    diag = density_diagnostics(rho)
    if diag["min_eigenvalue"] < -tolerances.psd_warning or diag["trace_error"] > tolerances.trace:
        logger.warning(f"Density matrix diagnostics outside tolerance: {diag}")
    return rho


def _superop_commutator(H: NDArray) -> NDArray:
    """Row-major superoperator of rho -> -i [H, rho]."""
    eye = np.eye(H.shape[0])
    return -1j * (np.kron(H, eye) - np.kron(eye, H.T))


def _superop_dissipator(L: NDArray) -> NDArray:
    """Row-major superoperator of rho -> L rho L^dagger - {L^dagger L, rho} / 2."""
    eye = np.eye(L.shape[0])
    LdL = L.conj().T @ L
    return np.kron(L, L.conj()) - 0.5 * (np.kron(LdL, eye) + np.kron(eye, LdL.T))


def _taylor_orders(method: IntegrationMethod) -> int:
    return 4 if method is IntegrationMethod.RK4 else 1


def _lindblad_path(params: LindbladParams, basis, schedule: NDArray, T: float, steps: int,
                   method: IntegrationMethod, initial_state, with_grad: bool):
    """
    Probabilities and exact gradients of the discrete RK4/Euler map.

    One step of either method on a linear ODE is the truncated Taylor polynomial
    Phi = sum_{m<=order} (h L)^m / m!. The gradient is accumulated by an adjoint
    sweep: for every step, sum_{a+b<order} h^(a+b+1)/(a+b+1)! (lam L^a) dL (L^b r).
    """
    ops, A, b = _generator_form(params.hamiltonian, basis)
    _check_drive(schedule, A.shape[1])
    n = ops.shape[1]
    n2 = n * n
    order = _taylor_orders(method)
    per_segment = _segment_steps(steps, schedule.shape[0])
    h = T / schedule.shape[0] / per_segment

    dissipators = np.array([_superop_dissipator(L) for L in params.collapse_ops]).reshape(-1, n2, n2)
    lindbladian_fixed = np.tensordot(params.strengths, dissipators, axes=1) if len(dissipators) else 0.0

    generators, maps, trajectories = [], [], []
    r = _initial_density(n, initial_state).reshape(n2)
    step = 0
    for d in schedule:
        generator = _superop_commutator(np.tensordot(A @ d + b, ops, axes=1)) + lindbladian_fixed
        step_map = np.eye(n2, dtype=np.complex128)
        term = np.eye(n2, dtype=np.complex128)
        for m in range(1, order + 1):
            term = term @ (h * generator) / m
            step_map = step_map + term
        states = np.empty((per_segment, n2), dtype=np.complex128)
        for j in range(per_segment):
            states[j] = r
            r = step_map @ r
            step += 1
        if not np.all(np.isfinite(r)):
            raise IntegrationError(ErrorMessage.INTEGRATION_FAILED.format(step=step, dt=h), step=step)
        generators.append(generator)
        maps.append(step_map)
        trajectories.append(states)

    diag_idx = np.arange(n) * (n + 1)
    probs = np.real(r[diag_idx])
    if not with_grad:
        return probs, None

    coeff = np.zeros((order, order))
    for a in range(order):
        for bb in range(order - a):
            coeff[a, bb] = h ** (a + bb + 1) / math.factorial(a + bb + 1)

    adjoint = np.zeros((n, n2), dtype=np.complex128)
    adjoint[np.arange(n), diag_idx] = 1.0
    per_coeff = np.zeros((schedule.shape[0], n, ops.shape[0]))
    d_strengths = np.zeros((n, len(dissipators)))
    for s in reversed(range(schedule.shape[0])):
        generator, step_map = generators[s], maps[s]
        acc = np.zeros((n, n2, n2), dtype=np.complex128)
        for j in reversed(range(per_segment)):
            left = np.empty((order, n, n2), dtype=np.complex128)
            right = np.empty((order, n2), dtype=np.complex128)
            left[0], right[0] = adjoint, trajectories[s][j]
            for m in range(1, order):
                left[m] = left[m - 1] @ generator
                right[m] = generator @ right[m - 1]
            weighted = coeff @ right
            acc += np.einsum("aki,aj->kij", left, weighted)
            adjoint = adjoint @ step_map

        # d L / d a_g = -i (G_g (x) I - I (x) G_g^T); contract through partial traces of acc
        blocks = acc.reshape(n, n, n, n, n)
        left_trace = np.einsum("kiaja->kij", blocks)
        right_trace = np.einsum("kiaib->kab", blocks)
        per_coeff[s] = np.real(-1j * (np.einsum("gij,kij->kg", ops, left_trace)
                                      - np.einsum("gba,kab->kg", ops, right_trace)))
        if len(dissipators):
            d_strengths += np.real(np.einsum("kxy,cxy->kc", acc, dissipators))

    d_ham = _coefficient_gradient(params.hamiltonian, schedule, per_coeff)
    return probs, np.concatenate([d_ham, d_strengths], axis=1)


# =============================================================================
# PREDICTION
# =============================================================================
def _as_pulse(pulse) -> ControlPulse:
    if not isinstance(pulse, ControlPulse):
        raise TypeError(f"Expected ControlPulse, got {type(pulse).__name__}")
    return pulse


def predict_probs(params, basis: Optional[OperatorBasis], pulse: ControlPulse,
                  initial_state: InitialState = None, steps: Optional[int] = None,
                  method: IntegrationMethod = IntegrationMethod.RK4) -> NDArray:
    """
    Born probabilities |<k| U |initial>|^2 after the pulse.

    Lindblad parameters are integrated with `method` and `steps` and the diagonal
    of the final density matrix is returned.
    """
    pulse = _as_pulse(pulse)
    if isinstance(params, LindbladParams):
        rho = evolve_lindblad(params, basis, pulse.schedule, pulse.duration, steps, method, initial_state)
        return np.real(np.diag(rho)).copy()
    state, _ = _unitary_path(params, basis, pulse.schedule, pulse.duration, initial_state, with_grad=False)
    return np.abs(state) ** 2


def predict_probs_grad(params, basis: Optional[OperatorBasis], pulse: ControlPulse,
                       initial_state: InitialState = None, steps: Optional[int] = None,
                       method: IntegrationMethod = IntegrationMethod.RK4) -> Tuple[NDArray, NDArray]:
    """
    Probabilities and their Jacobian with respect to the canonical parameter vector.

    Returns:
        (probs, grad) with grad[k, l] = d p_k / d omega_l
    """
    pulse = _as_pulse(pulse)
    if isinstance(params, LindbladParams):
        steps = default_lindblad_steps(pulse.duration) if steps is None else int(steps)
        return _lindblad_path(params, basis, pulse.schedule, pulse.duration, steps,
                              IntegrationMethod(method), initial_state, with_grad=True)
    state, grad = _unitary_path(params, basis, pulse.schedule, pulse.duration, initial_state, with_grad=True)
    return np.abs(state) ** 2, grad


# =============================================================================
# MODEL SPECIFICATION
# =============================================================================
@dataclass(frozen=True, eq=False)
class ModelSpec:
    """
    A model kind together with everything needed to interpret a flat omega.

    Attributes:
        kind: Top-level model kind
        dim: Hilbert-space dimension 2^Q
        n_drives: Number of drive amplitudes D
        basis: Operator basis for linear-mix Hamiltonians
        drift: Whether beta is estimated (False pins beta to zero)
        hamiltonian: Hamiltonian spec of a Lindblad model
        collapse_ops: Fixed collapse operators of a Lindblad model
        method: Lindblad integrator
        steps: Lindblad substeps (None uses the duration-based default)
    """
    kind: ModelKind
    dim: int
    n_drives: int
    basis: Optional[OperatorBasis] = None
    drift: bool = True
    hamiltonian: Optional["ModelSpec"] = None
    collapse_ops: Optional[NDArray] = field(default=None)
    method: IntegrationMethod = IntegrationMethod.RK4
    steps: Optional[int] = None

    @classmethod
    def linear_mix(cls, basis: OperatorBasis, n_drives: int, drift: bool = True) -> "ModelSpec":
        return cls(ModelKind.LINEAR_MIX, basis.dim, int(n_drives), basis=basis, drift=drift)

    @classmethod
    def general(cls, dim: int, n_drives: int) -> "ModelSpec":
        return cls(ModelKind.GENERAL, int(dim), int(n_drives))

    @classmethod
    def lindblad(cls, hamiltonian: "ModelSpec", collapse_ops, method=IntegrationMethod.RK4,
                 steps: Optional[int] = None) -> "ModelSpec":
        if hamiltonian.kind is ModelKind.LINDBLAD:
            raise ValueError("The Hamiltonian part of a Lindblad model cannot itself be a Lindblad model")
        ops = _frozen_array(collapse_ops, np.complex128, "collapse_ops")
        if ops.ndim != 3 or ops.shape[1:] != (hamiltonian.dim, hamiltonian.dim):
            raise DimensionError(ErrorMessage.DIMENSION_MISMATCH.format(
                what="collapse operators", expected=f"(C, {hamiltonian.dim}, {hamiltonian.dim})", found=ops.shape))
        return cls(ModelKind.LINDBLAD, hamiltonian.dim, hamiltonian.n_drives, basis=hamiltonian.basis,
                   hamiltonian=hamiltonian, collapse_ops=ops, method=IntegrationMethod(method), steps=steps)

    # -------------------------------------------------------------------------
    # Layout
    # -------------------------------------------------------------------------
    @property
    def hamiltonian_spec(self) -> "ModelSpec":
        return self.hamiltonian if self.kind is ModelKind.LINDBLAD else self

    @property
    def n_collapse(self) -> int:
        return 0 if self.collapse_ops is None else self.collapse_ops.shape[0]

    @property
    def n_hamiltonian_params(self) -> int:
        spec = self.hamiltonian_spec
        if spec.kind is ModelKind.GENERAL:
            return spec.dim ** 2 * (spec.n_drives + 1)
        M = spec.basis.size
        return M * spec.n_drives + (M if spec.drift else 0)

    @property
    def n_params(self) -> int:
        return self.n_hamiltonian_params + self.n_collapse

    @property
    def strength_slice(self) -> Optional[slice]:
        if self.kind is not ModelKind.LINDBLAD:
            return None
        return slice(self.n_hamiltonian_params, self.n_params)

    def _free_columns(self) -> NDArray:
        """Columns of the canonical gradient that belong to omega."""
        spec = self.hamiltonian_spec
        if spec.kind is ModelKind.GENERAL:
            ham = np.arange(self.n_hamiltonian_params)
            canonical = self.n_hamiltonian_params
        else:
            M = spec.basis.size
            canonical = M * spec.n_drives + M
            ham = np.arange(canonical if spec.drift else M * spec.n_drives)
        return np.concatenate([ham, canonical + np.arange(self.n_collapse)]).astype(int)

    def template(self):
        """Zero-valued structured parameters of this model."""
        spec = self.hamiltonian_spec
        if spec.kind is ModelKind.GENERAL:
            n, D = spec.dim, spec.n_drives
            ham = GeneralParams(np.zeros((n, n)), np.zeros((n, n)), np.zeros((n, n, D)), np.zeros((n, n, D)))
        else:
            ham = LinearMixParams(np.zeros((spec.basis.size, spec.n_drives)), np.zeros(spec.basis.size))
        if self.kind is ModelKind.LINDBLAD:
            return LindbladParams(ham, self.collapse_ops, np.zeros(self.n_collapse))
        return ham

    def unpack(self, omega):
        """Structured parameters for a flat omega of length n_params."""
        omega = np.asarray(omega, dtype=np.float64)
        if omega.shape != (self.n_params,):
            raise DimensionError(ErrorMessage.DIMENSION_MISMATCH.format(
                what="omega length", expected=self.n_params, found=omega.shape))
        canonical = np.zeros(vector_size(self.template()))
        canonical[self._free_columns()] = omega
        return vector_to_params(canonical, self.template())

    def pack(self, params) -> NDArray:
        """Flat omega for structured parameters (pinned entries are dropped)."""
        return params_to_vector(params)[self._free_columns()]

    def labels(self) -> List[str]:
        spec = self.hamiltonian_spec
        names: List[str] = []
        if spec.kind is ModelKind.GENERAL:
            n = spec.dim
            upper = list(zip(*np.triu_indices(n)))
            strict = list(zip(*np.triu_indices(n, k=1)))
            block = [f"sym[{i},{j}]" for i, j in upper] + [f"anti[{i},{j}]" for i, j in strict]
            names += [f"h_{name}" for name in block]
            for k in range(spec.n_drives):
                names += [f"sigma_{name}[d{k + 1}]" for name in block]
            canonical = names
        else:
            ops = spec.basis.labels
            canonical = [f"alpha[{op},d{l + 1}]" for op in ops for l in range(spec.n_drives)]
            canonical += [f"beta[{op}]" for op in ops]
        canonical = canonical + [f"c[{m + 1}]" for m in range(self.n_collapse)]
        return [canonical[i] for i in self._free_columns()]

    # -------------------------------------------------------------------------
    # Prediction
    # -------------------------------------------------------------------------
    def predict(self, omega, pulse: ControlPulse, initial_state: InitialState = None) -> NDArray:
        return predict_probs(self.unpack(omega), self.basis, pulse, initial_state, self.steps, self.method)

    def predict_grad(self, omega, pulse: ControlPulse, initial_state: InitialState = None) -> Tuple[NDArray, NDArray]:
        probs, grad = predict_probs_grad(self.unpack(omega), self.basis, pulse, initial_state, self.steps, self.method)
        return probs, grad[:, self._free_columns()]

    def project(self, omega) -> NDArray:
        """Clip collapse strengths to c >= 0."""
        if self.strength_slice is None:
            return omega
        omega = np.array(omega, dtype=np.float64)
        omega[self.strength_slice] = np.maximum(omega[self.strength_slice], 0.0)
        return omega

    def describe(self) -> dict:
        info = {"kind": self.kind.value, "dim": self.dim, "n_drives": self.n_drives, "n_params": self.n_params}
        if self.hamiltonian_spec.basis is not None:
            info["basis"] = list(self.hamiltonian_spec.basis.labels)
            info["drift"] = self.hamiltonian_spec.drift
        if self.kind is ModelKind.LINDBLAD:
            info["hamiltonian"] = self.hamiltonian.kind.value
            info["collapse_ops"] = self.n_collapse
            info["method"] = self.method.value
            info["steps"] = self.steps
        return info
