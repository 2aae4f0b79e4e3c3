"""
Mock hardware: a seeded ground-truth system, intrinsic SPAM, shot sampling
and dataset generation.

Qubit 1 is the most significant bit of a basis index; |1> is the excited state.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray

from common.constants import (
    DEFAULT_SYSTEM_SEED,
    EXACT_SHOTS,
    LOGGER_NAME,
    MAX_QUBITS,
    TRUTH_RANGE,
    ErrorMessage,
    IntegrationMethod,
)
from common.errors import DimensionError
from core.models import (
    ControlPulse,
    LindbladParams,
    LinearMixParams,
    ModelSpec,
    OperatorBasis,
    evolve_lindblad,
    predict_probs,
)

logger = logging.getLogger(f"{LOGGER_NAME}.hardware")

PAULI_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)
LOWERING = np.array([[0, 1], [0, 0]], dtype=np.complex128)  # |0><1|
RAISING = LOWERING.T.copy()


def embed(op: NDArray, qubit: int, qubits: int) -> NDArray:
    """Single-qubit operator acting on `qubit` (0-based) of a `qubits`-qubit register."""
    if not 0 <= qubit < qubits:
        raise DimensionError(ErrorMessage.DIMENSION_MISMATCH.format(
            what="qubit index", expected=f"0..{qubits - 1}", found=qubit))
    out = np.ones((1, 1), dtype=np.complex128)
    for q in range(qubits):
        out = np.kron(out, op if q == qubit else np.eye(2))
    return out


def exchange(i: int, j: int, qubits: int) -> NDArray:
    """sigma+_i sigma-_j + h.c."""
    hop = embed(RAISING, i, qubits) @ embed(LOWERING, j, qubits)
    return hop + hop.conj().T


def ring_pairs(qubits: int) -> List[Tuple[int, int]]:
    if qubits < 2:
        return []
    if qubits == 2:
        return [(0, 1)]
    return [(q, (q + 1) % qubits) for q in range(qubits)]


def _pair_label(pair: Tuple[int, int]) -> str:
    return f"{pair[0] + 1}{pair[1] + 1}"


def _check_qubits(qubits: int) -> int:
    qubits = int(qubits)
    if not 1 <= qubits <= MAX_QUBITS:
        raise ValueError(ErrorMessage.VALUE_RANGE.format(name="qubits", bounds=f"[1, {MAX_QUBITS}]", value=qubits))
    return qubits


def device_basis(qubits: int = 3, exclude: Sequence[str] = ()) -> OperatorBasis:
    """
    Per-qubit X, Y, Z plus ring exchange terms.

    Labels are X1..XQ, Y1..YQ, Z1..ZQ followed by the pairs ("12", "23", "31" for Q=3).
    """
    qubits = _check_qubits(qubits)
    ops, labels = [], []
    for name, pauli in (("X", PAULI_X), ("Y", PAULI_Y), ("Z", PAULI_Z)):
        for q in range(qubits):
            ops.append(embed(pauli, q, qubits))
            labels.append(f"{name}{q + 1}")
    for pair in ring_pairs(qubits):
        ops.append(exchange(pair[0], pair[1], qubits))
        labels.append(_pair_label(pair))
    unknown = set(exclude) - set(labels)
    if unknown:
        raise ValueError(f"Cannot exclude unknown basis labels: {sorted(unknown)}")
    basis = OperatorBasis(np.array(ops), tuple(labels))
    return basis.without(exclude) if exclude else basis


def decay_operators(qubits: int) -> NDArray:
    """Per-qubit amplitude-damping operators sigma-_q."""
    return np.array([embed(LOWERING, q, qubits) for q in range(qubits)])


# =============================================================================
# TRUE SYSTEM
# =============================================================================
@dataclass(frozen=True, eq=False)
class TrueSystem:
    """
    The simulated device.

    alpha = diag(kappa) (one drive per basis operator); beta carries epsilon on the
    Z rows and eta on the exchange rows. With `undriven_coupling` set, the 12
    exchange term has no drive coupling and a constant weight Omega.
    """
    qubits: int
    seed: int
    basis: OperatorBasis
    truth: LinearMixParams
    kappa: NDArray
    epsilon: NDArray
    eta: NDArray
    decay: float = 0.0
    collapse_ops: NDArray = field(default=None)
    undriven_coupling: Optional[float] = None

    @property
    def dim(self) -> int:
        return 2 ** self.qubits

    @property
    def n_drives(self) -> int:
        return self.truth.n_drives

    @property
    def tag(self) -> str:
        tag = f"device_q{self.qubits}_seed{self.seed}"
        if self.decay:
            tag += f"_decay{self.decay:g}"
        if self.undriven_coupling is not None:
            tag += f"_omega{self.undriven_coupling:g}"
        return tag

    @property
    def lindblad_truth(self) -> Optional[LindbladParams]:
        if not self.decay:
            return None
        strengths = np.full(self.collapse_ops.shape[0], float(self.decay))
        return LindbladParams(self.truth, self.collapse_ops, strengths)

    def hamiltonian_spec(self, drift: bool = True) -> ModelSpec:
        return ModelSpec.linear_mix(self.basis, self.n_drives, drift=drift)

    def lindblad_spec(self, method=IntegrationMethod.RK4, steps: Optional[int] = None) -> ModelSpec:
        return ModelSpec.lindblad(self.hamiltonian_spec(), self.collapse_ops, method, steps)

    def omega_true(self, spec: ModelSpec) -> NDArray:
        """The true parameters in the layout of `spec` (complete linear-mix or Lindblad specs)."""
        if spec.hamiltonian_spec.basis is None or spec.hamiltonian_spec.basis.labels != self.basis.labels:
            raise ValueError("The true parameters are only defined for the complete device basis")
        if spec.strength_slice is not None:
            strengths = np.full(spec.n_collapse, float(self.decay))
            return spec.pack(LindbladParams(self.truth, spec.collapse_ops, strengths))
        return spec.pack(self.truth)

    def describe(self) -> Dict:
        return {
            "tag": self.tag,
            "qubits": self.qubits,
            "seed": self.seed,
            "labels": list(self.basis.labels),
            "kappa": self.kappa.tolist(),
            "epsilon": self.epsilon.tolist(),
            "eta": self.eta.tolist(),
            "decay": self.decay,
            "undriven_coupling": self.undriven_coupling,
        }


def build_true_system(qubits: int = 3, seed: int = DEFAULT_SYSTEM_SEED, decay: float = 0.0,
                      undriven_coupling: Optional[float] = None) -> TrueSystem:
    """
    Draw kappa, epsilon and eta uniformly in [0.5, 1.5] from `seed`.

    Args:
        qubits: Register size Q (1..4)
        seed: Seed of the truth draw
        decay: Per-qubit amplitude-damping strength Gamma (0 disables)
        undriven_coupling: Omega for the undriven 12 exchange variant (needs Q >= 2)

    Returns:
        TrueSystem, identical for identical arguments
    """
    qubits = _check_qubits(qubits)
    if decay < 0:
        raise ValueError(ErrorMessage.VALUE_RANGE.format(name="decay", bounds="[0, inf)", value=decay))
    basis = device_basis(qubits)
    pairs = ring_pairs(qubits)
    if undriven_coupling is not None and not pairs:
        raise ValueError("An undriven coupling needs at least two qubits")

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    low, high = TRUTH_RANGE
    kappa = rng.uniform(low, high, basis.size)
    epsilon = rng.uniform(low, high, qubits)
    eta = rng.uniform(low, high, len(pairs))

    beta = np.zeros(basis.size)
    for q in range(qubits):
        beta[basis.index(f"Z{q + 1}")] = epsilon[q]
    for pair, value in zip(pairs, eta):
        beta[basis.index(_pair_label(pair))] = value
    if undriven_coupling is not None:
        row = basis.index(_pair_label(pairs[0]))
        kappa[row] = 0.0
        beta[row] = float(undriven_coupling)

    logger.info(f"Built true system q={qubits} seed={seed} decay={decay} omega={undriven_coupling}")
    return TrueSystem(
        qubits=qubits,
        seed=int(seed),
        basis=basis,
        truth=LinearMixParams(np.diag(kappa), beta),
        kappa=kappa,
        epsilon=epsilon,
        eta=eta,
        decay=float(decay),
        collapse_ops=decay_operators(qubits),
        undriven_coupling=None if undriven_coupling is None else float(undriven_coupling),
    )


# =============================================================================
# SPAM
# =============================================================================
def _on_unit_grid(s: float) -> float:
    """s rounded to a multiple of 2^-53; sums of such entries up to 1 are exact in any order."""
    return float(np.ldexp(np.round(np.ldexp(s, 53)), -53))


@dataclass(frozen=True)
class SpamModel:
    """Per-qubit flip probability s, shared by preparation and readout."""
    s: float
    qubits: int

    def __post_init__(self):
        limit = 1.0 / self.qubits
        if not (0.0 <= self.s < limit):
            raise ValueError(ErrorMessage.SPAM_RANGE.format(limit=limit, s=self.s))

    def preparation(self) -> List[Tuple[int, float]]:
        """(basis index, weight) branches of the prepared mixture; the weights sum to exactly 1."""
        s = _on_unit_grid(self.s)
        branches = [(0, 1.0 - self.qubits * s)]
        if s > 0:
            branches += [(1 << (self.qubits - 1 - q), s) for q in range(self.qubits)]
        return branches


def spam_confusion_matrix(qubits: int, s: float) -> NDArray:
    """(1 - Q s) I plus s on every Hamming-distance-1 pair; every column sums to exactly 1."""
    SpamModel(s, qubits)
    s = _on_unit_grid(s)
    idx = np.arange(2 ** qubits)
    flips = idx[:, None] ^ idx[None, :]
    neighbours = (flips != 0) & ((flips & (flips - 1)) == 0)
    return np.where(neighbours, s, 0.0) + (1.0 - qubits * s) * np.eye(2 ** qubits)


def true_probs(system: TrueSystem, spam: SpamModel, pulse: ControlPulse) -> NDArray:
    """
    Measured-population distribution of one pulse.

    Each preparation branch is evolved separately (unitarily, or through the
    Lindblad equation when the system decays) and mixed in probability before
    the readout confusion matrix is applied.
    """
    if spam.qubits != system.qubits:
        raise DimensionError(ErrorMessage.DIMENSION_MISMATCH.format(
            what="SPAM qubit count", expected=system.qubits, found=spam.qubits))
    mixed = np.zeros(system.dim)
    lindblad = system.lindblad_truth
    for index, weight in spam.preparation():
        if lindblad is None:
            probs = predict_probs(system.truth, system.basis, pulse, initial_state=index)
        else:
            rho = evolve_lindblad(lindblad, system.basis, pulse.schedule, pulse.duration, initial_state=index)
            probs = np.real(np.diag(rho))
        mixed += weight * probs
    if spam.s > 0:
        mixed = spam_confusion_matrix(system.qubits, spam.s) @ mixed
    return mixed


# =============================================================================
# SAMPLING
# =============================================================================
def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for (seed, key); the same key always gives the same stream."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=tuple(key))))


def sample_measurements(p, shots: int, rng: np.random.Generator) -> NDArray:
    """
    Multinomial counts from `shots` CDF-inversion draws.

    Raises:
        ValueError: If p has negative entries or does not sum to 1
    """
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0 or not np.all(np.isfinite(p)):
        raise ValueError(ErrorMessage.INVALID_PROBABILITIES.format(reason="not a finite vector"))
    if np.any(p < -1e-9):
        raise ValueError(ErrorMessage.INVALID_PROBABILITIES.format(reason=f"negative entry {p.min():.3g}"))
    if abs(p.sum() - 1.0) > 1e-6:
        raise ValueError(ErrorMessage.INVALID_PROBABILITIES.format(reason=f"sums to {p.sum():.12g}"))
    if shots < 1:
        raise ValueError(ErrorMessage.VALUE_RANGE.format(name="shots", bounds="[1, inf)", value=shots))

    cdf = np.cumsum(np.clip(p, 0.0, None))
    cdf /= cdf[-1]
    outcomes = np.searchsorted(cdf, rng.random(shots), side="right")
    outcomes = np.clip(outcomes, 0, p.size - 1)
    return np.bincount(outcomes, minlength=p.size)


# =============================================================================
# DATASETS
# =============================================================================
@dataclass(frozen=True, eq=False)
class Dataset:
    """
    P constant pulses of duration T with their observations.

    Exactly one of `counts` (finite shots) or `probs` (shots == 0, exact) is set.
    """
    pulses: NDArray
    duration: float
    shots: int
    counts: Optional[NDArray] = None
    probs: Optional[NDArray] = None
    meta: Dict = field(default_factory=dict)

    def __post_init__(self):
        pulses = np.asarray(self.pulses, dtype=np.float64)
        if pulses.ndim != 2 or pulses.shape[0] < 1:
            raise DimensionError(ErrorMessage.DIMENSION_MISMATCH.format(
                what="pulse array", expected="(P >= 1, D)", found=pulses.shape))
        object.__setattr__(self, "pulses", pulses)
        if (self.counts is None) == (self.probs is None):
            raise ValueError("A dataset carries either counts or exact probabilities")
        if self.shots == EXACT_SHOTS:
            if self.probs is None:
                raise ValueError("Exact datasets (shots = 0) carry probabilities")
            probs = np.asarray(self.probs, dtype=np.float64)
            if probs.shape[0] != pulses.shape[0] or np.max(np.abs(probs.sum(axis=1) - 1.0)) > 1e-6:
                raise ValueError(ErrorMessage.INVALID_PROBABILITIES.format(reason="rows must sum to 1"))
            object.__setattr__(self, "probs", probs)
        else:
            if self.counts is None:
                raise ValueError("Finite-shot datasets carry counts")
            counts = np.asarray(self.counts, dtype=np.int64)
            if counts.shape[0] != pulses.shape[0] or np.any(counts.sum(axis=1) != self.shots):
                raise ValueError(f"Every count row must sum to S = {self.shots}")
            object.__setattr__(self, "counts", counts)

    @property
    def size(self) -> int:
        return self.pulses.shape[0]

    @property
    def exact(self) -> bool:
        return self.shots == EXACT_SHOTS

    @property
    def observed(self) -> NDArray:
        """p-hat: counts / S, or the exact probabilities."""
        return self.probs if self.exact else self.counts / float(self.shots)

    def pulse(self, i: int) -> ControlPulse:
        return ControlPulse(self.pulses[i], self.duration)


def measure_pulses(system: TrueSystem, spam: SpamModel, pulses, shots: int, duration: float, seed: int,
                   threads: int = 1, meta: Optional[Dict] = None) -> Dataset:
    """
    Measure a given pulse set on the mock hardware.

    Pulse i draws its shots from substream(seed, i, 1) so results do not depend
    on the worker schedule.
    """
    pulses = np.asarray(pulses, dtype=np.float64)
    if pulses.ndim != 2 or pulses.shape[1] != system.n_drives:
        raise DimensionError(ErrorMessage.DIMENSION_MISMATCH.format(
            what="pulse array", expected=f"(P, {system.n_drives})", found=pulses.shape))
    if shots < 0:
        raise ValueError(ErrorMessage.VALUE_RANGE.format(name="shots", bounds="[0, inf)", value=shots))

    def observe(i: int) -> NDArray:
        p = true_probs(system, spam, ControlPulse(pulses[i], duration))
        if shots == EXACT_SHOTS:
            return p
        return sample_measurements(p, shots, substream(seed, i, 1))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            rows = list(executor.map(observe, range(pulses.shape[0])))
    else:
        rows = [observe(i) for i in range(pulses.shape[0])]

    info = {"seed": int(seed), "T": float(duration), "S": int(shots), "P": int(pulses.shape[0]),
            "s": float(spam.s), "system": system.tag}
    info.update(meta or {})
    observations = np.array(rows)
    if shots == EXACT_SHOTS:
        return Dataset(pulses, duration, shots, probs=observations, meta=info)
    return Dataset(pulses, duration, shots, counts=observations, meta=info)


def random_pulses(count: int, n_drives: int, seed: int, stream: int = 0) -> NDArray:
    """Unit-variance Gaussian amplitudes; pulse i comes from substream(seed, i, stream)."""
    return np.array([substream(seed, i, stream).standard_normal(n_drives) for i in range(count)])


def generate_dataset(system: TrueSystem, spam: SpamModel, P: int, S: int, T: float, seed: int,
                     threads: int = 1) -> Dataset:
    """
    P random constant pulses measured with S shots each (S = 0: exact probabilities).

    Args:
        system: True system
        spam: SPAM model
        P: Number of pulses
        S: Shots per pulse, 0 for exact data
        T: Pulse duration
        seed: Dataset seed
        threads: Worker threads for the per-pulse evaluation

    Returns:
        Dataset, bit-identical for identical arguments
    """
    if P < 1:
        raise ValueError(ErrorMessage.VALUE_RANGE.format(name="P", bounds="[1, inf)", value=P))
    pulses = random_pulses(P, system.n_drives, seed)
    return measure_pulses(system, spam, pulses, S, T, seed, threads)
