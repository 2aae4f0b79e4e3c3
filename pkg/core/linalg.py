"""
Dense complex linear algebra for small Hermitian generators.

Everything here is a pure function of its inputs so it can be called from any
number of worker threads. Matrices are numpy arrays of complex128; the
dimension is 2^Q with Q <= 4.
"""
import logging
from typing import NamedTuple, Optional

import numpy as np
from numpy.typing import NDArray

from common.constants import LOGGER_NAME, TOLERANCES, ErrorMessage, Tolerances
from common.errors import DimensionError, EigensolverError, NumericalError

logger = logging.getLogger(f"{LOGGER_NAME}.linalg")

ComplexMatrix = NDArray[np.complex128]
RealMatrix = NDArray[np.float64]
StateVector = NDArray[np.complex128]


class EigenDecomposition(NamedTuple):
    """Eigenvalues in ascending order and unitary eigenvectors (columns)."""
    eigenvalues: NDArray[np.float64]
    eigenvectors: ComplexMatrix

    def reconstruct(self) -> ComplexMatrix:
        vecs = self.eigenvectors
        return (vecs * self.eigenvalues) @ vecs.conj().T


def as_square(matrix, what: str = "matrix") -> NDArray:
    """Return `matrix` as a square 2-D array with finite entries."""
    arr = np.asarray(matrix)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
        raise DimensionError(ErrorMessage.DIMENSION_MISMATCH.format(
            what=what, expected="non-empty square matrix", found=arr.shape))
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"{what} has non-finite entries")
    return arr


def _max_deviation(matrix: NDArray, sign: float) -> float:
    """max |M - sign * M^T| (transpose, not adjoint)."""
    if matrix.size == 0:
        return 0.0
    return float(np.max(np.abs(matrix - sign * matrix.T)))


def check_hermitian(H, what: str = "H", tolerances: Tolerances = TOLERANCES) -> ComplexMatrix:
    """
    Validate that `H` is Hermitian within the configured tolerance.

    Args:
        H: Candidate matrix
        what: Name used in error messages
        tolerances: Tolerance record

    Returns:
        H as a complex128 array

    Raises:
        DimensionError: If H is not square
        ValueError: If H deviates from its adjoint by more than tolerances.hermitian
    """
    arr = as_square(H, what).astype(np.complex128, copy=False)
    dev = float(np.max(np.abs(arr - arr.conj().T)))
    if dev > tolerances.hermitian:
        raise ValueError(ErrorMessage.NOT_SYMMETRIC.format(
            what=what, kind="Hermitian", tol=tolerances.hermitian, dev=dev))
    return arr


def hermitian_from_parts(sym, antisym, tolerances: Tolerances = TOLERANCES) -> ComplexMatrix:
    """
    Build H = sym + i * antisym from a real symmetric and a real antisymmetric matrix.

    Raises:
        DimensionError: If the two parts differ in shape or are not square
        ValueError: If sym is not symmetric or antisym not antisymmetric
    """
    sym = as_square(np.asarray(sym, dtype=np.float64), "sym")
    antisym = as_square(np.asarray(antisym, dtype=np.float64), "antisym")
    if sym.shape != antisym.shape:
        raise DimensionError(ErrorMessage.DIMENSION_MISMATCH.format(
            what="antisym shape", expected=sym.shape, found=antisym.shape))

    dev = _max_deviation(sym, 1.0)
    if dev > tolerances.hermitian:
        raise ValueError(ErrorMessage.NOT_SYMMETRIC.format(
            what="sym", kind="symmetric", tol=tolerances.hermitian, dev=dev))
    dev = _max_deviation(antisym, -1.0)
    if dev > tolerances.hermitian:
        raise ValueError(ErrorMessage.NOT_SYMMETRIC.format(
            what="antisym", kind="antisymmetric", tol=tolerances.hermitian, dev=dev))

    return sym + 1j * antisym


def _condition_diagnostics(H: NDArray) -> str:
    finite = bool(np.all(np.isfinite(H)))
    parts = [f"dim={H.shape[0]}", f"finite={finite}"]
    if finite:
        parts.append(f"frobenius={np.linalg.norm(H):.3g}")
        try:
            parts.append(f"cond={np.linalg.cond(H):.3g}")
        except np.linalg.LinAlgError:
            parts.append("cond=unavailable")
    return ", ".join(parts)


def eig_hermitian(H, tolerances: Tolerances = TOLERANCES, check: bool = True) -> EigenDecomposition:
    """
    Eigendecomposition of a Hermitian matrix with ascending eigenvalues.

    Args:
        H: Hermitian matrix
        tolerances: Tolerance record used by the Hermiticity check
        check: Validate Hermiticity first (callers that build H by construction skip it)

    Returns:
        EigenDecomposition whose factors reconstruct H

    Raises:
        EigensolverError: If LAPACK does not converge; the message carries condition diagnostics
    """
    H = check_hermitian(H, tolerances=tolerances) if check else np.asarray(H, dtype=np.complex128)
    try:
        eigenvalues, eigenvectors = np.linalg.eigh(H)
    except np.linalg.LinAlgError as e:
        raise EigensolverError(ErrorMessage.EIGENSOLVER_FAILED.format(
            error=e, diagnostics=_condition_diagnostics(H))) from e
    return EigenDecomposition(eigenvalues, eigenvectors)


def reconstruction_error(H, eig: EigenDecomposition) -> float:
    """Relative Frobenius residual of V diag(lambda) V^dagger against H."""
    H = np.asarray(H)
    scale = max(float(np.linalg.norm(H)), 1.0)
    return float(np.linalg.norm(eig.reconstruct() - H)) / scale


def _check_duration(T: float) -> None:
    if not np.isfinite(T) or T < 0:
        raise ValueError(ErrorMessage.VALUE_RANGE.format(name="duration T", bounds="[0, inf)", value=T))


def propagator(H, T: float, eig: Optional[EigenDecomposition] = None) -> ComplexMatrix:
    """U = exp(-i H T) through the eigenbasis of H."""
    _check_duration(T)
    if eig is None:
        eig = eig_hermitian(H)
    vecs = eig.eigenvectors
    return (vecs * np.exp(-1j * T * eig.eigenvalues)) @ vecs.conj().T


def evolve_unitary(H, T: float, psi0, eig: Optional[EigenDecomposition] = None) -> StateVector:
    """
    Apply exp(-i H T) to a state vector.

    Args:
        H: Hermitian generator
        T: Duration, T >= 0
        psi0: Initial state (normalized)
        eig: Precomputed eigendecomposition of H

    Returns:
        Final state; its norm equals the input norm within rounding
    """
    _check_duration(T)
    if eig is None:
        eig = eig_hermitian(H)
    psi0 = np.asarray(psi0, dtype=np.complex128)
    if psi0.shape != (eig.eigenvalues.shape[0],):
        raise DimensionError(ErrorMessage.DIMENSION_MISMATCH.format(
            what="state length", expected=eig.eigenvalues.shape[0], found=psi0.shape))
    vecs = eig.eigenvectors
    return vecs @ (np.exp(-1j * T * eig.eigenvalues) * (vecs.conj().T @ psi0))


def frechet_kernel(eigenvalues, T: float, tolerances: Tolerances = TOLERANCES) -> ComplexMatrix:
    """
    Loewner matrix of f(x) = exp(-i x T) on the spectrum.

    Entry (i, j) is the divided difference (f(l_i) - f(l_j)) / (l_i - l_j), or the
    derivative -i T f(l_i) once |l_i - l_j| drops below tolerances.degenerate.
    """
    lam = np.asarray(eigenvalues, dtype=np.float64)
    phases = np.exp(-1j * T * lam)
    gap = lam[:, None] - lam[None, :]
    close = np.abs(gap) < tolerances.degenerate
    safe_gap = np.where(close, 1.0, gap)
    divided = (phases[:, None] - phases[None, :]) / safe_gap
    limit = np.broadcast_to(-1j * T * phases[:, None], divided.shape)
    return np.where(close, limit, divided)


def dexp_frechet(H, T: float, dH, eig: Optional[EigenDecomposition] = None,
                 tolerances: Tolerances = TOLERANCES) -> ComplexMatrix:
    """
    Directional derivative d/de exp(-i (H + e dH) T) at e = 0.

    Args:
        H: Hermitian generator
        T: Duration
        dH: Direction, same shape as H
        eig: Precomputed eigendecomposition of H

    Returns:
        The derivative as a dense complex matrix

    Raises:
        DimensionError: If H and dH differ in shape
    """
    H = as_square(H, "H")
    dH = as_square(dH, "dH")
    if H.shape != dH.shape:
        raise DimensionError(ErrorMessage.DIMENSION_MISMATCH.format(
            what="dH shape", expected=H.shape, found=dH.shape))
    if eig is None:
        eig = eig_hermitian(H, tolerances)
    vecs = eig.eigenvectors
    kernel = frechet_kernel(eig.eigenvalues, T, tolerances)
    rotated = vecs.conj().T @ dH @ vecs
    return vecs @ (kernel * rotated) @ vecs.conj().T


def dexp_frechet_on_state(eig: EigenDecomposition, T: float, directions, psi,
                          tolerances: Tolerances = TOLERANCES) -> NDArray[np.complex128]:
    """
    Apply the Frechet derivative along a stack of directions to one state.

    Args:
        eig: Eigendecomposition of the generator
        T: Duration
        directions: Array (L, n, n) of Hermitian directions
        psi: State the derivative acts on

    Returns:
        Array (L, n) whose row l is dexp_frechet(H, T, directions[l]) @ psi
    """
    vecs = eig.eigenvectors
    kernel = frechet_kernel(eig.eigenvalues, T, tolerances)
    rotated = np.einsum("ai,lab,bj->lij", vecs.conj(), directions, vecs, optimize=True)
    coeffs = vecs.conj().T @ np.asarray(psi, dtype=np.complex128)
    return ((kernel * rotated) @ coeffs) @ vecs.T
