"""Tests for core.linalg module"""
import unittest

import numpy as np
from scipy.linalg import expm

from common.errors import DimensionError, NumericalError
from core.linalg import (
    as_square,
    check_hermitian,
    dexp_frechet,
    dexp_frechet_on_state,
    eig_hermitian,
    evolve_unitary,
    frechet_kernel,
    hermitian_from_parts,
    propagator,
    reconstruction_error,
)


def random_hermitian(n, rng):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return 0.5 * (a + a.conj().T)


class TestHermitianChecks(unittest.TestCase):
    """Test input validation"""

    def test_non_square_rejected(self):
        """Test that a non-square matrix raises DimensionError"""
        with self.assertRaises(DimensionError):
            as_square(np.zeros((2, 3)))

    def test_non_finite_rejected(self):
        """Test that NaN entries raise NumericalError"""
        with self.assertRaises(NumericalError):
            as_square(np.array([[np.nan, 0], [0, 1]]))

    def test_non_hermitian_rejected(self):
        """Test that a matrix far from its adjoint is rejected"""
        with self.assertRaises(ValueError):
            check_hermitian(np.array([[0, 1], [0, 0]], dtype=complex))

    def test_hermitian_from_parts(self):
        """Test H = sym + i antisym and the symmetry checks on the parts"""
        sym = np.array([[1.0, 2.0], [2.0, -1.0]])
        anti = np.array([[0.0, 0.5], [-0.5, 0.0]])
        H = hermitian_from_parts(sym, anti)
        np.testing.assert_allclose(H, H.conj().T)
        self.assertAlmostEqual(H[0, 1], 2.0 + 0.5j)
        with self.assertRaises(ValueError):
            hermitian_from_parts(anti, anti)
        with self.assertRaises(DimensionError):
            hermitian_from_parts(sym, np.zeros((3, 3)))


class TestEigenAndPropagator(unittest.TestCase):
    """Test eigendecomposition and time evolution against scipy.linalg.expm"""

    def setUp(self):
        self.rng = np.random.default_rng(11)

    def test_reconstruction(self):
        """Test that the eigendecomposition reconstructs H"""
        for n in (2, 4, 8, 16):
            H = random_hermitian(n, self.rng)
            eig = eig_hermitian(H)
            self.assertLess(reconstruction_error(H, eig), 1e-12)
            self.assertTrue(np.all(np.diff(eig.eigenvalues) >= 0))

    def test_propagator_matches_expm(self):
        """Test U = exp(-iHT) against scipy"""
        H = random_hermitian(8, self.rng)
        np.testing.assert_allclose(propagator(H, 0.7), expm(-0.7j * H), atol=1e-12)

    def test_unitarity_and_norm(self):
        """Test that evolution preserves the state norm"""
        H = random_hermitian(8, self.rng)
        U = propagator(H, 2.3)
        np.testing.assert_allclose(U.conj().T @ U, np.eye(8), atol=1e-12)
        psi = self.rng.standard_normal(8) + 1j * self.rng.standard_normal(8)
        psi /= np.linalg.norm(psi)
        self.assertAlmostEqual(np.linalg.norm(evolve_unitary(H, 2.3, psi)), 1.0, places=12)

    def test_group_property(self):
        """Test that evolving for T2 then T1 equals evolving for T1 + T2"""
        H = random_hermitian(8, self.rng)
        psi = self.rng.standard_normal(8) + 1j * self.rng.standard_normal(8)
        psi /= np.linalg.norm(psi)
        stepped = evolve_unitary(H, 0.4, evolve_unitary(H, 1.1, psi))
        np.testing.assert_allclose(stepped, evolve_unitary(H, 1.5, psi), atol=1e-9)
        np.testing.assert_allclose(propagator(H, 0.4) @ propagator(H, 1.1), propagator(H, 1.5), atol=1e-9)

    def test_time_energy_rescaling(self):
        """Test that scaling H by c equals scaling the duration by c"""
        H = random_hermitian(4, self.rng)
        psi = np.zeros(4, dtype=complex)
        psi[0] = 1.0
        for c in (0.5, 3.0):
            np.testing.assert_allclose(evolve_unitary(c * H, 0.8, psi), evolve_unitary(H, 0.8 * c, psi), atol=1e-9)

    def test_zero_duration_is_identity(self):
        """Test that T = 0 gives the identity"""
        H = random_hermitian(4, self.rng)
        np.testing.assert_allclose(propagator(H, 0.0), np.eye(4), atol=1e-14)

    def test_negative_duration_rejected(self):
        """Test that T < 0 raises ValueError"""
        with self.assertRaises(ValueError):
            propagator(np.eye(2), -1.0)

    def test_state_length_checked(self):
        """Test that a wrong-length state raises DimensionError"""
        with self.assertRaises(DimensionError):
            evolve_unitary(np.eye(2), 1.0, np.ones(3))


class TestFrechet(unittest.TestCase):
    """Test the Frechet derivative of the matrix exponential"""

    def setUp(self):
        self.rng = np.random.default_rng(5)

    def test_matches_central_difference(self):
        """Test the derivative against central differences of expm"""
        for _ in range(10):
            H = random_hermitian(4, self.rng)
            dH = random_hermitian(4, self.rng)
            T, h = 1.3, 1e-6
            fd = (expm(-1j * T * (H + h * dH)) - expm(-1j * T * (H - h * dH))) / (2 * h)
            np.testing.assert_allclose(dexp_frechet(H, T, dH), fd, atol=1e-7)

    def test_degenerate_spectrum(self):
        """Test the limit formula when eigenvalues coincide"""
        H = np.diag([1.0, 1.0, -2.0]).astype(complex)
        dH = random_hermitian(3, self.rng)
        T, h = 0.9, 1e-6
        fd = (expm(-1j * T * (H + h * dH)) - expm(-1j * T * (H - h * dH))) / (2 * h)
        np.testing.assert_allclose(dexp_frechet(H, T, dH), fd, atol=1e-7)

    def test_kernel_diagonal(self):
        """Test that the kernel diagonal is -iT exp(-i lambda T)"""
        lam = np.array([0.3, -1.2])
        K = frechet_kernel(lam, 2.0)
        np.testing.assert_allclose(np.diag(K), -2j * np.exp(-2j * lam))

    def test_on_state_matches_dense(self):
        """Test the stacked state form against the dense derivative"""
        H = random_hermitian(4, self.rng)
        dirs = np.array([random_hermitian(4, self.rng) for _ in range(3)])
        psi = np.zeros(4, dtype=complex)
        psi[1] = 1.0
        eig = eig_hermitian(H)
        stacked = dexp_frechet_on_state(eig, 0.8, dirs, psi)
        for l in range(3):
            np.testing.assert_allclose(stacked[l], dexp_frechet(H, 0.8, dirs[l]) @ psi, atol=1e-12)

    def test_linear_in_direction(self):
        """Test that the derivative is linear in dH"""
        H = random_hermitian(4, self.rng)
        dH1, dH2 = random_hermitian(4, self.rng), random_hermitian(4, self.rng)
        a, b = 0.7, -2.3
        np.testing.assert_allclose(dexp_frechet(H, 1.1, a * dH1 + b * dH2),
                                   a * dexp_frechet(H, 1.1, dH1) + b * dexp_frechet(H, 1.1, dH2), atol=1e-12)

    def test_shape_mismatch(self):
        """Test that dH of a different shape raises DimensionError"""
        with self.assertRaises(DimensionError):
            dexp_frechet(np.eye(2), 1.0, np.eye(3))


if __name__ == '__main__':
    unittest.main()
