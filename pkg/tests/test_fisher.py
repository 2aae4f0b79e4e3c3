"""Tests for core.fisher module"""
import unittest

import numpy as np

from common.constants import AnnealSchedule, DistanceKind
from core.estimation import FitConfig, fit
from core.fisher import (
    FisherMatrix,
    as_pulses,
    crb_report,
    design_pulses,
    fisher_per_pulse,
    fisher_total,
    gauge_direction,
    log_det_information,
    normalise_power,
)
from core.hardware import PAULI_X, Dataset, build_true_system, random_pulses, sample_measurements, substream
from core.models import ControlPulse, ModelSpec, OperatorBasis


class TestFisherInformation(unittest.TestCase):
    """Test per-pulse and total Fisher information"""

    def setUp(self):
        self.rabi = ModelSpec.linear_mix(OperatorBasis(np.array([PAULI_X]), ("X1",)), 1, drift=False)
        self.system = build_true_system(1, seed=3)
        self.model = self.system.hamiltonian_spec()
        self.omega = self.system.omega_true(self.model)
        self.pulses = as_pulses(random_pulses(5, self.model.n_drives, seed=1), 1.0)

    def test_rabi_information(self):
        """Test I = 4 T^2 d^2 for a single-parameter Rabi drive"""
        for a, d, T in [(0.4, 1.0, 1.3), (0.9, 0.5, 0.7)]:
            info = fisher_per_pulse(np.array([a]), self.rabi, ControlPulse([d], T))
            self.assertAlmostEqual(info.entries[0, 0], 4 * T ** 2 * d ** 2, places=8)

    def test_symmetric_psd(self):
        """Test that the total information is symmetric positive semidefinite"""
        info = fisher_total(self.omega, self.model, self.pulses, shots=10)
        np.testing.assert_allclose(info.entries, info.entries.T)
        self.assertGreater(info.min_eigenvalue(), -1e-8 * np.abs(info.entries).max())
        self.assertEqual(info.pulse_count, 5)

    def test_additive(self):
        """Test additivity over pulses and linearity in shots"""
        whole = fisher_total(self.omega, self.model, self.pulses, shots=4)
        parts = (fisher_total(self.omega, self.model, self.pulses[:2], shots=4)
                 + fisher_total(self.omega, self.model, self.pulses[2:], shots=4))
        np.testing.assert_allclose(parts.entries, whole.entries, rtol=1e-12, atol=1e-12)
        self.assertEqual(parts.pulse_count, 5)
        single = fisher_total(self.omega, self.model, self.pulses, shots=1)
        np.testing.assert_allclose(whole.entries, 4 * single.entries, rtol=1e-12)

    def test_unequal_shots_do_not_add(self):
        """Test that Fisher matrices with different shot counts refuse to add"""
        a = FisherMatrix(np.eye(2), 1, 1)
        b = FisherMatrix(np.eye(2), 1, 2)
        with self.assertRaises(ValueError):
            a + b

    def test_invalid_inputs(self):
        """Test zero shots, empty pulse sets and arrays without a duration"""
        with self.assertRaises(ValueError):
            fisher_total(self.omega, self.model, self.pulses, shots=0)
        with self.assertRaises(ValueError):
            fisher_total(self.omega, self.model, [], shots=1)
        with self.assertRaises(ValueError):
            as_pulses(np.zeros((2, 3)))

    def test_gauge_direction_in_null_space(self):
        """Test that the z-rotation tangent carries no information"""
        info = fisher_total(self.omega, self.model, self.pulses, shots=1).entries
        tangent = gauge_direction(self.omega, self.model)
        self.assertGreater(np.linalg.norm(tangent), 0.1)
        self.assertLess(np.linalg.norm(info @ tangent), 1e-8 * np.linalg.norm(info) * np.linalg.norm(tangent))


class TestCrb(unittest.TestCase):
    """Test Cramer-Rao bounds"""

    def test_diagonal(self):
        """Test bounds 1/I_ll for a diagonal matrix"""
        report = crb_report(FisherMatrix(np.diag([4.0, 1.0]), 1, 1))
        np.testing.assert_allclose(report.bounds, [0.25, 1.0])
        self.assertFalse(report.flagged.any())
        self.assertEqual(report.null_space.shape, (2, 0))

    def test_singular_flags(self):
        """Test that parameters overlapping the null space get infinite bounds"""
        report = crb_report(FisherMatrix(np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 2.0]]), 1, 1))
        self.assertTrue(report.flagged[0] and report.flagged[1])
        self.assertFalse(report.flagged[2])
        self.assertTrue(np.isinf(report.bounds[0]))
        self.assertAlmostEqual(report.bounds[2], 0.5)
        payload = report.to_dict(["a", "b", "c"])
        self.assertIsNone(payload["bounds"]["a"])
        self.assertEqual(payload["flagged"], ["a", "b"])
        self.assertEqual(payload["null_dimension"], 1)

    def test_biased_bound(self):
        """Test (1 - db)^2 / I + b^2"""
        report = crb_report(FisherMatrix(np.diag([4.0]), 1, 1), bias=0.1, bias_grad=0.5)
        self.assertAlmostEqual(report.bounds[0], 0.25 * 0.25 + 0.01)

    def test_full_model_gauge_flagged(self):
        """Test that the X/Y entries along the z-rotation orbit are flagged and Z is not"""
        system = build_true_system(1, seed=3)
        model = system.hamiltonian_spec()
        pulses = as_pulses(random_pulses(40, model.n_drives, seed=2), 1.0)
        report = crb_report(fisher_total(system.omega_true(model), model, pulses, shots=100))
        labels = model.labels()
        self.assertTrue(report.flagged[labels.index("alpha[X1,d2]")])
        self.assertTrue(report.flagged[labels.index("alpha[Y1,d1]")])
        self.assertFalse(report.flagged[labels.index("alpha[Z1,d3]")])
        self.assertTrue(np.isfinite(report.bounds[labels.index("beta[Z1]")]))

    def test_maximum_likelihood_spread_near_bound(self):
        """Test that repeated cross-entropy fits of a Rabi drive spread within 3x of the bound"""
        rabi = ModelSpec.linear_mix(OperatorBasis(np.array([PAULI_X]), ("X1",)), 1, drift=False)
        omega = np.array([0.6])
        pulses = random_pulses(8, 1, seed=5)
        shots = 100
        config = FitConfig(distance=DistanceKind.CROSS_ENTROPY, anneal=AnnealSchedule.NONE, batch_size=8,
                           max_epochs=400, patience=20)
        estimates = []
        for trial in range(30):
            rng = substream(11, trial)
            counts = np.array([sample_measurements(rabi.predict(omega, ControlPulse(d, 1.0)), shots, rng)
                               for d in pulses])
            dataset = Dataset(pulses, 1.0, shots, counts=counts)
            estimates.append(fit(dataset, rabi, config, omega0=omega).omega_hat[0])
        bound = crb_report(fisher_total(omega, rabi, as_pulses(pulses, 1.0), shots)).bounds[0]
        ratio = np.var(estimates, ddof=1) / bound
        self.assertGreater(ratio, 1.0 / 3.0)
        self.assertLess(ratio, 3.0)


class TestDesign(unittest.TestCase):
    """Test D-optimal pulse design"""

    @classmethod
    def setUpClass(cls):
        cls.system = build_true_system(1, seed=3)
        cls.model = cls.system.hamiltonian_spec()
        cls.omega = cls.system.omega_true(cls.model)

    def test_zero_steps_returns_dataset_pulses(self):
        """Test that no ascent steps keep the seeded initialization"""
        result = design_pulses(self.omega, self.model, 6, 1.0, steps=0, seed=4)
        np.testing.assert_array_equal(result.pulses, random_pulses(6, self.model.n_drives, 4))
        self.assertEqual(len(result.log_det_trace), 1)
        self.assertAlmostEqual(result.initial_log_det,
                               log_det_information(self.omega, self.model, result.pulses, 1.0))

    def test_ascent_keeps_power(self):
        """Test that ascent moves the pulses, records every step and restores their power"""
        result = design_pulses(self.omega, self.model, 6, 1.0, power=1.0, steps=4, lr=0.02, seed=4)
        self.assertEqual(len(result.log_det_trace), 5)
        self.assertTrue(np.all(np.isfinite(result.log_det_trace)))
        self.assertFalse(np.allclose(result.pulses, result.initial_pulses))
        self.assertAlmostEqual(float(np.mean(result.pulses ** 2)), 1.0)
        np.testing.assert_array_equal(result.initial_pulses, random_pulses(6, self.model.n_drives, 4))

    def test_invalid_design(self):
        """Test wrong initial shapes and non-positive power"""
        with self.assertRaises(ValueError):
            design_pulses(self.omega, self.model, 6, 1.0, initial=np.zeros((5, 3)), steps=0)
        with self.assertRaises(ValueError):
            design_pulses(self.omega, self.model, 6, 1.0, power=0.0, steps=0)

    def test_ascent_raises_log_det_on_device(self):
        """Test that ascent on the three-qubit device beats the random pulses at the same power"""
        system = build_true_system(3, seed=2021)
        model = system.hamiltonian_spec()
        omega = system.omega_true(model)
        result = design_pulses(omega, model, 4, 1.0, power=1.0, steps=3, lr=0.02, seed=0)
        baseline = log_det_information(omega, model, normalise_power(result.initial_pulses, 1.0), 1.0)
        self.assertGreater(result.final_log_det, baseline)

    def test_normalise_power(self):
        """Test that rescaled pulses have the requested mean square and keep their direction"""
        pulses = random_pulses(5, 3, seed=1)
        scaled = normalise_power(pulses, 2.5)
        self.assertAlmostEqual(float(np.mean(scaled ** 2)), 2.5)
        np.testing.assert_allclose(scaled / np.linalg.norm(scaled), pulses / np.linalg.norm(pulses))
        with self.assertRaises(ValueError):
            normalise_power(pulses, 0.0)


if __name__ == '__main__':
    unittest.main()
