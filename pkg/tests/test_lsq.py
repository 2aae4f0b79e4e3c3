"""Tests for core.lsq module"""
import unittest

import numpy as np

from core.lsq import least_squares_line, lsq_experiment, lsq_trials


class TestLeastSquaresLine(unittest.TestCase):
    """Test the closed-form line fit"""

    def test_exact_line(self):
        """Test that noiseless data return the true coefficients"""
        x = np.array([-1.0, 0.0, 2.0, 3.5])
        intercept, slope = least_squares_line(x, 0.3 + 0.7 * x)
        self.assertAlmostEqual(float(intercept), 0.3)
        self.assertAlmostEqual(float(slope), 0.7)

    def test_batched(self):
        """Test fitting several datasets along the last axis"""
        x = np.array([[0.0, 1.0, 2.0], [1.0, 2.0, 4.0]])
        y = np.array([[1.0, 3.0, 5.0], [0.0, -1.0, -3.0]])
        intercept, slope = least_squares_line(x, y)
        np.testing.assert_allclose(intercept, [1.0, 1.0])
        np.testing.assert_allclose(slope, [2.0, -1.0])


class TestLsqExperiment(unittest.TestCase):
    """Test the validation-floor oracle"""

    def test_v_opt_matches_prediction(self):
        """Test that mean V_opt is p/(PS) within 15% over 1000 trials"""
        result = lsq_experiment(P=32, S=16, p=0.25, trials=1000, seed=0)
        self.assertAlmostEqual(result.predicted, 0.25 / (32 * 16))
        self.assertGreater(result.mean_v_opt / result.predicted, 0.85)
        self.assertLess(result.mean_v_opt / result.predicted, 1.15)

    def test_v_opt_over_seeds(self):
        """Test the 15% band for several seeds and grid points"""
        for seed, (P, S) in enumerate([(16, 4), (64, 16), (128, 64)]):
            result = lsq_experiment(P=P, S=S, p=0.25, trials=1000, seed=seed)
            self.assertAlmostEqual(result.mean_v_opt / result.predicted, 1.0, delta=0.15)

    def test_full_error_is_twice_the_prediction(self):
        """Test that the full in-sample error averages 2 p/(PS) and splits into V_opt plus the slope term"""
        result = lsq_experiment(P=32, S=16, p=0.25, trials=1000, seed=1)
        self.assertAlmostEqual(result.mean_v_full / result.predicted, 2.0, delta=0.2)
        self.assertAlmostEqual(result.mean_v_opt + result.mean_v_slope, result.mean_v_full, places=15)
        self.assertGreater(result.mean_v_slope, 0.0)

    def test_halves_with_pulses(self):
        """Test that doubling P roughly halves V_opt"""
        small = lsq_experiment(P=32, S=8, p=0.25, trials=1000, seed=2)
        large = lsq_experiment(P=64, S=8, p=0.25, trials=1000, seed=2)
        self.assertAlmostEqual(small.predicted / large.predicted, 2.0)
        ratio = small.mean_v_opt / large.mean_v_opt
        self.assertGreater(ratio, 1.6)
        self.assertLess(ratio, 2.5)

    def test_noiseless(self):
        """Test that p = 0 fits the line exactly"""
        v_opt, v_full = lsq_trials(P=10, S=4, p=0.0, trials=20, seed=0)
        self.assertEqual(float(v_opt.max()), 0.0)
        self.assertLess(float(v_full.max()), 1e-25)

    def test_v_opt_never_exceeds_full_error(self):
        """Test that the mean-residual term is part of the full error in every trial"""
        v_opt, v_full = lsq_trials(P=12, S=3, p=0.5, trials=200, seed=5)
        self.assertTrue(np.all(v_opt <= v_full + 1e-15))

    def test_reproducible(self):
        """Test that the same seed gives the same trials"""
        a, _ = lsq_trials(P=8, S=2, p=0.5, trials=10, seed=3)
        b, _ = lsq_trials(P=8, S=2, p=0.5, trials=10, seed=3)
        np.testing.assert_array_equal(a, b)

    def test_invalid_arguments(self):
        """Test the argument ranges"""
        with self.assertRaises(ValueError):
            lsq_trials(P=2, S=1, p=0.5, trials=1, seed=0)
        with self.assertRaises(ValueError):
            lsq_trials(P=5, S=0, p=0.5, trials=1, seed=0)
        with self.assertRaises(ValueError):
            lsq_trials(P=5, S=1, p=1.5, trials=1, seed=0)

    def test_row(self):
        """Test the CSV row layout"""
        row = lsq_experiment(P=8, S=2, p=0.5, trials=10, seed=0).to_row()
        self.assertEqual(set(row), {"P", "S", "p", "trials", "mean_v_opt", "mean_v_slope", "mean_v_full",
                                    "predicted"})


if __name__ == '__main__':
    unittest.main()
