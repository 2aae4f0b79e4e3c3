"""Test runner for STEADY

Usage:
    python tests/run_tests.py                 # every test module
    python tests/run_tests.py models fisher   # only test_models.py and test_fisher.py
"""
import unittest
import sys
import os

# Add parent directory to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))


def build_suite(names):
    """Suite of all test_*.py modules, or of the named ones."""
    loader = unittest.TestLoader()
    start_dir = os.path.dirname(os.path.abspath(__file__))
    if not names:
        return loader.discover(start_dir, pattern='test_*.py')
    suite = unittest.TestSuite()
    for name in names:
        suite.addTests(loader.discover(start_dir, pattern=f'test_{name}.py'))
    return suite


def run_all_tests(names=()):
    """Run the selected tests; exit code 0 when all pass"""
    runner = unittest.TextTestRunner(verbosity=2)
    result = runner.run(build_suite(list(names)))
    return 0 if result.wasSuccessful() else 1


if __name__ == '__main__':
    sys.exit(run_all_tests(sys.argv[1:]))
