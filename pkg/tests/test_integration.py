"""
Integration tests: full scenario runs through main() on tiny configurations
"""
import unittest
import csv
import json
import os
import shutil
import tempfile
from unittest import mock

import numpy as np

from common.constants import (
    DATASET_FILE,
    EXIT_CONFIG_ERROR,
    EXIT_NUMERICAL_FAILURE,
    EXIT_OK,
    MANIFEST_FILE,
    REPORT_FILE,
    VALIDATION_FILE,
)
from common.errors import DimensionError, FitDivergedError
from core.engine import Engine
from core.fisher import log_det_information, normalise_power
from core.hardware import build_true_system, random_pulses
from main import build_parser, main

TEMPLATES = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "config", "templates")
# Opt-in switch for runs at the shipped template scale
FULL_SCALE_TESTS = "STEADY_FULL_SCALE_TESTS"

TINY_SYSTEM = {"qubits": 1, "seed": 3}
TINY_FIT = {"max_epochs": 5, "batch_size": 4}
TINY_VALIDATION = {"pulses": 8}


class TestScenarioRuns(unittest.TestCase):
    """Run scenarios end to end in a scratch directory"""

    def setUp(self):
        self.test_dir = tempfile.mkdtemp(prefix="steady_test_")
        self.cwd = os.getcwd()
        # Session logs go to ./logs
        os.chdir(self.test_dir)

    def tearDown(self):
        os.chdir(self.cwd)
        shutil.rmtree(self.test_dir, ignore_errors=True)

    def write_config(self, name, payload):
        path = os.path.join(self.test_dir, name)
        with open(path, "w") as f:
            json.dump(dict({"version": 1}, **payload), f)
        return path

    def run_scenario(self, scenario, payload, out, *extra):
        config = self.write_config(f"{out}.json", dict({"scenario": scenario}, **payload))
        out_dir = os.path.join(self.test_dir, out)
        code = main([scenario, "--config", config, "--out", out_dir, "--threads", "1", "--quiet", *extra])
        return code, out_dir

    def load_json(self, *parts):
        with open(os.path.join(self.test_dir, *parts)) as f:
            return json.load(f)

    def test_lsq_demo(self):
        """Test the least-squares grid: one row per (P, S) plus the manifest"""
        code, out = self.run_scenario("lsq_demo", {
            "data": {"seed": 1},
            "grid": {"pulses": [4, 8], "shots": [2, 4], "trials": 20, "p": 0.25},
        }, "lsq")
        self.assertEqual(code, EXIT_OK)
        with open(os.path.join(out, "lsq_demo.csv"), newline="") as f:
            rows = list(csv.DictReader(f))
        self.assertEqual([(r["P"], r["S"]) for r in rows], [("4", "2"), ("4", "4"), ("8", "2"), ("8", "4")])
        manifest = self.load_json("lsq", MANIFEST_FILE)
        self.assertEqual(manifest["scenario"], "lsq_demo")
        self.assertIn("lsq_demo.csv", manifest["artifacts"])
        self.assertIn("slope_v_opt_vs_PS", manifest["summary"])

    def test_generate_is_reproducible(self):
        """Test that two generate runs with the same seeds write identical datasets"""
        payload = {"system": TINY_SYSTEM, "data": {"pulses": 4, "shots": 10, "seed": 2}}
        self.assertEqual(self.run_scenario("generate", payload, "gen_a")[0], EXIT_OK)
        self.assertEqual(self.run_scenario("generate", payload, "gen_b")[0], EXIT_OK)
        a = self.load_json("gen_a", MANIFEST_FILE)["artifacts"][DATASET_FILE]
        b = self.load_json("gen_b", MANIFEST_FILE)["artifacts"][DATASET_FILE]
        self.assertEqual(a, b)
        dataset = self.load_json("gen_a", DATASET_FILE)
        self.assertEqual(len(dataset["pulses"]), 4)
        self.assertTrue(all(sum(row) == 10 for row in dataset["counts"]))

    def test_seed_flag_changes_data(self):
        """Test that --seed overrides the dataset seed"""
        payload = {"system": TINY_SYSTEM, "data": {"pulses": 4, "shots": 10, "seed": 2}}
        self.run_scenario("generate", payload, "seed_a")
        self.run_scenario("generate", payload, "seed_b", "--seed", "9")
        self.assertEqual(self.load_json("seed_b", DATASET_FILE)["meta"]["seed"], 9)
        self.assertNotEqual(self.load_json("seed_a", DATASET_FILE)["pulses"],
                            self.load_json("seed_b", DATASET_FILE)["pulses"])

    def test_generate_fit_validate(self):
        """Test the chain generate -> fit on the stored dataset -> validate the report"""
        self.run_scenario("generate", {"system": TINY_SYSTEM, "data": {"pulses": 6, "shots": 20, "seed": 2}},
                          "gen")
        dataset_path = os.path.join(self.test_dir, "gen", DATASET_FILE)

        code, _ = self.run_scenario("fit", {
            "system": TINY_SYSTEM, "data": {"dataset": dataset_path},
            "fit": TINY_FIT, "validation": TINY_VALIDATION,
        }, "fit")
        self.assertEqual(code, EXIT_OK)
        report = self.load_json("fit", REPORT_FILE)
        self.assertEqual(len(report["omega_hat"]), len(report["labels"]))
        self.assertIn("beta[Z1]", report["labels"])
        self.assertEqual(report["dataset"]["P"], 6)
        self.assertFalse(os.path.exists(os.path.join(self.test_dir, "fit", DATASET_FILE)))

        code, _ = self.run_scenario("validate", {
            "system": TINY_SYSTEM,
            "data": {"report": os.path.join(self.test_dir, "fit", REPORT_FILE)},
            "validation": TINY_VALIDATION,
        }, "val")
        self.assertEqual(code, EXIT_OK)
        result = self.load_json("val", VALIDATION_FILE)
        self.assertGreaterEqual(result["V"], 0.0)
        self.assertEqual(set(result["per_distance"]), {"mse", "mae", "bhattacharyya", "cross_entropy"})
        self.assertIn("gauge_error", result)

    def test_fit_writes_its_dataset(self):
        """Test that a fit without data.dataset stores the data it generated"""
        code, out = self.run_scenario("fit", {
            "system": TINY_SYSTEM, "data": {"pulses": 4, "shots": 0},
            "fit": TINY_FIT, "validation": TINY_VALIDATION,
        }, "fit_exact")
        self.assertEqual(code, EXIT_OK)
        self.assertIn("probs", self.load_json("fit_exact", DATASET_FILE))
        self.assertTrue(os.path.isfile(os.path.join(out, REPORT_FILE)))

    def test_scan_ps_grid(self):
        """Test a small P x S grid including exact data"""
        code, out = self.run_scenario("scan_ps", {
            "system": TINY_SYSTEM, "data": {"seed": 1},
            "grid": {"pulses": [3, 5], "shots": [0, 10]},
            "fit": TINY_FIT, "validation": TINY_VALIDATION,
        }, "scan", "--threads", "2")
        self.assertEqual(code, EXIT_OK)
        with open(os.path.join(out, "scan_ps.csv"), newline="") as f:
            rows = list(csv.DictReader(f))
        self.assertEqual([(r["P"], r["S"]) for r in rows], [("3", "0"), ("3", "10"), ("5", "0"), ("5", "10")])
        self.assertEqual(float(rows[0]["floor"]), 0.0)
        self.assertGreater(float(rows[1]["floor"]), 0.0)
        self.assertIn("max_V_exact", self.load_json("scan", MANIFEST_FILE)["summary"])

    def test_design(self):
        """Test that design writes a pulse set at the requested power"""
        code, out = self.run_scenario("design", {
            "system": TINY_SYSTEM, "data": {"pulses": 3, "seed": 4},
            "design": {"steps": 1, "lr": 0.01},
        }, "design")
        self.assertEqual(code, EXIT_OK)
        design = self.load_json("design", "design.json")
        self.assertEqual(design["meta"]["P"], 3)
        self.assertEqual(design["meta"]["source"], "truth")
        self.assertEqual(len(design["meta"]["log_det_trace"]), 2)
        summary = self.load_json("design", MANIFEST_FILE)["summary"]
        self.assertIn("final_log_det", summary)

    def test_distance_compare(self):
        """Test one row per distance in configured order"""
        code, out = self.run_scenario("distance_compare", {
            "system": TINY_SYSTEM, "data": {"pulses": 4, "shots": 20},
            "grid": {"distances": ["mse", "bhattacharyya"]},
            "fit": TINY_FIT, "validation": TINY_VALIDATION,
        }, "dist")
        self.assertEqual(code, EXIT_OK)
        with open(os.path.join(out, "distance_compare.csv"), newline="") as f:
            rows = list(csv.DictReader(f))
        self.assertEqual([r["distance"] for r in rows], ["mse", "bhattacharyya"])
        self.assertIn(self.load_json("dist", MANIFEST_FILE)["summary"]["best_by_V_mse"], ["mse", "bhattacharyya"])

    def test_validate_with_other_model_fails(self):
        """Test that a report fitted with another model is a configuration error"""
        report = os.path.join(self.test_dir, "report.json")
        with open(report, "w") as f:
            json.dump({"omega_hat": [0.1], "labels": ["a"]}, f)
        code, _ = self.run_scenario("validate", {"system": TINY_SYSTEM, "data": {"report": report},
                                                 "validation": TINY_VALIDATION}, "val_bad")
        self.assertEqual(code, EXIT_CONFIG_ERROR)

    def test_config_errors_exit_2(self):
        """Test unknown keys, bad ranges and a crb_check without shots"""
        self.assertEqual(self.run_scenario("fit", {"fit": {"learning_rate": 0.1}}, "bad_key")[0],
                         EXIT_CONFIG_ERROR)
        self.assertEqual(self.run_scenario("fit", {"system": {"qubits": 1}, "data": {"spam": 1.2}}, "bad_spam")[0],
                         EXIT_CONFIG_ERROR)
        self.assertEqual(self.run_scenario("crb_check", {"system": TINY_SYSTEM, "data": {"pulses": 4, "shots": 0},
                                                         "grid": {"fits": 2}}, "bad_crb")[0],
                         EXIT_CONFIG_ERROR)

    def read_rows(self, out, name):
        with open(os.path.join(out, name), newline="") as f:
            return list(csv.DictReader(f))

    def test_scan_spam(self):
        """Test the s x T grid and the long-pulse gain per SPAM level"""
        code, out = self.run_scenario("scan_spam", {
            "system": TINY_SYSTEM, "data": {"seed": 1},
            "grid": {"pulses": [4], "shots": [20], "spam": [0.0, 0.01], "durations": [1.0, 2.0]},
            "fit": TINY_FIT, "validation": TINY_VALIDATION,
        }, "spam")
        self.assertEqual(code, EXIT_OK)
        rows = self.read_rows(out, "scan_spam.csv")
        self.assertEqual([(float(r["s"]), float(r["T"])) for r in rows],
                         [(0.0, 1.0), (0.0, 2.0), (0.01, 1.0), (0.01, 2.0)])
        summary = self.load_json("spam", MANIFEST_FILE)["summary"]
        self.assertEqual(set(summary["slope_V_vs_s"]), {"T=1", "T=2"})
        self.assertEqual(set(summary["long_pulse_gain"]), {"s=0", "s=0.01"})
        by_point = {(float(r["s"]), float(r["T"])): float(r["V_min"]) for r in rows}
        self.assertAlmostEqual(summary["long_pulse_gain"]["s=0.01"], by_point[(0.01, 1.0)] / by_point[(0.01, 2.0)])

    def test_scan_spam_single_duration(self):
        """Test that one duration reports no long-pulse gain"""
        code, _ = self.run_scenario("scan_spam", {
            "system": TINY_SYSTEM, "grid": {"pulses": [4], "shots": [20], "spam": [0.01], "durations": [1.0]},
            "fit": TINY_FIT, "validation": TINY_VALIDATION,
        }, "spam_one")
        self.assertEqual(code, EXIT_OK)
        self.assertNotIn("long_pulse_gain", self.load_json("spam_one", MANIFEST_FILE)["summary"])

    def test_lindblad_compare(self):
        """Test one Hamiltonian and one Lindblad fit per decay rate"""
        code, out = self.run_scenario("lindblad_compare", {
            "system": TINY_SYSTEM, "data": {"seed": 1},
            "grid": {"pulses": [4], "shots": [20], "decay": [0.05, 0.2]},
            "fit": TINY_FIT, "validation": TINY_VALIDATION,
        }, "lind")
        self.assertEqual(code, EXIT_OK)
        rows = self.read_rows(out, "lindblad_compare.csv")
        self.assertEqual([(float(r["gamma"]), r["model_kind"]) for r in rows],
                         [(0.05, "hamiltonian"), (0.05, "lindblad"), (0.2, "hamiltonian"), (0.2, "lindblad")])
        summary = self.load_json("lind", MANIFEST_FILE)["summary"]
        self.assertIn("slope_hamiltonian_V_vs_gamma", summary)
        self.assertIn("lindblad_V_ratio", summary)

    def test_design_compare(self):
        """Test random and designed rows per shot count, with the random pulses at the design power"""
        power = 2.0
        code, out = self.run_scenario("design_compare", {
            "system": TINY_SYSTEM, "data": {"seed": 4},
            "grid": {"pulses": [3], "shots": [10, 20]},
            "design": {"steps": 1, "lr": 0.01, "power": power},
            "fit": TINY_FIT, "validation": TINY_VALIDATION,
        }, "dcmp")
        self.assertEqual(code, EXIT_OK)
        rows = self.read_rows(out, "design_compare.csv")
        self.assertEqual([(r["S"], r["pulse_kind"]) for r in rows],
                         [("10", "random"), ("10", "designed"), ("20", "random"), ("20", "designed")])
        summary = self.load_json("dcmp", MANIFEST_FILE)["summary"]
        self.assertEqual(set(summary["improvement_factor"]), {"10", "20"})

        system = build_true_system(1, seed=3)
        model = system.hamiltonian_spec()
        baseline = normalise_power(random_pulses(3, model.n_drives, 4), power)
        expected = log_det_information(system.omega_true(model), model, baseline, 1.0)
        self.assertAlmostEqual(summary["initial_log_det"], expected, places=8)
        designed = self.load_json("dcmp", "design.json")
        self.assertAlmostEqual(float(np.mean(np.square(designed["pulses"]))), power)

    def test_incomplete_compare(self):
        """Test complete and incomplete fits per coupling on two qubits"""
        code, out = self.run_scenario("incomplete_compare", {
            "system": {"qubits": 2, "seed": 3}, "data": {"pulses": 4, "shots": 20, "seed": 1},
            "grid": {"coupling": [0.0, 0.1]},
            "fit": TINY_FIT, "validation": TINY_VALIDATION,
        }, "inc")
        self.assertEqual(code, EXIT_OK)
        rows = self.read_rows(out, "incomplete_compare.csv")
        self.assertEqual([r["model_kind"] for r in rows], ["complete", "incomplete", "complete", "incomplete"])
        summary = self.load_json("inc", MANIFEST_FILE)["summary"]
        self.assertEqual(summary["dropped_operator"], "12")
        self.assertIn("slope_incomplete_V_vs_omega", summary)

    def test_crb_check(self):
        """Test one row per parameter and the bound summary"""
        code, out = self.run_scenario("crb_check", {
            "system": TINY_SYSTEM, "data": {"pulses": 6, "shots": 50, "seed": 1},
            "grid": {"fits": 3}, "fit": TINY_FIT,
        }, "crb")
        self.assertEqual(code, EXIT_OK)
        rows = self.read_rows(out, "crb_check.csv")
        model = build_true_system(1, seed=3).hamiltonian_spec()
        self.assertEqual([r["parameter"] for r in rows], model.labels())
        summary = self.load_json("crb", MANIFEST_FILE)["summary"]
        self.assertEqual(summary["fits"], 3)
        self.assertIn("within_factor_3", summary)
        self.assertIn("crb", summary)

    def test_engine_value_errors_exit_2(self):
        """Test that invalid values raised while running map to the configuration exit code"""
        payload = {"grid": {"pulses": [4], "shots": [2], "trials": 5}}
        with mock.patch.object(Engine, "run", side_effect=DimensionError("pulse array has the wrong shape")):
            self.assertEqual(self.run_scenario("lsq_demo", payload, "dim_err")[0], EXIT_CONFIG_ERROR)
        with mock.patch.object(Engine, "run", side_effect=ValueError("duration T out of range")):
            self.assertEqual(self.run_scenario("lsq_demo", payload, "value_err")[0], EXIT_CONFIG_ERROR)
        with mock.patch.object(Engine, "run", side_effect=FitDivergedError("cost is not finite", 3)):
            self.assertEqual(self.run_scenario("lsq_demo", payload, "num_err")[0], EXIT_NUMERICAL_FAILURE)

    def test_session_log_written(self):
        """Test that every run leaves a session log"""
        self.run_scenario("lsq_demo", {"grid": {"pulses": [4], "shots": [2], "trials": 5}}, "log_run")
        logs = os.listdir(os.path.join(self.test_dir, "logs"))
        self.assertEqual(len(logs), 1)
        self.assertTrue(logs[0].endswith(".log"))

class TestTemplateRecovery(unittest.TestCase):
    """Exact-data recovery with the shipped fit template"""

    def setUp(self):
        self.test_dir = tempfile.mkdtemp(prefix="steady_test_")
        self.cwd = os.getcwd()
        os.chdir(self.test_dir)

    def tearDown(self):
        os.chdir(self.cwd)
        shutil.rmtree(self.test_dir, ignore_errors=True)

    def run_template(self, name, **sections):
        with open(os.path.join(TEMPLATES, f"{name}.json")) as f:
            payload = json.load(f)
        for section, values in sections.items():
            payload[section] = dict(payload.get(section) or {}, **values)
        config = os.path.join(self.test_dir, f"{name}.json")
        with open(config, "w") as f:
            json.dump(payload, f)
        out_dir = os.path.join(self.test_dir, name)
        code = main([payload["scenario"], "--config", config, "--out", out_dir, "--quiet"])
        with open(os.path.join(out_dir, MANIFEST_FILE)) as f:
            return code, json.load(f)["summary"]

    def test_fit_template_two_qubits(self):
        """Test that the fit template recovers exact two-qubit data below V = 1e-8"""
        code, summary = self.run_template("fit", system={"qubits": 2},
                                          data={"pulses": 64}, validation={"pulses": 64},
                                          fit={"validate_every": 0})
        self.assertEqual(code, EXIT_OK)
        self.assertLess(summary["V_min"], 1e-8)

    @unittest.skipUnless(os.environ.get(FULL_SCALE_TESTS), f"set {FULL_SCALE_TESTS}=1 for the three-qubit run")
    def test_fit_template_as_shipped(self):
        """Test that the fit template as shipped recovers exact three-qubit data below V = 1e-8"""
        code, summary = self.run_template("fit")
        self.assertEqual(code, EXIT_OK)
        self.assertLess(summary["V_min"], 1e-8)



class TestParser(unittest.TestCase):
    """Test the command line surface"""

    def test_unknown_scenario(self):
        """Test that argparse rejects unknown scenarios with exit code 2"""
        with self.assertRaises(SystemExit) as cm:
            build_parser().parse_args(["scan_everything"])
        self.assertEqual(cm.exception.code, 2)

    def test_flags(self):
        """Test flag parsing"""
        args = build_parser().parse_args(["fit", "--seed", "4", "--threads", "2", "--full-scale", "--quiet"])
        self.assertEqual(args.scenario, "fit")
        self.assertEqual(args.seed, 4)
        self.assertEqual(args.threads, 2)
        self.assertTrue(args.full_scale)
        self.assertTrue(args.quiet)
        self.assertIsNone(build_parser().parse_args(["generate"]).config)


if __name__ == '__main__':
    unittest.main()
