"""Tests for data.artifacts module"""
import unittest
import csv
import hashlib
import json
import os
import shutil
import tempfile

import numpy as np

from common.constants import MANIFEST_FILE, DistanceKind
from common.errors import ArtifactError
from data.artifacts import ArtifactWriter, sha256_file, to_jsonable


class TestToJsonable(unittest.TestCase):
    """Test conversion of numpy values and enums"""

    def test_numpy_values(self):
        """Test scalars, arrays and nested containers"""
        value = to_jsonable({"a": np.arange(3), "b": (np.int64(2), np.float32(0.5)), 3: np.bool_(True)})
        self.assertEqual(value, {"a": [0, 1, 2], "b": [2, 0.5], "3": True})
        self.assertIsInstance(value["b"][0], int)

    def test_non_finite_to_none(self):
        """Test that NaN and infinities become null"""
        self.assertEqual(to_jsonable([float("nan"), np.inf, 1.5]), [None, None, 1.5])
        json.dumps(to_jsonable(np.array([np.nan, -np.inf])), allow_nan=False)

    def test_enum(self):
        """Test that enums are written by value"""
        self.assertEqual(to_jsonable(DistanceKind.MSE), "mse")


class TestArtifactWriter(unittest.TestCase):
    """Test CSV, JSON and manifest output"""

    def setUp(self):
        self.test_dir = tempfile.mkdtemp()
        self.out = os.path.join(self.test_dir, "run")
        self.writer = ArtifactWriter(self.out)

    def tearDown(self):
        if os.path.exists(self.test_dir):
            shutil.rmtree(self.test_dir)

    def test_creates_directory(self):
        """Test that the output directory is created"""
        self.assertTrue(os.path.isdir(self.out))
        self.assertEqual(self.writer.error_count, 0)

    def test_write_csv(self):
        """Test header order, missing keys and ignored extras"""
        path = self.writer.write_csv("table.csv", ["P", "S", "cost"],
                                     [{"P": 4, "S": 8, "cost": np.float64(0.25), "extra": 1}, {"P": 8}])
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
        self.assertEqual(rows[0], ["P", "S", "cost"])
        self.assertEqual(rows[1], ["4", "8", "0.25"])
        self.assertEqual(rows[2], ["8", "", ""])
        self.assertEqual(self.writer.written["table.csv"], path)

    def test_write_json_sorted(self):
        """Test that JSON output is sorted and numpy-free"""
        path = self.writer.write_json("report.json", {"b": np.array([1.0, np.nan]), "a": 1})
        with open(path) as f:
            text = f.read()
        self.assertLess(text.index('"a"'), text.index('"b"'))
        self.assertEqual(json.loads(text), {"a": 1, "b": [1.0, None]})

    def test_manifest_hashes(self):
        """Test that the manifest lists a sha256 for every artifact written before it"""
        csv_path = self.writer.write_csv("a.csv", ["x"], [{"x": 1}])
        self.writer.write_json("b.json", {"y": 2})
        path = self.writer.write_manifest("fit", {"data": 1}, {"threads": 1}, {"cost": 0.1}, 0.5)
        self.assertEqual(os.path.basename(path), MANIFEST_FILE)
        with open(path) as f:
            manifest = json.load(f)
        self.assertEqual(set(manifest["artifacts"]), {"a.csv", "b.json"})
        with open(csv_path, "rb") as f:
            self.assertEqual(manifest["artifacts"]["a.csv"], hashlib.sha256(f.read()).hexdigest())
        self.assertEqual(manifest["scenario"], "fit")
        self.assertEqual(manifest["seeds"], {"data": 1})
        self.assertIn("numpy", manifest["versions"])
        self.assertEqual(sha256_file(csv_path), manifest["artifacts"]["a.csv"])

    def test_unwritable_target(self):
        """Test that a failed write raises ArtifactError and is recorded"""
        os.makedirs(os.path.join(self.out, "blocked.csv"))
        with self.assertRaises(ArtifactError):
            self.writer.write_csv("blocked.csv", ["x"], [{"x": 1}])
        self.assertEqual(self.writer.error_count, 1)
        self.assertIn("write_csv", self.writer.last_error)
        self.assertNotIn("blocked.csv", self.writer.written)

    def test_output_is_a_file(self):
        """Test that an output path naming a file is refused"""
        path = os.path.join(self.test_dir, "file")
        with open(path, "w") as f:
            f.write("x")
        with self.assertRaises(ArtifactError):
            ArtifactWriter(path)


if __name__ == '__main__':
    unittest.main()
