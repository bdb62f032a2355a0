"""End-to-end checks of the speedy command line. Usage: cli_test.py PATH_TO_SPEEDY"""

import filecmp
import json
import os
import subprocess
import sys
import tempfile
import unittest
from pathlib import Path

BINARY = None
FIXTURES = Path(__file__).resolve().parent / "fixtures"


def run(*args, env=None, check=True):
    full_env = {k: v for k, v in os.environ.items() if not k.startswith("SPEEDY_")}
    full_env.update(env or {})
    proc = subprocess.run([BINARY, *map(str, args)], capture_output=True, text=True, env=full_env)
    if check and proc.returncode != 0:
        raise AssertionError(f"{args} exited {proc.returncode}: {proc.stderr}")
    return proc


def fnv1a(data: bytes) -> str:
    h = 0xCBF29CE484222325
    for b in data:
        h = ((h ^ b) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return f"{h:016x}"


def quadtree_boxes(width, height, levels):
    boxes, out = [(0, 0, width, height)], []
    for _ in range(levels):
        out.append(boxes)
        nxt = []
        for x0, y0, x1, y1 in boxes:
            mx, my = x0 + (x1 - x0) // 2, y0 + (y1 - y0) // 2
            for ya, yb in ((y0, my), (my, y1)):
                for xa, xb in ((x0, mx), (mx, x1)):
                    if xa < xb and ya < yb:
                        nxt.append((xa, ya, xb, yb))
        boxes = nxt
    return out


def read_grid(lines):
    return [[int(v) for v in line.split()] for line in lines]


class Cli(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.TemporaryDirectory()
        cls.root = Path(cls.tmp.name)
        cls.data = cls.root / "data"
        run("generate", "--count", 6, "--seed", 7, "--out", cls.data)
        cls.model_dir = cls.root / "model"
        env = {"SPEEDY_TRAIN__ITERATIONS": "4", "SPEEDY_TRAIN__FOLDS": "2"}
        run("train", "--data", cls.data, "--out", cls.model_dir, env=env)
        cls.model = cls.model_dir / "model.json"

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()

    def test_generate_is_byte_identical(self):
        a, b = self.root / "g1", self.root / "g2"
        run("generate", "--count", 5, "--seed", 7, "--out", a)
        run("generate", "--count", 5, "--seed", 7, "--out", b)
        names = sorted(p.name for p in a.iterdir())
        self.assertEqual(len(names), 6)
        self.assertIn("manifest.json", names)
        self.assertEqual(names, sorted(p.name for p in b.iterdir()))
        _, mismatch, errors = filecmp.cmpfiles(a, b, names, shallow=False)
        self.assertEqual((mismatch, errors), ([], []))
        manifest = json.loads((a / "manifest.json").read_text())
        for entry in manifest["files"]:
            self.assertEqual(entry["hash"], fnv1a((a / entry["name"]).read_bytes()))

    def test_generate_zero_writes_manifest_only(self):
        out = self.root / "empty"
        proc = run("generate", "--count", 0, "--out", out)
        self.assertIn("warning", proc.stderr)
        self.assertEqual([p.name for p in out.iterdir()], ["manifest.json"])

    def test_benchmark_corpus_matches_pinned_hashes(self):
        fixture = json.loads((FIXTURES / "benchmark.json").read_text())
        for split in ("train", "test"):
            pinned = fixture[split]
            out = self.root / f"bench_{split}"
            run("generate", "--count", pinned["count"], "--seed", pinned["seed"], "--out", out)
            text = (out / "manifest.json").read_bytes()
            self.assertEqual(fnv1a(text), pinned["manifest_hash"])
            manifest = json.loads(text)
            self.assertEqual(manifest["corpus_hash"], pinned["corpus_hash"])
            self.assertEqual(manifest["config_hash"], pinned["config_hash"])

    def test_single_iteration(self):
        out = self.root / "t1"
        run("train", "--data", self.data, "--out", out,
            env={"SPEEDY_TRAIN__ITERATIONS": "1", "SPEEDY_TRAIN__FOLDS": "2"})
        model = json.loads((out / "model.json").read_text())
        self.assertEqual(len(model["stages"]), 1)
        rows = (out / "train_log.csv").read_text().strip().splitlines()
        self.assertEqual(len(rows), 2)
        self.assertTrue(rows[0].startswith("iteration,selector,tree_depth"))

    def test_early_termination_is_reported(self):
        out = self.root / "early"
        proc = run("train", "--data", self.data, "--out", out,
                   env={"SPEEDY_TRAIN__ITERATIONS": "5", "SPEEDY_TRAIN__FOLDS": "2",
                        "SPEEDY_TRAIN__MIN_IMPROVEMENT": "1e12"})
        summary = json.loads((out / "train_summary.json").read_text())
        self.assertLess(summary["stages"], 5)
        self.assertNotEqual(summary["termination"], "completed")
        self.assertIn("stopped early", proc.stderr)
        rows = (out / "train_log.csv").read_text().strip().splitlines()
        self.assertEqual(len(rows) - 1, summary["stages"])

    def test_training_lowers_risk_and_is_deterministic(self):
        summary = json.loads((self.model_dir / "train_summary.json").read_text())
        self.assertLess(summary["final_risk"], summary["initial_risk"])
        again = self.root / "again"
        run("train", "--data", self.data, "--out", again, "--jobs", 2,
            env={"SPEEDY_TRAIN__ITERATIONS": "4", "SPEEDY_TRAIN__FOLDS": "2"})
        for name in ("model.json", "train_log.csv", "train_summary.json"):
            self.assertTrue(filecmp.cmp(self.model_dir / name, again / name, shallow=False), name)

    def test_wall_clock_is_opt_in(self):
        self.assertNotIn("wall_seconds", json.loads((self.model_dir / "train_summary.json").read_text()))
        out = self.root / "timed"
        run("eval", "--data", self.data, "--model", self.model, "--out", out, "--wall-clock")
        self.assertGreaterEqual(json.loads((out / "eval.json").read_text())["wall_seconds"], 0.0)

    def test_zero_budget_predicts_initial_scores(self):
        out = self.root / "b0"
        run("infer", "--data", self.data, "--model", self.model, "--budget", 0, "--out", out)
        f0 = json.loads(self.model.read_text())["initial_scores"]
        expected = max(range(len(f0)), key=lambda k: (f0[k], -k))
        for labels in out.glob("*.labels.txt"):
            grid = read_grid(labels.read_text().splitlines())
            self.assertEqual({v for row in grid for v in row}, {expected})
        for ledger in out.glob("*.ledger.json"):
            self.assertEqual(json.loads(ledger.read_text()), {"stages": [], "total": 0.0})

    def test_unlimited_eval_matches_training_log(self):
        out = self.root / "eval"
        run("eval", "--data", self.data, "--model", self.model, "--out", out)
        ev = json.loads((out / "eval.json").read_text())
        summary = json.loads((self.model_dir / "train_summary.json").read_text())
        self.assertAlmostEqual(ev["pixel_accuracy"], summary["final_pixel_accuracy"], places=12)
        self.assertAlmostEqual(ev["class_accuracy"], summary["final_class_accuracy"], places=12)
        self.assertLess(abs(ev["risk"] - summary["final_risk"]), 1e-9 * summary["final_risk"])

    def test_masks_match_ledger_selections(self):
        out = self.root / "masks"
        run("infer", "--data", self.data, "--model", self.model, "--out", out)
        manifest = json.loads((self.data / "manifest.json").read_text())
        scene = manifest["scene"]
        w, h = scene["width"], scene["height"]
        boxes = quadtree_boxes(w, h, scene["hierarchy_levels"])
        for entry in manifest["files"]:
            stem = entry["name"].rsplit(".", 1)[0]
            ledger = json.loads((out / f"{stem}.ledger.json").read_text())
            lines = (out / f"{stem}.masks.txt").read_text().splitlines()
            self.assertEqual(len(lines), len(ledger["stages"]) * (h + 1))
            for s, stage in enumerate(ledger["stages"]):
                self.assertEqual(lines[s * (h + 1)], f"stage {stage['stage']}")
                mask = read_grid(lines[s * (h + 1) + 1:(s + 1) * (h + 1)])
                expected = [[0] * w for _ in range(h)]
                for level, index in stage["selected"]:
                    x0, y0, x1, y1 = boxes[level][index]
                    for y in range(y0, y1):
                        for x in range(x0, x1):
                            expected[y][x] = 1
                self.assertEqual(mask, expected)
            self.assertAlmostEqual(ledger["total"], sum(s["total"] for s in ledger["stages"]), places=9)

    def test_profile_csv(self):
        out = self.root / "profile"
        proc = run("profile", "--data", self.data, "--model", self.model, "--out", out)
        text = (out / "profile.csv").read_text()
        self.assertEqual(proc.stdout, text)
        rows = text.strip().splitlines()
        self.assertEqual(rows[0], "budget,pixel_acc,class_acc,risk")
        self.assertGreater(len(rows), 2)

    def test_exit_codes(self):
        missing = self.root / "nowhere"
        self.assertEqual(run("train", "--data", missing, "--out", self.root / "x", check=False).returncode, 2)
        self.assertEqual(run("eval", "--data", self.data, "--model", missing, "--out", self.root / "x",
                             check=False).returncode, 2)
        blocker = self.root / "file"
        blocker.write_text("")
        self.assertEqual(run("generate", "--count", 1, "--out", blocker / "sub", check=False).returncode, 2)
        folds = run("train", "--data", self.data, "--out", self.root / "x", check=False,
                    env={"SPEEDY_TRAIN__FOLDS": "10"})
        self.assertEqual(folds.returncode, 3)
        self.assertEqual(run("eval", "--data", self.data, "--model", self.model, "--budget", -1,
                             "--out", self.root / "x", check=False).returncode, 4)
        self.assertEqual(run("eval", "--data", self.data, "--model", self.model, "--budget", "lots",
                             "--out", self.root / "x", check=False).returncode, 4)
        config = self.root / "bad.json"
        config.write_text('{"train": {"iterationz": 3}}')
        self.assertEqual(run("generate", "--config", config, "--out", self.root / "x", check=False).returncode, 4)
        self.assertEqual(run("train", "--bogus", check=False).returncode, 4)

    def test_help_lists_flags(self):
        text = run("infer", "--help").stdout
        for flag in ("--config", "--seed", "--budget", "--out", "--jobs"):
            self.assertIn(flag, text)
        self.assertIn("SPEEDY_", run("--help").stdout)


if __name__ == "__main__":
    BINARY = sys.argv.pop(1)
    unittest.main(verbosity=2)
