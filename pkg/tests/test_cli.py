import json
import os
import tempfile
from pathlib import Path
from unittest import TestCase, mock

import jsonschema
import numpy as np

from newtonian_worlds.cli import EXIT_CONFIG, EXIT_GUARD, EXIT_OK, build_parser, main, overrides_from, run
from newtonian_worlds.config import ScenarioConfig
from newtonian_worlds.exceptions import ConfigError
from newtonian_worlds.export import load_schema


class CliTestCase(TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.out = self.tmp.name

    def tearDown(self):
        self.tmp.cleanup()

    def summary(self, out: str | None = None) -> dict:
        return json.loads(Path(out or self.out, "summary.json").read_text(encoding="utf-8"))


class MainTest(CliTestCase):
    def test_lists_scenarios(self):
        """
        Test that the scenarios command prints every registered name.
        """
        with mock.patch("builtins.print") as printed:
            self.assertEqual(main(["scenarios"]), EXIT_OK)
        self.assertIn("free_gaussian", printed.call_args.args[0].split("\n"))

    def test_full_run_writes_valid_summary(self):
        """
        Test that a run in every mode writes snapshots and a summary matching the schema.
        """
        argv = [
            "run",
            "--scenario=free_gaussian",
            "--mode=oracle,hydro,worlds",
            "--time=0.05",
            "--stride=2",
            "--worlds=200",
            "--check=born",
            "--check=quantization",
            "--check=symmetry",
            f"--out={self.out}",
        ]
        self.assertEqual(main(argv), EXIT_OK)
        summary = self.summary()
        jsonschema.validate(summary, load_schema())
        self.assertEqual(summary["steps"], 5)
        self.assertEqual(set(summary["modes"]), {"oracle", "hydro", "worlds"})
        self.assertAlmostEqual(summary["modes"]["oracle"]["norm"], 1.0)
        self.assertTrue(summary["checks"]["quantization"]["satisfied"])
        self.assertEqual(len(summary["checks"]["symmetry"]), 6)
        self.assertEqual(len(summary["checks"]["born"]["masses"]), 16)

        snapshots = sorted(p.name for p in Path(self.out, "oracle").glob("density_*.csv"))
        self.assertEqual(snapshots, [f"density_{t:.6f}.csv" for t in (0.0, 0.02, 0.04, 0.05)])
        self.assertTrue(Path(self.out, "oracle", "trajectories.csv").exists())
        worlds = np.loadtxt(Path(self.out, "worlds", "worlds_0.050000.csv"), delimiter=",", skiprows=1)
        self.assertEqual(worlds.shape, (200, 3))

    def test_config_file_and_set_overrides(self):
        """
        Test that a configuration file is read and --set overrides its values.
        """
        path = os.path.join(self.out, "run.json")
        with open(path, "w", encoding="utf-8") as f:
            json.dump({"scenario": "harmonic_ground", "modes": ["hydro"], "time": 0.1, "seed": 1}, f)
        out = os.path.join(self.out, "result")
        self.assertEqual(main(["run", path, "--set", "params.omega=2", "--set", f"out={out}"]), EXIT_OK)
        summary = self.summary(out)
        self.assertEqual(summary["scenario"], "harmonic_ground")
        self.assertEqual(summary["seed"], 1)
        self.assertAlmostEqual(summary["dt"], np.pi / 200.0)

    def test_configuration_error_exit_code(self):
        """
        Test that configuration errors exit with their own status and run nothing.
        """
        with self.assertLogs("newtonian_worlds.cli", "ERROR"):
            code = main(["run", "--scenario=free_gaussian", "--worlds=0", f"--out={self.out}"])
        self.assertEqual(code, EXIT_CONFIG)
        self.assertFalse(Path(self.out, "summary.json").exists())

    def test_malformed_override(self):
        """
        Test that --set values without a key are configuration errors.
        """
        with self.assertLogs("newtonian_worlds.cli", "ERROR"):
            self.assertEqual(main(["run", "--scenario=larmor", "--set", "=3"]), EXIT_CONFIG)

    def test_guard_exit_code(self):
        """
        Test that a step rejected by a stability guard exits with the guard status.
        """
        argv = ["run", "--scenario=free_gaussian", "--dt=1.0", "--time=2.0", f"--out={self.out}"]
        with self.assertLogs("newtonian_worlds.cli", "ERROR") as logs:
            self.assertEqual(main(argv), EXIT_GUARD)
        self.assertIn("aliasing", logs.output[0])


class OverridesFromTest(TestCase):
    def test_flags_become_overrides(self):
        """
        Test that command-line flags map onto configuration keys.
        """
        args = build_parser().parse_args(
            ["run", "--scenario=larmor", "--axis=0:6.25:32", "--seed=4", "--set", "params.b0=2"]
        )
        self.assertEqual(
            overrides_from(args),
            {"scenario": "larmor", "axes": [(0.0, 6.25, 32)], "seed": 4, "params.b0": 2},
        )

    def test_bad_override(self):
        """
        Test that a positional --set value is rejected.
        """
        args = build_parser().parse_args(["run", "--set", "=oops"])
        with self.assertRaises(ConfigError):
            overrides_from(args)


class RunTest(CliTestCase):
    def config(self, out: str, **fields) -> ScenarioConfig:
        return ScenarioConfig(out=out, **fields)

    def test_runs_are_reproducible(self):
        """
        Test that two runs with the same seed write identical world snapshots.
        """
        first, second = os.path.join(self.out, "a"), os.path.join(self.out, "b")
        for out in (first, second):
            run(self.config(out, scenario="free_gaussian", modes=("worlds",), worlds=150, time=0.03, seed=9))
        names = sorted(p.name for p in Path(first, "worlds").iterdir())
        self.assertTrue(names)
        for name in names:
            self.assertEqual(Path(first, "worlds", name).read_bytes(), Path(second, "worlds", name).read_bytes())

    def test_spin_scenario(self):
        """
        Test that spin scenarios report spin weights, moment directions and moment counts.
        """
        summary = run(
            self.config(self.out, scenario="larmor", modes=("oracle", "hydro", "worlds"), worlds=120, time=0.1)
        )
        jsonschema.validate(self.summary(), load_schema())
        t = summary["final_time"]
        np.testing.assert_allclose(summary["modes"]["oracle"]["spin_weights"], [0.5, 0.5], atol=1e-12)
        direction = summary["modes"]["hydro"]["mean_direction"]
        np.testing.assert_allclose(direction, [np.cos(2.0 * t), np.sin(2.0 * t), 0.0], atol=1e-8)
        last = sorted(Path(self.out, "worlds").glob("worlds_*.csv"))[-1]
        worlds = np.loadtxt(last, delimiter=",", skiprows=1)
        self.assertEqual(worlds.shape, (120, 6))

    def test_symmetry_check_skips_spin(self):
        """
        Test that the symmetry check records why spinning scenarios are skipped.
        """
        summary = run(self.config(self.out, scenario="larmor", modes=("oracle",), time=0.05, checks=("symmetry",)))
        results = summary["checks"]["symmetry"]
        self.assertEqual(len(results), 2)
        self.assertTrue(all("skipped" in r for r in results))
