import os
from unittest import TestCase, mock

from newtonian_worlds.utils import THREADS_ENV, parse_axis, parse_overrides, worker_count


class ParseOverridesTest(TestCase):
    def test_parses_raw_value(self):
        """
        Test that parse_overrides correctly parses JSON literal values.
        """
        self.assertEqual(
            parse_overrides(["worlds=500", "dt=0.01", "box=true"]), {"worlds": 500, "dt": 0.01, "box": True}
        )

    def test_parses_dotted_keys(self):
        """
        Test that parse_overrides keeps dotted keys as written.
        """
        self.assertEqual(
            parse_overrides(["params.omega=2", "estimator.kind=histogram", "params.center=[1, 2]"]),
            {
                "params.omega": 2,
                "estimator.kind": "histogram",
                "params.center": [1, 2],
            },
        )

    def test_falls_back_to_string(self):
        """
        Test that values that are not JSON literals are kept as strings.
        """
        self.assertEqual(parse_overrides(["scenario=double_slit"]), {"scenario": "double_slit"})

    def test_stops_at_first_positional(self):
        """
        Test that parsing stops at the first bit without a key and leaves it in the list.
        """
        bits = ["seed=3", "positional", "worlds=10"]
        self.assertEqual(parse_overrides(bits), {"seed": 3})
        self.assertEqual(bits, ["positional", "worlds=10"])

    def test_empty_input(self):
        """
        Test that no bits give no overrides.
        """
        self.assertEqual(parse_overrides([]), {})


class ParseAxisTest(TestCase):
    def test_parses_axis(self):
        """
        Test that lower:upper:points axes are parsed with numeric types.
        """
        self.assertEqual(parse_axis("-20:20:256"), (-20.0, 20.0, 256))
        self.assertEqual(parse_axis(" 0:1e1:64 "), (0.0, 10.0, 64))

    def test_rejects_malformed_axis(self):
        """
        Test that malformed axes raise a ValueError naming the expected form.
        """
        with self.assertRaisesRegex(ValueError, "lower:upper:points"):
            parse_axis("0:10")


class WorkerCountTest(TestCase):
    def test_defaults_to_none(self):
        """
        Test that an unset environment variable leaves the FFT default.
        """
        with mock.patch.dict(os.environ, {}, clear=True):
            self.assertIsNone(worker_count())

    def test_reads_environment(self):
        """
        Test that the thread cap is read from the environment.
        """
        with mock.patch.dict(os.environ, {THREADS_ENV: "4"}):
            self.assertEqual(worker_count(), 4)

    def test_rejects_invalid_values(self):
        """
        Test that non-integer and non-positive thread caps are rejected.
        """
        for raw in ("many", "0"):
            with mock.patch.dict(os.environ, {THREADS_ENV: raw}), self.assertRaises(ValueError):
                worker_count()
