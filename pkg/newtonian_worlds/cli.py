"""
Command-line scenario runner for Newtonian Worlds.
"""
import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from newtonian_worlds.config import CHECKS, MODES, ScenarioConfig, load_config
from newtonian_worlds.core import WaveState
from newtonian_worlds.exceptions import ConfigError, NewtonianWorldsError, NumericGuardError, SymmetryPreconditionError
from newtonian_worlds.export import write_density, write_summary, write_trajectories, write_worlds
from newtonian_worlds.hydrodynamics import step_hydro
from newtonian_worlds.oracle import energy_expectation, evolve_pauli, evolve_schrodinger, spin_weights
from newtonian_worlds.probability import born_divergence, ks_distance, slab_partition
from newtonian_worlds.reconstruction import check_quantization
from newtonian_worlds.scenarios import Scenario, registry
from newtonian_worlds.spin import (
    check_spin_quantization,
    sample_spin_worlds,
    spinor_decompose,
    step_spin_hydro,
    step_spin_worlds,
)
from newtonian_worlds.symmetry import Transform, verify_symmetry
from newtonian_worlds.utils import parse_axis, parse_overrides
from newtonian_worlds.worlds import bohmian_pathlines, estimate_density, sample_worlds, step_worlds

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_GUARD = 3
TRACERS = 16
MAX_SLABS = 16


def _density_wave(state) -> WaveState:
    """A scalar wave whose |Ψ|² is the state's density."""
    if isinstance(state, WaveState):
        return state
    return WaveState(state.grid, np.sqrt(state.density()), state.time)


def _slab_count(points: int) -> int:
    return max(k for k in range(1, MAX_SLABS + 1) if points % k == 0)


class Run:
    """One scenario run: every requested mode in turn, then the checks."""

    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.scenario: Scenario = config.build()
        self.estimator = config.estimator_spec()
        self.out = Path(config.out)
        self.steps = self.scenario.steps
        self.dt = self.scenario.dt
        self._reference = None
        self.finals = {}

    @property
    def final_time(self) -> float:
        return self.scenario.dt * self.steps

    def snapshot_steps(self) -> list[int]:
        marks = list(range(0, self.steps, self.config.stride))
        return marks + [self.steps]

    def chunks(self):
        """Step counts between consecutive snapshots."""
        marks = self.snapshot_steps()
        return [b - a for a, b in zip(marks, marks[1:])]

    def reference(self):
        """The reference solver's state at the final time."""
        if self._reference is None:
            s = self.scenario
            if s.spinning:
                self._reference = evolve_pauli(s.spinor, s.potential, s.field, s.spin.mu, self.dt, self.steps, s.params)
            else:
                self._reference = evolve_schrodinger(s.wave, s.potential, self.dt, self.steps, s.params)
        return self._reference

    def run_oracle(self) -> dict:
        s = self.scenario
        directory = self.out / "oracle"
        state = s.spinor if s.spinning else s.wave
        history = [state]
        write_density(directory, s.grid, state.density(), state.time)
        for chunk in self.chunks():
            if s.spinning:
                state = evolve_pauli(state, s.potential, s.field, s.spin.mu, self.dt, chunk, s.params)
            else:
                state = evolve_schrodinger(state, s.potential, self.dt, chunk, s.params)
            write_density(directory, s.grid, state.density(), state.time)
            if chunk == self.config.stride:
                history.append(state)
        self._reference = state
        summary = {"norm": state.norm()}
        if s.spinning:
            summary["spin_weights"] = list(spin_weights(state))
            return summary
        summary["energy_drift"] = abs(
            energy_expectation(state, s.potential, s.params) - energy_expectation(s.wave, s.potential, s.params)
        )
        if len(history) >= 2:
            starts = sample_worlds(s.wave, TRACERS, self.config.seed, s.params).positions
            pathlines = bohmian_pathlines(history, starts, s.params)
            write_trajectories(directory, pathlines)
            summary["truncated_pathlines"] = sum(p.truncated for p in pathlines)
        return summary

    def run_hydro(self) -> dict:
        s = self.scenario
        directory = self.out / "hydro"
        if s.spinning:
            state, _ = spinor_decompose(s.spinor, s.spin)
        else:
            state = s.initial_hydro()
        initial = state.rho.values
        drift = 0.0
        write_density(directory, s.grid, initial, state.time)
        for chunk in self.chunks():
            for _ in range(chunk):
                if s.spinning:
                    state = step_spin_hydro(state, s.potential, s.field, s.spin, self.dt)
                else:
                    state = step_hydro(state, s.potential, s.params, self.dt)
            write_density(directory, s.grid, state.rho.values, state.time)
            drift = max(drift, float(np.sum(np.abs(state.rho.values - initial)) * s.grid.cell_volume))
        reference = self.reference().density()
        summary = {
            "density_drift": drift,
            "l1_vs_oracle": float(np.sum(np.abs(state.rho.values - reference)) * s.grid.cell_volume),
        }
        if s.spinning:
            weights = state.rho.values * s.grid.cell_volume
            summary["mean_direction"] = np.sum(state.direction() * weights, axis=tuple(range(1, s.grid.ndim + 1)))
        return summary

    def run_worlds(self) -> dict:
        s = self.scenario
        directory = self.out / "worlds"
        seed = self.config.seed
        if s.spinning:
            ensemble = sample_spin_worlds(s.spinor, self.config.worlds, seed, s.spin)
        else:
            ensemble = sample_worlds(s.wave, self.config.worlds, seed, s.params)
        initial_ks = ks_distance(ensemble.positions, _density_wave(s.spinor or s.wave), s.screen_axis)
        self._write_worlds(directory, ensemble)
        for chunk in self.chunks():
            for _ in range(chunk):
                if s.spinning:
                    ensemble = step_spin_worlds(ensemble, s.potential, s.field, self.estimator, s.grid, s.spin, self.dt)
                else:
                    ensemble = step_worlds(ensemble, s.potential, self.estimator, s.grid, self.dt)
            self._write_worlds(directory, ensemble)
        self.finals["worlds"] = ensemble
        summary = {
            "count": ensemble.count,
            "initial_ks": initial_ks,
            "ks_vs_oracle": ks_distance(ensemble.positions, _density_wave(self.reference()), s.screen_axis),
            "boundary_events": ensemble.diagnostics.get("boundary_events", 0),
        }
        if s.spinning:
            summary["spin_up_fraction"] = float(np.mean(ensemble.directions[:, 2] > 0.0))
        return summary

    def _write_worlds(self, directory: Path, ensemble):
        grid = self.scenario.grid
        directions = getattr(ensemble, "directions", None)
        write_worlds(directory, ensemble.positions, ensemble.velocities, ensemble.time, directions)
        worlds = ensemble.worlds() if directions is not None else ensemble
        write_density(directory, grid, estimate_density(worlds, self.estimator, grid).values, ensemble.time)

    def check_quantization(self) -> dict:
        s = self.scenario
        if s.spinning:
            state, _ = spinor_decompose(s.spinor, s.spin)
            report = check_spin_quantization(state, s.spin, s.loops)
        else:
            report = check_quantization(s.initial_hydro(), s.params, s.loops)
        if not report.satisfied:
            logger.warning("quantization violated: largest residual %.3g", report.max_residual)
        return report.as_dict()

    def check_symmetry(self) -> list[dict]:
        results = []
        for mode in self.config.modes:
            for transform in Transform:
                try:
                    report = verify_symmetry(
                        self.scenario,
                        transform,
                        mode,
                        duration=self.final_time,
                        steps=self.steps,
                        worlds=self.config.worlds,
                        seed=self.config.seed,
                        estimator=self.estimator,
                    )
                except SymmetryPreconditionError as e:
                    results.append({"transform": transform.value, "mode": mode, "skipped": str(e)})
                else:
                    results.append(report.as_dict())
        return results

    def check_born(self) -> dict:
        grid = self.scenario.grid
        axis = self.scenario.screen_axis
        ensemble = self.finals["worlds"]
        partition = slab_partition(grid, axis, _slab_count(grid.shape[axis]))
        report = born_divergence(ensemble, _density_wave(self.reference()), partition)
        return report.as_dict()

    def execute(self) -> dict:
        s = self.scenario
        summary = {
            "scenario": s.name,
            "seed": self.config.seed,
            "grid": {
                "axes": [[a.lower, a.upper, a.points] for a in s.grid.axes],
                "boundary": s.grid.boundary.value,
            },
            "dt": self.dt,
            "steps": self.steps,
            "final_time": self.final_time,
            "modes": {},
            "checks": {},
        }
        for mode in self.config.modes:
            logger.info("running %s in %s mode: %d steps of dt=%g", s.name, mode, self.steps, self.dt)
            started = time.perf_counter()
            result = getattr(self, f"run_{mode}")()
            result["wall_clock"] = time.perf_counter() - started
            logger.info("%s mode finished in %.2f s", mode, result["wall_clock"])
            summary["modes"][mode] = result
        for check in self.config.checks:
            logger.info("checking %s", check)
            summary["checks"][check] = getattr(self, f"check_{check}")()
        path = write_summary(self.out, summary)
        logger.info("summary written to %s", path)
        return summary


def run(config: ScenarioConfig) -> dict:
    """Run a configured scenario, write its artifacts and return the summary."""
    return Run(config).execute()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="newtonian-worlds", description="Many-interacting-worlds scenario runner.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log debugging output")
    commands = parser.add_subparsers(dest="command", required=True)

    commands.add_parser("scenarios", help="list the registered scenarios")

    runner = commands.add_parser("run", help="run a scenario")
    runner.add_argument("config", nargs="?", help="JSON configuration file")
    runner.add_argument("--scenario", choices=registry.names())
    runner.add_argument("--mode", help=f"comma-separated modes from {', '.join(MODES)}")
    runner.add_argument("--axis", action="append", type=parse_axis, help="grid axis as lower:upper:points")
    runner.add_argument("--boundary", choices=("periodic", "box"))
    runner.add_argument("--worlds", type=int)
    runner.add_argument("--seed", type=int)
    runner.add_argument("--dt", type=float)
    runner.add_argument("--time", type=float)
    runner.add_argument("--stride", type=int)
    runner.add_argument("--out")
    runner.add_argument("--check", action="append", choices=CHECKS)
    runner.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE", help="override a configuration value"
    )
    return parser


def overrides_from(args: argparse.Namespace) -> dict:
    bits = list(args.set)
    overrides = parse_overrides(bits)
    if bits:
        raise ConfigError(f"overrides are written as key=value, got '{bits[0]}'")
    flags = {
        "scenario": args.scenario,
        "modes": args.mode,
        "axes": args.axis,
        "boundary": args.boundary,
        "worlds": args.worlds,
        "seed": args.seed,
        "dt": args.dt,
        "time": args.time,
        "stride": args.stride,
        "out": args.out,
        "checks": args.check,
    }
    overrides.update({k: v for k, v in flags.items() if v is not None})
    return overrides


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    if args.command == "scenarios":
        print("\n".join(registry.names()))
        return EXIT_OK
    try:
        config = load_config(args.config, overrides_from(args))
        run(config)
    except ConfigError as e:
        logger.error("configuration error: %s", e)
        return EXIT_CONFIG
    except NumericGuardError as e:
        logger.error("numeric guard '%s' aborted the run: %s", e.guard, e)
        return EXIT_GUARD
    except NewtonianWorldsError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
