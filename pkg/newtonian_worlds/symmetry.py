"""
Time reversal and Galilean boosts for Newtonian Worlds.
"""
import dataclasses
import enum
import functools
import logging
from typing import Sequence

import numpy as np

from newtonian_worlds.core import (
    GridSpec,
    HydroState,
    PhysicalParams,
    ScalarField,
    VectorField,
    WaveState,
    WorldEnsemble,
    node_mask,
    resolve_params,
    shift_values,
)
from newtonian_worlds.exceptions import BoundaryClipError, ParameterError, SymmetryPreconditionError
from newtonian_worlds.hydrodynamics import carried_wave, madelung_decompose, step_hydro
from newtonian_worlds.oracle import evolve_schrodinger
from newtonian_worlds.scenarios import Scenario, build_scenario
from newtonian_worlds.worlds import DensityEstimatorSpec, estimate_density, place_in_grid, sample_worlds, step_worlds

logger = logging.getLogger(__name__)

CLIP_TOLERANCE = 1e-9
COMPARE_THRESHOLD = 1e-6
DEFAULT_TOLERANCES = {"oracle": 1e-9, "hydro": 1e-3, "worlds": 0.05}


class Transform(str, enum.Enum):
    TIME_REVERSAL = "time_reversal"
    BOOST = "boost"


class Mode(str, enum.Enum):
    ORACLE = "oracle"
    HYDRO = "hydro"
    WORLDS = "worlds"


@functools.singledispatch
def time_reverse(state):
    """Negate every velocity and the time coordinate; densities and positions are kept."""
    raise TypeError(f"cannot time-reverse a {type(state).__name__}")


@time_reverse.register
def _(state: HydroState) -> HydroState:
    velocity = VectorField(state.grid, -state.velocity.values, state.velocity.defined)
    phase = None if state.phase is None else ScalarField(state.grid, -state.phase.values, state.phase.defined)
    return HydroState(state.rho, velocity, -state.time, phase)


@time_reverse.register
def _(ensemble: WorldEnsemble) -> WorldEnsemble:
    # accelerations depend on positions only and survive the reversal
    diagnostics = dict(ensemble.diagnostics)
    return ensemble.replace(velocities=-ensemble.velocities, time=-ensemble.time, diagnostics=diagnostics)


def time_reverse_wave(state: WaveState) -> WaveState:
    return WaveState(state.grid, np.conj(state.amplitudes), -state.time)


def _boost_vector(w, params: PhysicalParams) -> np.ndarray:
    """The per-particle boost velocity repeated for every particle."""
    w = np.atleast_1d(np.asarray(w, dtype=float))
    if w.shape == (params.config_dims,):
        return w
    if w.shape != (params.space_dims,):
        raise ParameterError(f"boost velocity needs {params.space_dims} components, got {w.shape[0]}")
    return np.tile(w, params.particle_count)


def _check_clip(before: float, after: float):
    if before - after > CLIP_TOLERANCE * max(before, 1.0e-300):
        raise BoundaryClipError(f"shift pushes {before - after:.3g} of the density {before:.6g} out of the box")


def boost_hydro(state: HydroState, w, t: float | None = None, params: PhysicalParams | None = None) -> HydroState:
    """
    Boost every particle by ``w``: ρ(x) ← ρ(x − wt), v(x) ← v(x − wt) + w.

    A state that carries its phase is boosted through its amplitude, which keeps the
    phase. Otherwise the momentum density ρv is shifted together with ρ so that both
    stay band limited on periodic grids.
    """
    grid = state.grid
    params = resolve_params(grid, params)
    if state.phase is not None:
        t = state.time if t is None else t
        return madelung_decompose(boost_wave(carried_wave(state), w, params, t), params)
    w = _boost_vector(w, params)
    t = state.time if t is None else t
    displacement = w * t
    rho = state.rho.values
    momentum = rho * np.where(state.velocity.defined, state.velocity.values, 0.0)
    shifted_rho = np.clip(shift_values(rho, grid, displacement), 0.0, None)
    if not grid.periodic:
        _check_clip(float(np.sum(rho)), float(np.sum(shifted_rho)))
    shifted_momentum = shift_values(momentum, grid, displacement)
    defined = node_mask(shifted_rho)
    safe = np.where(defined, shifted_rho, 1.0)
    boosted = w[(slice(None),) + (None,) * grid.ndim]
    velocity = np.where(defined, shifted_momentum / safe + boosted, 0.0)
    return HydroState(ScalarField(grid, shifted_rho), VectorField(grid, velocity, defined), state.time)


def boost_wave(state: WaveState, w, params: PhysicalParams | None = None, t: float | None = None) -> WaveState:
    """Ψ(x) ← exp{(i/ħ) Σ_k [m_k w·x_k − ½ m_k |w|² t]} Ψ(x − wt)."""
    grid = state.grid
    params = resolve_params(grid, params)
    w = _boost_vector(w, params)
    t = state.time if t is None else t
    psi = shift_values(state.amplitudes, grid, w * t)
    if not grid.periodic:
        _check_clip(state.norm(), float(np.sum(np.abs(psi) ** 2) * grid.cell_volume))
    masses = params.axis_masses()
    mesh = grid.mesh()
    phase = sum(masses[a] * (w[a] * mesh[a] - 0.5 * w[a] ** 2 * t) for a in range(grid.ndim))
    return WaveState(grid, np.exp(1j * phase / params.hbar) * psi, state.time)


def boost_worlds(ensemble: WorldEnsemble, w, t: float | None = None, grid: GridSpec | None = None) -> WorldEnsemble:
    """Shift every world by ``wt`` and add ``w`` to its velocity."""
    w = _boost_vector(w, ensemble.params)
    t = ensemble.time if t is None else t
    displacement = w * t
    if not np.any(displacement):
        return ensemble.replace(velocities=ensemble.velocities + w, diagnostics=dict(ensemble.diagnostics))
    positions = ensemble.positions + displacement
    if grid is not None:
        if not grid.periodic and not np.all(grid.contains(positions)):
            raise BoundaryClipError("boost pushes worlds out of the box")
        positions, _, _ = place_in_grid(grid, positions)
    return ensemble.replace(
        positions=positions,
        velocities=ensemble.velocities + w,
        accelerations=None,
        diagnostics=dict(ensemble.diagnostics),
    )


@dataclasses.dataclass
class SymmetryReport:
    scenario: str
    transform: Transform
    mode: Mode
    density_error: float
    velocity_error: float
    tolerance: float

    @property
    def deviation(self) -> float:
        return self.density_error + self.velocity_error

    @property
    def passed(self) -> bool:
        return self.deviation <= self.tolerance

    def as_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "transform": self.transform.value,
            "mode": self.mode.value,
            "density_error": self.density_error,
            "velocity_error": self.velocity_error,
            "deviation": self.deviation,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


def _field_errors(a: HydroState, b: HydroState) -> tuple[float, float]:
    """L1 density distance and the largest velocity difference where both densities are appreciable."""
    grid = a.grid
    density = float(np.sum(np.abs(a.rho.values - b.rho.values)) * grid.cell_volume)
    compared = a.velocity.defined & b.velocity.defined & node_mask(b.rho.values, COMPARE_THRESHOLD)
    if not compared.any():
        return density, 0.0
    difference = np.abs(a.velocity.values - b.velocity.values)
    return density, float(np.max(difference[:, compared]))


def _wave_errors(a: WaveState, b: WaveState, params: PhysicalParams) -> tuple[float, float]:
    return _field_errors(madelung_decompose(a, params), madelung_decompose(b, params))


def _world_errors(a: WorldEnsemble, b: WorldEnsemble, est: DensityEstimatorSpec, grid: GridSpec):
    density = float(
        np.sum(np.abs(estimate_density(a, est, grid).values - estimate_density(b, est, grid).values)) * grid.cell_volume
    )
    return density, float(np.max(np.abs(a.velocities - b.velocities)))


class _Runner:
    """Evolves one scenario in one mode for a fixed number of steps."""

    def __init__(self, scenario: Scenario, mode: Mode, steps: int, dt: float, worlds: int, seed: int, estimator):
        self.scenario = scenario
        self.mode = mode
        self.steps = steps
        self.dt = dt
        self.worlds = worlds
        self.seed = seed
        self.estimator = estimator or DensityEstimatorSpec.gaussian_kernel()

    def initial(self):
        s = self.scenario
        if self.mode is Mode.ORACLE:
            return s.wave
        if self.mode is Mode.HYDRO:
            return s.initial_hydro()
        return sample_worlds(s.wave, self.worlds, self.seed, s.params)

    def evolve(self, state):
        s = self.scenario
        if self.mode is Mode.ORACLE:
            return evolve_schrodinger(state, s.potential, self.dt, self.steps, s.params)
        for _ in range(self.steps):
            if self.mode is Mode.HYDRO:
                state = step_hydro(state, s.potential, s.params, self.dt)
            else:
                state = step_worlds(state, s.potential, self.estimator, s.grid, self.dt)
        return state

    def reverse(self, state):
        return time_reverse_wave(state) if self.mode is Mode.ORACLE else time_reverse(state)

    def boost(self, state, w, t: float):
        s = self.scenario
        if self.mode is Mode.ORACLE:
            return boost_wave(state, w, s.params, t)
        if self.mode is Mode.HYDRO:
            return boost_hydro(state, w, t, s.params)
        return boost_worlds(state, w, t, s.grid)

    def errors(self, a, b) -> tuple[float, float]:
        if self.mode is Mode.ORACLE:
            return _wave_errors(a, b, self.scenario.params)
        if self.mode is Mode.HYDRO:
            return _field_errors(a, b)
        return _world_errors(a, b, self.estimator, self.scenario.grid)


def verify_symmetry(
    scenario: Scenario | str,
    transform: Transform | str,
    mode: Mode | str,
    velocity: Sequence[float] | float | None = None,
    duration: float | None = None,
    steps: int | None = None,
    worlds: int = 1000,
    seed: int = 0,
    tolerance: float | None = None,
    estimator: DensityEstimatorSpec | None = None,
) -> SymmetryReport:
    """
    Check that a scenario's dynamics respect a symmetry.

    Time reversal evolves for ``duration``, reverses, evolves again and reverses,
    then compares with the initial state. A boost compares boost-then-evolve with
    evolve-then-boost and needs a translation-invariant potential.
    """
    if isinstance(scenario, str):
        scenario = build_scenario(scenario)
    transform, mode = Transform(transform), Mode(mode)
    if scenario.spinning:
        raise SymmetryPreconditionError(f"scenario '{scenario.name}' carries spin; symmetry checks are scalar only")
    if transform is Transform.BOOST and not scenario.potential.translation_invariant:
        raise SymmetryPreconditionError(
            f"cannot boost scenario '{scenario.name}': its {scenario.potential.kind.value} potential "
            "is not translation invariant"
        )
    duration = scenario.duration if duration is None else duration
    steps = steps or max(1, int(round(duration / scenario.dt)))
    if not duration > 0:
        raise ParameterError(f"duration must be positive, got {duration}")
    runner = _Runner(scenario, mode, steps, duration / steps, worlds, seed, estimator)
    logger.debug("verifying %s of %s in %s mode over %d steps", transform.value, scenario.name, mode.value, steps)

    start = runner.initial()
    if transform is Transform.TIME_REVERSAL:
        there = runner.reverse(runner.evolve(start))
        back = runner.reverse(runner.evolve(there))
        density_error, velocity_error = runner.errors(back, start)
    else:
        w = 1.0 if velocity is None else velocity
        evolved = runner.evolve(start)
        later = runner.boost(evolved, w, evolved.time)
        sooner = runner.evolve(runner.boost(start, w, start.time))
        density_error, velocity_error = runner.errors(sooner, later)

    tolerance = DEFAULT_TOLERANCES[mode.value] if tolerance is None else tolerance
    report = SymmetryReport(scenario.name, transform, mode, density_error, velocity_error, tolerance)
    if not report.passed:
        logger.warning(
            "%s of %s in %s mode deviates by %.3g (tolerance %.3g)",
            transform.value,
            scenario.name,
            mode.value,
            report.deviation,
            tolerance,
        )
    return report
