"""
Named scenarios for Newtonian Worlds.

A scenario bundles a grid, physical constants, a potential, an initial state and
the time scales a run needs. Builders register themselves with the ``scenario``
decorator and receive the grid and the scenario's parameter mapping.
"""
import dataclasses
from typing import Callable, Iterable, Sequence

import numpy as np

from newtonian_worlds.core import (
    Boundary,
    DoubleSlitGeometry,
    GridSpec,
    HydroState,
    PhysicalParams,
    PotentialSpec,
    ScalarField,
    WaveState,
)
from newtonian_worlds.exceptions import ParameterError
from newtonian_worlds.fixtures import (
    coherent_state,
    gaussian_packet,
    harmonic_ground,
    plane_wave,
    polarized_spinor,
    ring_hydro_state,
    ring_state,
    square_well_pair,
)
from newtonian_worlds.hydrodynamics import madelung_decompose
from newtonian_worlds.oracle import BFieldSpec, SpinorState
from newtonian_worlds.reconstruction import ClosedLoop, rectangle_loop
from newtonian_worlds.spin import SpinParams

COMMON_KEYS = frozenset({"hbar", "mass"})


@dataclasses.dataclass(eq=False)
class Scenario:
    """Everything a run needs; ``duration`` is the scenario's characteristic time."""

    name: str
    grid: GridSpec
    params: PhysicalParams
    potential: PotentialSpec
    dt: float
    duration: float
    wave: WaveState | None = None
    hydro: HydroState | None = None
    spinor: SpinorState | None = None
    field: BFieldSpec | None = None
    spin: SpinParams | None = None
    screen_axis: int = 0
    loops: Sequence[ClosedLoop] | str = "auto"

    @property
    def spinning(self) -> bool:
        return self.spinor is not None

    @property
    def steps(self) -> int:
        return max(1, int(round(self.duration / self.dt)))

    def initial_hydro(self) -> HydroState:
        if self.hydro is not None:
            return self.hydro
        return madelung_decompose(self.wave, self.params)


class Settings:
    """Typed access to a scenario's parameter mapping."""

    def __init__(self, values: dict | None = None):
        self.values = dict(values or {})

    def number(self, key: str, default: float) -> float:
        value = self.values.get(key, default)
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not np.isfinite(value):
            raise ParameterError(f"'{key}' must be a finite number, got {value!r}")
        return float(value)

    def integer(self, key: str, default: int) -> int:
        value = self.values.get(key, default)
        if isinstance(value, bool) or not isinstance(value, int):
            raise ParameterError(f"'{key}' must be an integer, got {value!r}")
        return value

    def vector(self, key: str, default) -> tuple[float, ...]:
        value = self.values.get(key, default)
        items = value if isinstance(value, (list, tuple)) else [value]
        if not items or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in items):
            raise ParameterError(f"'{key}' must be a number or a list of numbers, got {value!r}")
        return tuple(float(v) for v in items)

    def choice(self, key: str, default: str, options: Iterable[str]) -> str:
        value = self.values.get(key, default)
        options = tuple(options)
        if value not in options:
            raise ParameterError(f"'{key}' must be one of {', '.join(options)}, got {value!r}")
        return value

    def physical(self, grid: GridSpec) -> PhysicalParams:
        return PhysicalParams.for_grid(grid, self.number("hbar", 1.0), self.number("mass", 1.0))


@dataclasses.dataclass(frozen=True)
class ScenarioEntry:
    name: str
    builder: Callable[[GridSpec, Settings], Scenario]
    axes: tuple[tuple[float, float, int], ...]
    boundary: Boundary
    keys: frozenset


class ScenarioRegistry:
    """Registry of scenario builders"""

    def __init__(self):
        self.entries = {}

    def register(self, entry: ScenarioEntry):
        if entry.name in self.entries:
            raise ParameterError(f"scenario '{entry.name}' is already registered")
        self.entries[entry.name] = entry

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def names(self) -> list[str]:
        return sorted(self.entries)

    def get(self, name: str) -> ScenarioEntry:
        if name not in self.entries:
            raise ParameterError(f"unknown scenario '{name}'; choose from {', '.join(self.names())}")
        return self.entries[name]

    def build(
        self,
        name: str,
        axes: Sequence[tuple[float, float, int]] | None = None,
        boundary: Boundary | str | None = None,
        params: dict | None = None,
    ) -> Scenario:
        """Build a scenario, falling back to its default grid."""
        entry = self.get(name)
        unknown = sorted(set(params or {}) - entry.keys - COMMON_KEYS)
        if unknown:
            raise ParameterError(f"scenario '{name}' does not take {', '.join(unknown)}")
        grid = GridSpec(tuple(axes or entry.axes), Boundary(boundary or entry.boundary))
        return entry.builder(grid, Settings(params))


registry = ScenarioRegistry()


def scenario(
    name: str,
    axes: Sequence[tuple[float, float, int]],
    keys: Iterable[str] = (),
    boundary: Boundary = Boundary.PERIODIC,
) -> callable:
    """Decorator registering a scenario builder under ``name``."""

    def dec(func):
        registry.register(ScenarioEntry(name, func, tuple(axes), Boundary(boundary), frozenset(keys)))
        return func

    return dec


def build_scenario(name: str, axes=None, boundary=None, params: dict | None = None) -> Scenario:
    return registry.build(name, axes, boundary, params)


def _packet(grid: GridSpec, settings: Settings, center=0.0, sigma=1.0, wavenumber=0.0) -> WaveState:
    return gaussian_packet(
        grid,
        settings.vector("center", center),
        settings.vector("sigma", sigma),
        settings.vector("wavenumber", wavenumber),
    )


def _spreading_time(settings: Settings, sigma: float) -> float:
    return 2.0 * settings.number("mass", 1.0) * sigma**2 / settings.number("hbar", 1.0)


@scenario("free_gaussian", axes=[(-20.0, 20.0, 256)], keys=("center", "sigma", "wavenumber"))
def free_gaussian(grid: GridSpec, settings: Settings) -> Scenario:
    params = settings.physical(grid)
    wave = _packet(grid, settings, wavenumber=1.0)
    sigma = min(settings.vector("sigma", 1.0))
    return Scenario("free_gaussian", grid, params, PotentialSpec.free(), 0.01, _spreading_time(settings, sigma), wave)


@scenario("harmonic_ground", axes=[(-8.0, 8.0, 128)], keys=("omega",))
def harmonic_ground_scenario(grid: GridSpec, settings: Settings) -> Scenario:
    params = settings.physical(grid)
    omega = settings.number("omega", 1.0)
    wave = harmonic_ground(grid, omega, params)
    period = 2.0 * np.pi / omega
    return Scenario("harmonic_ground", grid, params, PotentialSpec.harmonic(omega), period / 5000.0, period, wave)


@scenario("harmonic_coherent", axes=[(-10.0, 10.0, 160)], keys=("omega", "displacement"))
def harmonic_coherent(grid: GridSpec, settings: Settings) -> Scenario:
    params = settings.physical(grid)
    omega = settings.number("omega", 1.0)
    wave = coherent_state(grid, omega, settings.vector("displacement", 2.0), params)
    period = 2.0 * np.pi / omega
    return Scenario(
        "harmonic_coherent", grid, params, PotentialSpec.harmonic(omega), period / 1000.0, 2.0 * period, wave
    )


@scenario(
    "double_slit",
    axes=[(-16.0, 16.0, 256), (-12.0, 12.0, 128)],
    keys=(
        "center",
        "sigma",
        "wavenumber",
        "wall_position",
        "wall_thickness",
        "slit_separation",
        "slit_width",
        "barrier_height",
    ),
)
def double_slit(grid: GridSpec, settings: Settings) -> Scenario:
    params = settings.physical(grid)
    geometry = DoubleSlitGeometry(
        settings.number("wall_position", 0.0),
        settings.number("wall_thickness", 0.5),
        settings.number("slit_separation", 6.0),
        settings.number("slit_width", 2.5),
        settings.number("barrier_height", 1.0e3),
    )
    wave = _packet(grid, settings, center=(-6.0, 0.0), sigma=(1.0, 2.0), wavenumber=(8.0, 0.0))
    speed = settings.vector("wavenumber", (8.0, 0.0))[0] * params.hbar / params.masses[0]
    if speed <= 0:
        raise ParameterError("the double slit packet must move towards the wall along axis 0")
    start = settings.vector("center", (-6.0, 0.0))[0]
    duration = 2.0 * (geometry.wall_position - start) / speed
    return Scenario(
        "double_slit", grid, params, PotentialSpec.double_slit(geometry), 0.002, duration, wave, screen_axis=1
    )


@scenario("infinite_well_eigenstate", axes=[(0.0, 10.0, 128)], keys=("length",), boundary=Boundary.BOX)
def infinite_well_eigenstate(grid: GridSpec, settings: Settings) -> Scenario:
    params = settings.physical(grid)
    length = settings.number("length", grid.axes[0].upper)
    wave, _ = square_well_pair(grid, length)
    energy = params.hbar**2 * (2.0 * np.pi) ** 2 / (2.0 * params.masses[0] * length**2)
    period = 2.0 * np.pi * params.hbar / energy
    return Scenario(
        "infinite_well_eigenstate", grid, params, PotentialSpec.infinite_well(length), period / 10000.0, period, wave
    )


@scenario("ring_state", axes=[(-20.0, 20.0, 80)] * 3, keys=("bohr_radius", "speedup", "loop_half_width"))
def ring_state_scenario(grid: GridSpec, settings: Settings) -> Scenario:
    params = settings.physical(grid)
    radius = settings.number("bohr_radius", 1.0)
    wave = ring_state(grid, radius, normalize=True)
    hydro = ring_hydro_state(grid, params, radius, settings.number("speedup", 1.0))
    r = np.sqrt(sum(x**2 for x in grid.mesh()))
    coulomb = -(params.hbar**2) / (params.masses[0] * radius) / np.maximum(r, 0.5 * grid.spacings.min())
    potential = PotentialSpec.custom_grid(ScalarField(grid, coulomb))
    half = settings.number("loop_half_width", 4.0 * radius)
    loop = rectangle_loop(grid, (-half, -half), (half, half), axes=(0, 1))
    energy = params.hbar**2 / (8.0 * params.masses[0] * radius**2)
    period = 2.0 * np.pi * params.hbar / energy
    return Scenario("ring_state", grid, params, potential, 0.01, period, wave, hydro, loops=[loop])


@scenario("stern_gerlach", axes=[(-36.0, 36.0, 576)], keys=("sigma", "b0", "gradient", "mu"))
def stern_gerlach(grid: GridSpec, settings: Settings) -> Scenario:
    """
    An x-polarized packet crossing a field gradient along axis 0.

    The defaults separate the two beams by more than five widths by the end of the run.
    """
    params = settings.physical(grid)
    spin = SpinParams(settings.number("mu", -1.0), params)
    wave = _packet(grid, settings, sigma=2.0)
    field = BFieldSpec.stern_gerlach(settings.number("b0", 0.0), settings.number("gradient", 0.5), axis=0)
    return Scenario(
        "stern_gerlach",
        grid,
        params,
        PotentialSpec.free(),
        0.008,
        8.0,
        spinor=polarized_spinor(wave),
        field=field,
        spin=spin,
    )


@scenario("larmor", axes=[(0.0, 2.0 * np.pi, 32)], keys=("b0", "mu"))
def larmor(grid: GridSpec, settings: Settings) -> Scenario:
    params = settings.physical(grid)
    spin = SpinParams(settings.number("mu", -1.0), params)
    b0 = settings.number("b0", 1.0)
    if b0 == 0.0:
        raise ParameterError("the Larmor scenario needs a non-zero field")
    field = BFieldSpec.uniform(0.0, 0.0, b0)
    period = np.pi * params.hbar / abs(spin.mu * b0)
    return Scenario(
        "larmor",
        grid,
        params,
        PotentialSpec.free(),
        period / 400.0,
        period,
        spinor=polarized_spinor(plane_wave(grid, 0.0)),
        field=field,
        spin=spin,
    )


@scenario(
    "custom",
    axes=[(-20.0, 20.0, 256)],
    keys=("potential", "omega", "length", "center", "sigma", "wavenumber", "dt", "duration"),
)
def custom(grid: GridSpec, settings: Settings) -> Scenario:
    """A Gaussian packet in any of the built-in potentials."""
    params = settings.physical(grid)
    kind = settings.choice("potential", "free", ("free", "harmonic", "double_slit", "infinite_well"))
    if kind == "harmonic":
        potential = PotentialSpec.harmonic(*settings.vector("omega", 1.0))
    elif kind == "double_slit":
        potential = PotentialSpec.double_slit()
    elif kind == "infinite_well":
        potential = PotentialSpec.infinite_well(settings.number("length", grid.axes[0].upper))
    else:
        potential = PotentialSpec.free()
    wave = _packet(grid, settings)
    dt = settings.number("dt", 0.01)
    duration = settings.number("duration", 1.0)
    if dt <= 0 or duration <= 0:
        raise ParameterError("custom dt and duration must be positive")
    return Scenario("custom", grid, params, potential, dt, duration, wave)
