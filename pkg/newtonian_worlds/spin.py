"""
Single spin-1/2 particles for Newtonian Worlds.

Every world carries a definite magnetic moment ``μ n`` besides its position and
velocity. Moments precess about the quantum-corrected field

    B_Tot = B + ħ² ∂_a(ρ ∂_a n) / (4 m μ ρ),

worlds accelerate under ``m a = −∇(Q + Q_P + V) + μ n_c ∇B_Tot,c`` with the
spin potential ``Q_P = ħ²/(8m) n·∇²n``, and the density follows the continuity
equation as in the spinless case.
"""
import dataclasses
import logging
from typing import Sequence

import numpy as np
from scipy import ndimage

from newtonian_worlds.core import (
    NODE_THRESHOLD,
    GridSpec,
    PhysicalParams,
    PotentialSpec,
    ScalarField,
    VectorField,
    WaveState,
    WorldEnsemble,
    angle_gradient,
    fill_undefined,
    interpolate,
    masked_gradient,
    node_mask,
    smooth_derivative,
    smooth_gradient,
)
from newtonian_worlds.exceptions import ParameterError, WorldCountError
from newtonian_worlds.hydrodynamics import check_cfl, quantum_potential
from newtonian_worlds.oracle import BFieldSpec, PauliSplitOperator, SpinorState
from newtonian_worlds.reconstruction import ClosedLoop, QuantizationReport, circulation_report
from newtonian_worlds.worlds import (
    MIN_DYNAMIC_WORLDS,
    RELIABLE_WORLDS,
    DensityEstimatorSpec,
    deposit,
    estimate_density,
    place_in_grid,
    sample_worlds,
)

logger = logging.getLogger(__name__)

# moment fields varying less than this from point to point count as uniform
UNIFORM_TOLERANCE = 1e-10
# smoothing width, in grid cells, of the mean moment field read off the worlds
MOMENT_SMOOTHING_CELLS = 1.0


@dataclasses.dataclass(frozen=True)
class SpinParams:
    """Moment magnitude ``mu`` (signed) and the constants of a single spin-1/2 particle."""

    mu: float = -1.0
    physical: PhysicalParams = dataclasses.field(default_factory=PhysicalParams)

    def __post_init__(self):
        if not np.isfinite(self.mu) or self.mu == 0.0:
            raise ParameterError(f"mu must be finite and non-zero, got {self.mu}")
        if self.physical.particle_count != 1:
            raise ParameterError(f"spin dynamics covers a single particle, got {self.physical.particle_count}")

    @classmethod
    def for_grid(cls, grid: GridSpec, mu: float = -1.0, hbar: float = 1.0, mass: float = 1.0) -> "SpinParams":
        return cls(mu, PhysicalParams.for_grid(grid, hbar, mass))

    @property
    def hbar(self) -> float:
        return self.physical.hbar

    @property
    def mass(self) -> float:
        return self.physical.masses[0]

    def check_grid(self, grid: GridSpec):
        self.physical.check_grid(grid)


def _resolve_spin_params(grid: GridSpec, params: SpinParams | None) -> SpinParams:
    params = params or SpinParams.for_grid(grid)
    params.check_grid(grid)
    return params


def direction_from_angles(alpha: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Unit moment directions ``(sinα cosβ, sinα sinβ, cosα)`` stacked on the leading axis."""
    alpha, beta = np.asarray(alpha, dtype=float), np.asarray(beta, dtype=float)
    return np.stack([np.sin(alpha) * np.cos(beta), np.sin(alpha) * np.sin(beta), np.cos(alpha)])


def angles_from_direction(direction: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Polar angle in [0, π] and azimuth in [0, 2π) of directions stacked on the leading axis."""
    x, y, z = direction
    alpha = np.arctan2(np.hypot(x, y), z)
    beta = np.mod(np.arctan2(y, x), 2.0 * np.pi)
    return alpha, beta


def _normalize(direction: np.ndarray) -> np.ndarray:
    length = np.sqrt(np.sum(direction**2, axis=0))
    return direction / np.where(length > 0, length, 1.0)


def _is_uniform(direction: np.ndarray) -> bool:
    flat = direction.reshape(direction.shape[0], -1)
    return bool(np.all(np.abs(flat - flat[:, :1]) <= UNIFORM_TOLERANCE))


@dataclasses.dataclass(eq=False)
class SpinHydroState:
    """
    World density, velocity field and moment angles of a spin-1/2 particle.

    ``phase`` is the spinor phase θ = arg χ₊ when it is known; the field dynamics carry it.
    """

    rho: ScalarField
    velocity: VectorField
    alpha: ScalarField
    beta: ScalarField
    time: float = 0.0
    phase: ScalarField | None = None

    def __post_init__(self):
        grid = self.rho.grid
        if any(f.grid != grid for f in (self.velocity, self.alpha, self.beta)):
            raise ParameterError("spin state fields live on different grids")
        defined = self.velocity.defined
        if not np.all(np.isfinite(self.alpha.values[defined])):
            raise ParameterError("moment angles must be finite wherever the density is defined")

    @property
    def grid(self) -> GridSpec:
        return self.rho.grid

    def direction(self) -> np.ndarray:
        """Unit moment directions, shape ``(3, *grid.shape)``."""
        return direction_from_angles(self.alpha.values, self.beta.values)

    def validate(self, tolerance: float = 1e-6):
        self.rho.check_density(tolerance)


@dataclasses.dataclass(eq=False)
class SpinWorldEnsemble:
    """Worlds carrying a position, a velocity and a unit moment direction each."""

    positions: np.ndarray
    velocities: np.ndarray
    directions: np.ndarray
    params: SpinParams
    time: float = 0.0
    diagnostics: dict = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=float))
        self.velocities = np.atleast_2d(np.asarray(self.velocities, dtype=float))
        directions = np.atleast_2d(np.asarray(self.directions, dtype=float))
        if directions.shape != (self.positions.shape[0], 3):
            raise ParameterError(f"expected one three-component direction per world, got {directions.shape}")
        lengths = np.linalg.norm(directions, axis=1)
        if np.any(lengths == 0) or not np.all(np.isfinite(lengths)):
            raise ParameterError("moment directions must be finite and non-zero")
        self.directions = directions / lengths[:, None]
        # shape checks for positions and velocities
        WorldEnsemble(self.positions, self.velocities, self.params.physical)

    @property
    def count(self) -> int:
        return self.positions.shape[0]

    @property
    def alpha(self) -> np.ndarray:
        return angles_from_direction(self.directions.T)[0]

    @property
    def beta(self) -> np.ndarray:
        return angles_from_direction(self.directions.T)[1]

    @property
    def moments(self) -> np.ndarray:
        """Magnetic moments ``μ n`` per world."""
        return self.params.mu * self.directions

    def worlds(self) -> WorldEnsemble:
        """The spinless view of the ensemble."""
        return WorldEnsemble(self.positions, self.velocities, self.params.physical, self.time)


@dataclasses.dataclass(eq=False)
class AxialField:
    """A three-component vector per grid point (fields, moments, spin), shape ``(3, *grid.shape)``."""

    grid: GridSpec
    values: np.ndarray
    defined: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (3, *self.grid.shape):
            raise ParameterError(f"axial field of shape {self.values.shape} does not match {(3, *self.grid.shape)}")
        if self.defined is None:
            self.defined = np.ones(self.grid.shape, dtype=bool)


def spinor_compose(state: SpinHydroState, theta: ScalarField, params: SpinParams | None = None) -> SpinorState:
    """χ = (√ρ cos(α/2) e^{iθ}, √ρ sin(α/2) e^{i(θ+β)}), normalized."""
    _resolve_spin_params(state.grid, params)
    amplitude = np.sqrt(np.clip(state.rho.values, 0.0, None))
    half = 0.5 * state.alpha.values
    plus = amplitude * np.cos(half) * np.exp(1j * theta.values)
    minus = amplitude * np.sin(half) * np.exp(1j * (theta.values + state.beta.values))
    return SpinorState(state.grid, plus, minus, state.time).normalized()


def spinor_decompose(state: SpinorState, params: SpinParams | None = None) -> tuple[SpinHydroState, ScalarField]:
    """
    Read ρ, v, α, β and θ off a spinor.

    β is masked where either component vanishes, but keeps arg χ₋ − θ there so the
    fields compose back into the same spinor. v is the guidance velocity
    ``(ħ/m) Im(χ†∇χ)/χ†χ``.
    """
    grid = state.grid
    params = _resolve_spin_params(grid, params)
    plus, minus = state.plus, state.minus
    rho = state.density()
    defined = node_mask(rho)
    floor = NODE_THRESHOLD * float(np.max(rho))
    poles = (np.abs(plus) ** 2 <= floor) | (np.abs(minus) ** 2 <= floor)

    alpha = 2.0 * np.arctan2(np.abs(minus), np.abs(plus))
    theta = np.angle(plus)
    beta = np.mod(np.angle(minus) - theta, 2.0 * np.pi)

    current = np.imag(np.conj(plus) * smooth_gradient(plus, grid) + np.conj(minus) * smooth_gradient(minus, grid))
    safe = np.where(defined, rho, 1.0)
    velocity = np.where(defined, params.hbar / params.mass * current / safe, 0.0)
    phase = ScalarField(grid, theta, defined & (np.abs(plus) ** 2 > floor))
    hydro = SpinHydroState(
        ScalarField(grid, rho),
        VectorField(grid, velocity, defined),
        ScalarField(grid, alpha, defined),
        ScalarField(grid, beta, defined & ~poles),
        state.time,
        phase,
    )
    return hydro, phase


def guidance_velocity(state: SpinHydroState, theta: ScalarField, params: SpinParams | None = None) -> VectorField:
    """The angle form ``v = (ħ/m)(∇θ + sin²(α/2) ∇β)``."""
    grid = state.grid
    params = _resolve_spin_params(grid, params)
    weight = np.sin(0.5 * state.alpha.values) ** 2
    gradient = angle_gradient(theta.values, grid) + weight * angle_gradient(state.beta.values, grid)
    defined = state.velocity.defined & theta.mask & state.beta.mask
    return VectorField(grid, np.where(defined, params.hbar / params.mass * gradient, 0.0), defined)


def moment_field(state: SpinHydroState, params: SpinParams | None = None) -> AxialField:
    """μ⃗ = μ n on the grid."""
    params = _resolve_spin_params(state.grid, params)
    return AxialField(state.grid, params.mu * state.direction(), state.velocity.defined)


def spin_angular_momentum(state: SpinHydroState, params: SpinParams | None = None) -> AxialField:
    """S = (ħ/2μ) μ⃗ = (ħ/2) n."""
    params = _resolve_spin_params(state.grid, params)
    return AxialField(state.grid, 0.5 * params.hbar * state.direction(), state.velocity.defined)


def _spin_gradient_terms(rho: np.ndarray, direction: np.ndarray, grid: GridSpec, params: SpinParams, defined):
    """The spin potential Q_P and the quantum part of B_Tot, filled at undefined points."""
    hbar, mass = params.hbar, params.mass
    second = sum(smooth_derivative(direction, grid, a, order=2) for a in range(grid.ndim))
    spin_potential = hbar**2 / (8.0 * mass) * np.sum(direction * second, axis=0)
    flux = sum(smooth_derivative(rho * smooth_derivative(direction, grid, a), grid, a) for a in range(grid.ndim))
    safe = np.where(defined, rho, 1.0)
    quantum_field = hbar**2 / (4.0 * mass * params.mu) * flux / safe
    return (
        fill_undefined(np.where(defined, spin_potential, 0.0), defined),
        fill_undefined(np.where(defined, quantum_field, 0.0), defined),
    )


def _total_field(rho, direction, grid: GridSpec, B: BFieldSpec, params: SpinParams, defined):
    """B_Tot and its spatial derivatives ``∂_a B_Tot,c`` as plain arrays."""
    field = B.evaluate(grid)
    field_gradient = B.spatial_gradient(grid)
    if _is_uniform(direction):
        return field, field_gradient, None
    spin_potential, quantum_field = _spin_gradient_terms(rho, direction, grid, params, defined)
    quantum_gradient = np.stack([smooth_derivative(quantum_field, grid, a) for a in range(grid.ndim)])
    return field + quantum_field, field_gradient + quantum_gradient, spin_potential


def b_total(state: SpinHydroState, B: BFieldSpec, params: SpinParams | None = None) -> AxialField:
    """The quantum-corrected field ``B + ħ² ∂_a(ρ ∂_a μ⃗)/(4mμ²ρ)``, masked at nodes."""
    grid = state.grid
    params = _resolve_spin_params(grid, params)
    defined = node_mask(state.rho.values)
    direction = fill_undefined(state.direction(), defined)
    field, _, _ = _total_field(state.rho.values, direction, grid, B, params, defined)
    return AxialField(grid, np.where(defined, field, 0.0), defined)


def rotate_moments(direction: np.ndarray, field: np.ndarray, params: SpinParams, dt: float) -> np.ndarray:
    """
    Exact precession ``dn/dt = (2μ/ħ) n × B`` over ``dt`` about a frozen field.

    Components are stacked on the leading axis; the rotation preserves |n|.
    """
    rotation = -2.0 * params.mu * dt / params.hbar * np.asarray(field)
    angle = np.sqrt(np.sum(rotation**2, axis=0))
    cross = np.cross(rotation, direction, axis=0)
    dot = np.sum(rotation * direction, axis=0)
    return (
        direction * np.cos(angle)
        + np.sinc(angle / np.pi) * cross
        + 0.5 * np.sinc(angle / (2.0 * np.pi)) ** 2 * rotation * dot
    )


def step_spin_hydro(
    state: SpinHydroState, V: PotentialSpec, B: BFieldSpec, params: SpinParams | None, dt: float
) -> SpinHydroState:
    """
    One step of the coupled (ρ, v, α, β) system.

    The fields and the carried phase are combined into the spinor they define. Half
    steps of the exact per-point precession about B and potential kick bracket the free
    flow of both components, which together realize the torque about B_Tot, the force
    law and continuity; the spinor is then split back into fields.
    """
    if not dt > 0:
        raise ParameterError(f"dt must be positive, got {dt}")
    grid = state.grid
    params = _resolve_spin_params(grid, params)
    if state.phase is None:
        raise ParameterError("the spin state carries no phase; build it with spinor_decompose or attach one")
    check_cfl(state.rho, state.velocity, dt)
    spinor = spinor_compose(state, state.phase, params)
    stepper = PauliSplitOperator(
        grid, V.evaluate(grid, params.physical), B.evaluate(grid), params.mu, params.physical, dt
    )
    plus, minus = stepper(spinor.plus, spinor.minus)
    hydro, _ = spinor_decompose(SpinorState(grid, plus, minus, state.time + dt), params)
    return hydro


def sample_spin_worlds(
    state: SpinorState, count: int, seed: int, params: SpinParams | None = None
) -> SpinWorldEnsemble:
    """Draw worlds from χ†χ carrying the local guidance velocity and moment direction."""
    grid = state.grid
    params = _resolve_spin_params(grid, params)
    hydro, _ = spinor_decompose(state, params)
    density = WaveState(grid, np.sqrt(hydro.rho.values), state.time)
    positions = sample_worlds(density, count, seed, params.physical).positions
    velocities = interpolate(hydro.velocity.filled(), grid, positions).T
    direction = fill_undefined(hydro.direction(), hydro.velocity.defined)
    directions = _normalize(interpolate(direction, grid, positions)).T
    return SpinWorldEnsemble(positions, velocities, directions, params, state.time)


def moment_mean(positions: np.ndarray, directions: np.ndarray, grid: GridSpec) -> np.ndarray:
    """
    Unit mean moment direction of the worlds on the grid, shape ``(3, *grid.shape)``.

    A cloud-in-cell average smoothed over ``MOMENT_SMOOTHING_CELLS`` grid cells,
    independent of the density estimator: neighbouring worlds carry nearly parallel
    moments. Cells without worlds take the nearest supported direction.
    """
    mode = "wrap" if grid.periodic else "nearest"

    def smooth(weights=None):
        return ndimage.gaussian_filter(deposit(positions, grid, weights), MOMENT_SMOOTHING_CELLS, mode=mode)

    counts = smooth()
    supported = node_mask(counts)
    safe = np.where(supported, counts, 1.0)
    sums = np.stack([smooth(directions[:, c]) / safe for c in range(3)])
    return _normalize(fill_undefined(np.where(supported, sums, 0.0), supported))


@dataclasses.dataclass(eq=False)
class _WorldFields:
    """Grid fields read off a spin ensemble at one instant."""

    grid: GridSpec
    acceleration: np.ndarray
    field: np.ndarray
    field_gradient: np.ndarray
    params: SpinParams

    def accelerations(self, positions: np.ndarray, directions: np.ndarray) -> np.ndarray:
        base = interpolate(self.acceleration, self.grid, positions).T
        gradient = interpolate(self.field_gradient, self.grid, positions)
        coupling = np.einsum("acn,nc->na", gradient, directions)
        return base + self.params.mu / self.params.mass * coupling

    def field_at(self, positions: np.ndarray) -> np.ndarray:
        return interpolate(self.field, self.grid, positions)


def _world_fields(
    positions: np.ndarray,
    directions: np.ndarray,
    V: PotentialSpec,
    B: BFieldSpec,
    est: DensityEstimatorSpec,
    grid: GridSpec,
    params: SpinParams,
) -> _WorldFields:
    physical = params.physical
    rho = estimate_density(WorldEnsemble(positions, np.zeros_like(positions), physical), est, grid)
    q = quantum_potential(rho, physical)
    defined = q.defined
    if _is_uniform(directions.T):
        mean = np.broadcast_to(directions[0][:, None], (3, grid.size)).reshape((3, *grid.shape))
    else:
        mean = moment_mean(positions, directions, grid)
    field, field_gradient, spin_potential = _total_field(rho.values, mean, grid, B, params, defined)
    potential = q.values + V.evaluate(grid, physical)
    if spin_potential is not None:
        potential = potential + spin_potential
    potential = fill_undefined(potential, defined)
    acceleration = -masked_gradient(potential, grid, defined) / params.mass
    return _WorldFields(grid, acceleration, field, field_gradient, params)


def step_spin_worlds(
    ensemble: SpinWorldEnsemble,
    V: PotentialSpec,
    B: BFieldSpec,
    est: DensityEstimatorSpec,
    grid: GridSpec,
    params: SpinParams | None,
    dt: float,
) -> SpinWorldEnsemble:
    """
    One step of every spinning world.

    Moments take half an exact precession about B_Tot at each end of the step;
    positions and velocities take a velocity-Verlet step in between. ρ̂ and the
    mean moment field are re-estimated from the worlds at both ends.
    """
    if not dt > 0:
        raise ParameterError(f"dt must be positive, got {dt}")
    if ensemble.count < MIN_DYNAMIC_WORLDS:
        raise WorldCountError(f"dynamics needs at least {MIN_DYNAMIC_WORLDS} worlds, got {ensemble.count}")
    if ensemble.count < RELIABLE_WORLDS:
        logger.warning("continuum approximation unreliable with %d worlds", ensemble.count)
    params = params or ensemble.params
    params.check_grid(grid)

    fields = _world_fields(ensemble.positions, ensemble.directions, V, B, est, grid, params)
    directions = rotate_moments(ensemble.directions.T, fields.field_at(ensemble.positions), params, 0.5 * dt).T
    half = ensemble.velocities + 0.5 * dt * fields.accelerations(ensemble.positions, directions)
    positions, half, events = place_in_grid(grid, ensemble.positions + dt * half, half)
    if events:
        log = logger.debug if grid.periodic else logger.warning
        log("%d spinning worlds crossed the grid boundary at t=%g", events, ensemble.time + dt)

    fields = _world_fields(positions, directions, V, B, est, grid, params)
    velocities = half + 0.5 * dt * fields.accelerations(positions, directions)
    directions = rotate_moments(directions.T, fields.field_at(positions), params, 0.5 * dt).T

    diagnostics = dict(ensemble.diagnostics)
    diagnostics["boundary_events"] = diagnostics.get("boundary_events", 0) + events
    return SpinWorldEnsemble(positions, velocities, directions, params, ensemble.time + dt, diagnostics)


def check_spin_quantization(
    state: SpinHydroState,
    params: SpinParams | None = None,
    loops: Sequence[ClosedLoop] | str = "auto",
    tolerance: float | None = None,
) -> QuantizationReport:
    """Compare ``∮ (m v − ħ sin²(α/2) ∇β) · dl`` around each loop with the nearest multiple of h."""
    grid = state.grid
    params = _resolve_spin_params(grid, params)
    weight = np.sin(0.5 * state.alpha.values) ** 2
    momentum = params.mass * state.velocity.values - params.hbar * weight * angle_gradient(state.beta.values, grid)
    defined = state.velocity.defined & state.beta.mask
    return circulation_report(np.where(defined, momentum, 0.0), grid, defined, params.hbar, loops, tolerance)
