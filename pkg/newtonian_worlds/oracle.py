"""
Reference Schrödinger and Pauli solvers for Newtonian Worlds.

The split-operator steps are unitary up to round-off and carry no
renormalization, so the norm of the returned states measures solver quality.
"""
import dataclasses
import enum
import logging

import numpy as np
from scipy import fft

from newtonian_worlds.core import GridSpec, PhysicalParams, PotentialSpec, WaveState, resolve_params
from newtonian_worlds.exceptions import NumericGuardError, ParameterError
from newtonian_worlds.utils import worker_count

logger = logging.getLogger(__name__)


@dataclasses.dataclass(eq=False)
class SpinorState:
    """Two-component wavefunction of a single spin-1/2 particle, in the z basis."""

    grid: GridSpec
    plus: np.ndarray
    minus: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.plus = np.asarray(self.plus, dtype=complex)
        self.minus = np.asarray(self.minus, dtype=complex)
        if self.plus.shape != self.grid.shape or self.minus.shape != self.grid.shape:
            raise ParameterError(f"spinor components must both have the grid shape {self.grid.shape}")

    def density(self) -> np.ndarray:
        return np.abs(self.plus) ** 2 + np.abs(self.minus) ** 2

    def norm(self) -> float:
        return float(np.sum(self.density()) * self.grid.cell_volume)

    def normalized(self) -> "SpinorState":
        scale = 1.0 / np.sqrt(self.norm())
        return SpinorState(self.grid, self.plus * scale, self.minus * scale, self.time)

    def validate(self, tolerance: float = 1e-9):
        norm = self.norm()
        if abs(norm - 1.0) > tolerance:
            raise ParameterError(f"spinor norm is {norm:.12g}, not 1")


class BFieldKind(str, enum.Enum):
    UNIFORM = "uniform"
    LINEAR_GRADIENT = "linear_gradient"


@dataclasses.dataclass(frozen=True)
class BFieldSpec:
    """
    External magnetic field.

    ``linear_gradient`` is ``B(x) = base + gradient * x[axis]``; the Stern–Gerlach
    profile ``(0, 0, B0 + b z)`` is ``linear_gradient((0, 0, B0), (0, 0, b))``.
    """

    kind: BFieldKind = BFieldKind.UNIFORM
    base: tuple[float, float, float] = (0.0, 0.0, 0.0)
    gradient: tuple[float, float, float] = (0.0, 0.0, 0.0)
    axis: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", BFieldKind(self.kind))
        base = tuple(float(b) for b in self.base)
        gradient = tuple(float(g) for g in self.gradient)
        if len(base) != 3 or len(gradient) != 3:
            raise ParameterError("magnetic fields have exactly three components")
        if not np.all(np.isfinite(base + gradient)):
            raise ParameterError(f"magnetic field components must be finite, got {base} and {gradient}")
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "gradient", gradient)

    @classmethod
    def uniform(cls, *vector: float) -> "BFieldSpec":
        return cls(BFieldKind.UNIFORM, base=vector)

    @classmethod
    def linear_gradient(cls, base, gradient, axis: int = 0) -> "BFieldSpec":
        return cls(BFieldKind.LINEAR_GRADIENT, base=tuple(base), gradient=tuple(gradient), axis=axis)

    @classmethod
    def stern_gerlach(cls, b0: float, slope: float, axis: int = 0) -> "BFieldSpec":
        return cls.linear_gradient((0.0, 0.0, b0), (0.0, 0.0, slope), axis)

    def evaluate(self, grid: GridSpec) -> np.ndarray:
        """Field components, shape ``(3, *grid.shape)``."""
        field = np.broadcast_to(np.asarray(self.base)[(slice(None),) + (None,) * grid.ndim], (3, *grid.shape))
        if self.kind is BFieldKind.UNIFORM:
            return np.array(field)
        if not 0 <= self.axis < grid.ndim:
            raise ParameterError(f"field gradient axis {self.axis} is outside a {grid.ndim}-axis grid")
        x = grid.mesh()[self.axis]
        return field + np.asarray(self.gradient)[(slice(None),) + (None,) * grid.ndim] * x

    def spatial_gradient(self, grid: GridSpec) -> np.ndarray:
        """Derivatives ``∂_a B_c``, shape ``(grid.ndim, 3, *grid.shape)``."""
        result = np.zeros((grid.ndim, 3, *grid.shape))
        if self.kind is BFieldKind.LINEAR_GRADIENT:
            result[self.axis] = np.asarray(self.gradient)[(slice(None),) + (None,) * grid.ndim]
        return result


def check_aliasing(grid: GridSpec, params: PhysicalParams, dt: float):
    """Reject time steps whose kinetic phase advance at the Nyquist mode exceeds π."""
    masses = params.axis_masses()
    nyquist = np.pi / grid.spacings
    phase = float(np.sum(params.hbar * nyquist**2 * dt / (2.0 * masses)))
    if phase > np.pi:
        raise NumericGuardError(
            "aliasing", f"kinetic phase advance {phase:.4g} rad at the Nyquist mode exceeds pi; reduce dt={dt}"
        )


def kinetic_symbol(grid: GridSpec, params: PhysicalParams) -> np.ndarray:
    """Kinetic energy ``Σ ħ²k²/2m`` of every Fourier mode."""
    masses = params.axis_masses()
    return sum(params.hbar**2 * k**2 / (2.0 * masses[a]) for a, k in enumerate(grid.wavenumber_mesh()))


def _check_step(dt: float, steps: int):
    if not dt > 0:
        raise ParameterError(f"dt must be positive, got {dt}")
    if steps < 0 or int(steps) != steps:
        raise ParameterError(f"steps must be a non-negative integer, got {steps}")


class SplitOperator:
    """
    Strang splitting ``e^{-iVdt/2ħ} e^{-iTdt/ħ} e^{-iVdt/2ħ}`` with a spectral kinetic step.
    """

    def __init__(self, grid: GridSpec, potential: np.ndarray, params: PhysicalParams, dt: float):
        check_aliasing(grid, params, dt)
        self.grid = grid
        self.dt = dt
        self._workers = worker_count()
        self._half_potential = np.exp(-0.5j * dt * potential / params.hbar)
        self._kinetic = np.exp(-1j * dt * kinetic_symbol(grid, params) / params.hbar)

    def kinetic(self, psi: np.ndarray) -> np.ndarray:
        transformed = fft.fftn(psi, workers=self._workers)
        return fft.ifftn(transformed * self._kinetic, workers=self._workers)

    def __call__(self, psi: np.ndarray) -> np.ndarray:
        """Step the wavefunction in time."""
        return self._half_potential * self.kinetic(self._half_potential * psi)


class PauliSplitOperator(SplitOperator):
    """
    Strang splitting for the Pauli Hamiltonian ``T + V - μ B·σ``.

    The potential half step is the exact per-point 2×2 unitary
    ``e^{-iVdt/2ħ} (cos φ + i sin φ n̂·σ)`` with ``φ n̂ = μ B dt / 2ħ``.
    """

    def __init__(
        self, grid: GridSpec, potential: np.ndarray, field: np.ndarray, mu: float, params: PhysicalParams, dt: float
    ):
        super().__init__(grid, potential, params, dt)
        rotation = mu * dt / (2.0 * params.hbar) * field
        angle = np.sqrt(np.sum(rotation**2, axis=0))
        self._cos = np.cos(angle)
        # sin(φ)/φ · (φ n̂), finite at φ = 0
        self._sin = np.sinc(angle / np.pi) * rotation

    def rotate(self, plus: np.ndarray, minus: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        sx, sy, sz = self._sin
        c = self._cos
        new_plus = (c + 1j * sz) * plus + (1j * sx + sy) * minus
        new_minus = (1j * sx - sy) * plus + (c - 1j * sz) * minus
        return self._half_potential * new_plus, self._half_potential * new_minus

    def __call__(self, plus: np.ndarray, minus: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        plus, minus = self.rotate(plus, minus)
        return self.rotate(self.kinetic(plus), self.kinetic(minus))


def evolve_schrodinger(
    state: WaveState, V: PotentialSpec, dt: float, steps: int, params: PhysicalParams | None = None
) -> WaveState:
    """Advance Ψ by ``steps`` Strang steps of length ``dt``."""
    _check_step(dt, steps)
    params = resolve_params(state.grid, params)
    stepper = SplitOperator(state.grid, V.evaluate(state.grid, params), params, dt)
    logger.debug("schrodinger: %d steps of dt=%g from t=%g", steps, dt, state.time)
    psi = state.amplitudes
    for _ in range(int(steps)):
        psi = stepper(psi)
    return WaveState(state.grid, psi, state.time + dt * steps)


def evolve_pauli(
    state: SpinorState,
    V: PotentialSpec,
    B: BFieldSpec,
    mu: float,
    dt: float,
    steps: int,
    params: PhysicalParams | None = None,
) -> SpinorState:
    """Advance χ by ``steps`` Strang steps of the Pauli equation."""
    _check_step(dt, steps)
    if not np.isfinite(mu):
        raise ParameterError(f"mu must be finite, got {mu}")
    params = resolve_params(state.grid, params)
    if params.particle_count != 1:
        raise ParameterError("the Pauli solver handles a single particle")
    stepper = PauliSplitOperator(state.grid, V.evaluate(state.grid, params), B.evaluate(state.grid), mu, params, dt)
    logger.debug("pauli: %d steps of dt=%g from t=%g", steps, dt, state.time)
    plus, minus = state.plus, state.minus
    for _ in range(int(steps)):
        plus, minus = stepper(plus, minus)
    return SpinorState(state.grid, plus, minus, state.time + dt * steps)


def apply_hamiltonian(state: WaveState, V: PotentialSpec, params: PhysicalParams | None = None) -> np.ndarray:
    """HΨ with a spectral kinetic term."""
    grid = state.grid
    params = resolve_params(grid, params)
    psi = state.amplitudes
    workers = worker_count()
    kinetic = fft.ifftn(kinetic_symbol(grid, params) * fft.fftn(psi, workers=workers), workers=workers)
    return kinetic + V.evaluate(grid, params) * psi


def energy_expectation(state: WaveState, V: PotentialSpec, params: PhysicalParams | None = None) -> float:
    """⟨H⟩ of a normalized state."""
    h_psi = apply_hamiltonian(state, V, params)
    return float(np.real(np.sum(np.conj(state.amplitudes) * h_psi)) * state.grid.cell_volume)


def spin_expectation(state: SpinorState) -> np.ndarray:
    """``(⟨σx⟩, ⟨σy⟩, ⟨σz⟩)``."""
    dv = state.grid.cell_volume
    overlap = np.sum(np.conj(state.plus) * state.minus) * dv
    sz = np.sum(np.abs(state.plus) ** 2 - np.abs(state.minus) ** 2) * dv
    return np.array([2.0 * overlap.real, 2.0 * overlap.imag, sz])


def spin_weights(state: SpinorState) -> tuple[float, float]:
    """Probabilities of spin up and spin down along z."""
    dv = state.grid.cell_volume
    return float(np.sum(np.abs(state.plus) ** 2) * dv), float(np.sum(np.abs(state.minus) ** 2) * dv)
