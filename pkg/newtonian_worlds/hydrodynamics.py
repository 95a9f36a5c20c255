"""
Madelung decomposition and continuum (ρ, v) dynamics for Newtonian Worlds.
"""
import logging

import numpy as np

from newtonian_worlds.core import (
    GridSpec,
    HydroState,
    PhysicalParams,
    PotentialSpec,
    ScalarField,
    VectorField,
    WaveState,
    angle_gradient,
    fill_undefined,
    masked_derivative,
    node_mask,
    resolve_params,
    smooth_derivative,
    smooth_gradient,
)
from newtonian_worlds.exceptions import NumericGuardError, ParameterError, PhaseMismatchError
from newtonian_worlds.oracle import SplitOperator

logger = logging.getLogger(__name__)

CFL_LIMIT = 0.5


def madelung_decompose(state: WaveState, params: PhysicalParams | None = None) -> HydroState:
    """Split Ψ into the world density |Ψ|², the guidance velocity field and its potential θ = arg Ψ."""
    grid = state.grid
    params = resolve_params(grid, params)
    psi = state.amplitudes
    rho = np.abs(psi) ** 2
    defined = node_mask(rho)
    current = np.imag(np.conj(psi) * smooth_gradient(psi, grid))
    masses = params.axis_masses()[(slice(None),) + (None,) * grid.ndim]
    safe = np.where(defined, rho, 1.0)
    velocity = np.where(defined, params.hbar / masses * current / safe, 0.0)
    return HydroState(
        ScalarField(grid, rho),
        VectorField(grid, velocity, defined),
        state.time,
        ScalarField(grid, np.angle(psi), defined),
    )


def _quantum_potential_values(rho: np.ndarray, grid: GridSpec, params: PhysicalParams, defined: np.ndarray):
    amplitude = np.sqrt(np.clip(rho, 0.0, None))
    safe = np.where(defined, amplitude, 1.0)
    masses = params.axis_masses()
    q = np.zeros(grid.shape)
    for a in range(grid.ndim):
        q += -(params.hbar**2) / (2.0 * masses[a]) * smooth_derivative(amplitude, grid, a, order=2)
    return fill_undefined(np.where(defined, q / safe, 0.0), defined)


def quantum_potential(rho: ScalarField, params: PhysicalParams | None = None) -> ScalarField:
    """
    Q = Σ_k (−ħ²/2m_k) ∇_k²√ρ / √ρ.

    Node points (ρ below ``NODE_THRESHOLD`` relative to the peak) take the value at
    the nearest defined point and are marked undefined.
    """
    params = resolve_params(rho.grid, params)
    defined = node_mask(rho.values)
    return ScalarField(rho.grid, _quantum_potential_values(rho.values, rho.grid, params, defined), defined)


def quantum_force(rho: ScalarField, params: PhysicalParams | None = None) -> VectorField:
    """−∇Q on defined points; zero where no stencil fits."""
    q = quantum_potential(rho, params)
    grid = rho.grid
    force = np.stack([-masked_derivative(q.values, grid, a, q.defined) for a in range(grid.ndim)])
    return VectorField(grid, force, q.defined)


def check_cfl(rho: ScalarField, velocity: VectorField, dt: float):
    """
    Mass-weighted CFL guard: the largest ``(ρ/ρ_peak)·|v_k|·dt/h_k`` on the grid.

    Tail velocities that carry no worlds do not limit the step.
    """
    grid = rho.grid
    peak = float(np.max(rho.values))
    if not peak > 0:
        return
    spacings = grid.spacings[(slice(None),) + (None,) * grid.ndim]
    speeds = np.abs(np.where(velocity.defined, velocity.values, 0.0))
    courant = rho.values / peak * np.max(speeds * dt / spacings, axis=0)
    cfl = float(np.max(courant))
    if cfl > CFL_LIMIT:
        worst = tuple(int(i) for i in np.unravel_index(int(np.argmax(courant)), grid.shape))
        raise NumericGuardError("cfl", f"CFL number {cfl:.4g} at grid index {worst} exceeds {CFL_LIMIT}; reduce dt={dt}")


def carried_wave(state: HydroState) -> WaveState:
    """The amplitude √ρ e^{iθ} of a state that carries its velocity potential."""
    if state.phase is None:
        raise ParameterError(
            "the hydro state carries no velocity potential; build it with madelung_decompose or attach a phase"
        )
    amplitude = np.sqrt(np.clip(state.rho.values, 0.0, None))
    return WaveState(state.grid, amplitude * np.exp(1j * state.phase.values), state.time)


def step_hydro(state: HydroState, V: PotentialSpec, params: PhysicalParams | None, dt: float) -> HydroState:
    """
    Advance (ρ, v) by one symmetric split step of the continuity equation and the force law.

    Both field equations are linear in the amplitude √ρ e^{iθ}. Two potential half kicks
    (θ −= V dt/2ħ) bracket the exact free flow, taken spectrally, and the result is split
    back into (ρ, v, θ). The density never goes negative, m v stays a gradient and the
    step retraces itself under v → −v.
    """
    if not dt > 0:
        raise ParameterError(f"dt must be positive, got {dt}")
    grid = state.grid
    params = resolve_params(grid, params)
    check_cfl(state.rho, state.velocity, dt)
    wave = carried_wave(state)
    stepper = SplitOperator(grid, V.evaluate(grid, params), params, dt)
    return madelung_decompose(WaveState(grid, stepper(wave.amplitudes), state.time + dt), params)


def phase_time_derivative(
    state: HydroState,
    theta: ScalarField,
    V: PotentialSpec,
    params: PhysicalParams | None = None,
    tolerance: float = 1e-2,
) -> ScalarField:
    """∂θ/∂t = −(Q + Σ ½m|v|² + V)/ħ on the defined points of the state."""
    grid = state.grid
    params = resolve_params(grid, params)
    defined = state.velocity.defined
    masses = params.axis_masses()[(slice(None),) + (None,) * grid.ndim]

    implied = params.hbar / masses * angle_gradient(theta.values, grid)
    velocity = np.where(defined, state.velocity.values, 0.0)
    mismatch = float(np.max(np.abs(np.where(defined, implied - velocity, 0.0))))
    scale = max(1.0, float(np.max(np.abs(velocity))))
    if mismatch > tolerance * scale:
        raise PhaseMismatchError(f"phase gradient differs from the velocity field by {mismatch:.3g}")

    q = _quantum_potential_values(state.rho.values, grid, params, defined)
    kinetic = 0.5 * np.sum(masses * velocity**2, axis=0)
    rate = -(q + kinetic + V.evaluate(grid, params)) / params.hbar
    return ScalarField(grid, fill_undefined(rate, defined), defined)
