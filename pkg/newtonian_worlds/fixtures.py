"""
Analytic states used by scenarios and tests in Newtonian Worlds.
"""
from typing import Sequence

import numpy as np

from newtonian_worlds.core import (
    GridSpec,
    HydroState,
    PhysicalParams,
    ScalarField,
    VectorField,
    WaveState,
    node_mask,
    resolve_params,
)
from newtonian_worlds.exceptions import ParameterError
from newtonian_worlds.oracle import SpinorState


def _per_axis(value, grid: GridSpec) -> np.ndarray:
    return np.broadcast_to(np.asarray(value, dtype=float), (grid.ndim,))


def gaussian_packet(
    grid: GridSpec, center: float | Sequence[float] = 0.0, sigma: float | Sequence[float] = 1.0, wavenumber=0.0
) -> WaveState:
    """Product Gaussian with density variance ``sigma**2`` per axis and mean momentum ``ħk``."""
    center, sigma, wavenumber = (_per_axis(v, grid) for v in (center, sigma, wavenumber))
    if np.any(sigma <= 0):
        raise ParameterError(f"packet widths must be positive, got {sigma}")
    mesh = grid.mesh()
    exponent = sum(
        -((mesh[a] - center[a]) ** 2) / (4.0 * sigma[a] ** 2) + 1j * wavenumber[a] * mesh[a] for a in range(grid.ndim)
    )
    return WaveState(grid, np.exp(exponent)).normalized()


def spread_width(sigma0: float, t: float, hbar: float = 1.0, mass: float = 1.0) -> float:
    """Width of a free Gaussian packet after time ``t``."""
    return sigma0 * np.sqrt(1.0 + (hbar * t / (2.0 * mass * sigma0**2)) ** 2)


def grid_wavenumber(grid: GridSpec, axis: int, mode: int) -> float:
    """Wavenumber of Fourier mode ``mode`` along a periodic axis."""
    return 2.0 * np.pi * mode / grid.axes[axis].length


def plane_wave(grid: GridSpec, wavenumber: float | Sequence[float]) -> WaveState:
    k = _per_axis(wavenumber, grid)
    mesh = grid.mesh()
    return WaveState(grid, np.exp(1j * sum(k[a] * mesh[a] for a in range(grid.ndim)))).normalized()


def harmonic_ground(grid: GridSpec, omega: float = 1.0, params: PhysicalParams | None = None) -> WaveState:
    """Ground state of ``½mω²x²`` on every axis."""
    return coherent_state(grid, omega, 0.0, params)


def coherent_state(
    grid: GridSpec, omega: float, displacement: float | Sequence[float], params: PhysicalParams | None = None
) -> WaveState:
    """Ground state displaced by ``displacement`` at rest; its centroid follows ``x0 cos ωt``."""
    params = resolve_params(grid, params)
    sigma = np.sqrt(params.hbar / (2.0 * params.axis_masses() * omega))
    return gaussian_packet(grid, displacement, sigma)


def ring_state(grid: GridSpec, bohr_radius: float = 1.0, normalize: bool = False) -> WaveState:
    """The n=2, l=1, m=1 hydrogen eigenstate, circulating about the z axis."""
    if grid.ndim != 3:
        raise ParameterError("the ring state lives on a three-axis grid")
    x, y, z = grid.mesh()
    r = np.sqrt(x**2 + y**2 + z**2)
    a = bohr_radius
    psi = -1.0 / (8.0 * np.sqrt(a**5 * np.pi)) * np.exp(-r / (2.0 * a)) * (x + 1j * y)
    state = WaveState(grid, psi)
    return state.normalized() if normalize else state


def ring_hydro_state(
    grid: GridSpec, params: PhysicalParams | None = None, bohr_radius: float = 1.0, speedup: float = 1.0
) -> HydroState:
    """
    Ring-state density with the analytic azimuthal velocity ``ħ/(m r sinθ)``, optionally scaled.

    The carried phase is ``speedup·φ``; it is single valued only for integer speedups.
    """
    params = resolve_params(grid, params)
    psi = ring_state(grid, bohr_radius, normalize=True)
    rho = psi.density()
    x, y, _ = grid.mesh()
    cylinder = x**2 + y**2
    defined = node_mask(rho) & (cylinder > 0)
    safe = np.where(defined, cylinder, 1.0)
    mass = params.axis_masses()[0]
    speed = speedup * params.hbar / mass
    velocity = np.stack([-y, x, np.zeros(grid.shape)]) * speed / safe
    velocity = np.where(defined, velocity, 0.0)
    phase = ScalarField(grid, np.angle(np.exp(1j * speedup * np.arctan2(y, x))), defined)
    return HydroState(ScalarField(grid, rho), VectorField(grid, velocity, defined), 0.0, phase)


def square_well_pair(grid: GridSpec, length: float) -> tuple[WaveState, WaveState]:
    """
    Second well eigenstate ``sin(2πx/L)`` and its modulus ``|sin(2πx/L)|``.

    Both give the same density and the same (zero) velocity field.
    """
    if grid.ndim > 1:
        raise ParameterError("the square well pair is one-dimensional")
    x = grid.mesh()[0]
    inside = (x >= 0.0) & (x <= length)
    psi = np.where(inside, np.sqrt(2.0 / length) * np.sin(2.0 * np.pi * x / length), 0.0)
    return WaveState(grid, psi).normalized(), WaveState(grid, np.abs(psi)).normalized()


def bump_pair(grid: GridSpec) -> tuple[WaveState, WaveState]:
    """
    Two smooth compactly supported bumps of opposite sign, and their modulus.

    The pair agrees on density and velocity yet differs as wavefunctions.
    """
    if grid.ndim > 1:
        raise ParameterError("the bump pair is one-dimensional")
    x = grid.mesh()[0]

    def bump(u):
        inside = np.abs(u) < 1.0
        safe = np.where(inside, 1.0 - u**2, 1.0)
        return np.where(inside, np.exp(-1.0 / safe), 0.0)

    psi = bump(x + 2.0) - bump(x - 2.0)
    return WaveState(grid, psi).normalized(), WaveState(grid, np.abs(psi)).normalized()


def random_nodeless_state(grid: GridSpec, seed: int, modes: int = 2, strength: float = 0.5) -> WaveState:
    """A smooth periodic state ``exp(a(x) + iθ(x))`` built from a few random low Fourier modes."""
    rng = np.random.default_rng(seed)
    mesh = grid.mesh()
    log_amplitude = np.zeros(grid.shape)
    phase = np.zeros(grid.shape)
    for a in range(grid.ndim):
        for mode in range(1, modes + 1):
            k = grid_wavenumber(grid, a, mode)
            c = rng.normal(scale=strength, size=4)
            log_amplitude += c[0] * np.cos(k * mesh[a]) + c[1] * np.sin(k * mesh[a])
            phase += c[2] * np.cos(k * mesh[a]) + c[3] * np.sin(k * mesh[a])
    return WaveState(grid, np.exp(log_amplitude + 1j * phase)).normalized()


def polarized_spinor(wave: WaveState, alpha: float = np.pi / 2, beta: float = 0.0) -> SpinorState:
    """Spinor with a uniform moment direction (α, β); the default is x-polarized."""
    psi = wave.amplitudes
    plus = np.cos(alpha / 2.0) * psi
    minus = np.sin(alpha / 2.0) * np.exp(1j * beta) * psi
    return SpinorState(wave.grid, plus, minus, wave.time).normalized()
