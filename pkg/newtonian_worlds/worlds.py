"""
Finite world ensembles for Newtonian Worlds: sampling, density estimation,
inter-world forces and trajectories.
"""
import dataclasses
import enum
import itertools
import logging
from typing import Sequence

import numpy as np
from scipy import ndimage

from newtonian_worlds.core import (
    GridSpec,
    PhysicalParams,
    PotentialSpec,
    ScalarField,
    WaveState,
    WorldEnsemble,
    fill_undefined,
    interpolate,
    masked_gradient,
    node_mask,
    resolve_params,
)
from newtonian_worlds.exceptions import NodeError, ParameterError, WorldCountError
from newtonian_worlds.hydrodynamics import madelung_decompose, quantum_potential

logger = logging.getLogger(__name__)

MIN_DYNAMIC_WORLDS = 2
RELIABLE_WORLDS = 100
MIN_BINS = 8
UNSAMPLEABLE_MASS = 1e-6
# kernel tails are cut where they fall far below the node threshold
KERNEL_TRUNCATE = 10.0


class EstimatorKind(str, enum.Enum):
    GAUSSIAN_KERNEL = "gaussian_kernel"
    HISTOGRAM = "histogram"


@dataclasses.dataclass(frozen=True)
class DensityEstimatorSpec:
    """How a smooth world density is read off a finite ensemble."""

    kind: EstimatorKind = EstimatorKind.GAUSSIAN_KERNEL
    bandwidth: float | tuple[float, ...] | str = "auto"
    bins: int | tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", EstimatorKind(self.kind))
        if self.kind is EstimatorKind.GAUSSIAN_KERNEL and self.bandwidth != "auto":
            bandwidth = np.atleast_1d(np.asarray(self.bandwidth, dtype=float))
            if np.any(bandwidth <= 0):
                raise ParameterError(f"kernel bandwidth must be positive, got {self.bandwidth}")
        if self.bins is not None and np.any(np.atleast_1d(self.bins) < MIN_BINS):
            raise ParameterError(f"histograms need at least {MIN_BINS} bins per axis, got {self.bins}")

    @classmethod
    def gaussian_kernel(cls, bandwidth: float | Sequence[float] | str = "auto") -> "DensityEstimatorSpec":
        if not isinstance(bandwidth, str) and np.ndim(bandwidth):
            bandwidth = tuple(bandwidth)
        return cls(EstimatorKind.GAUSSIAN_KERNEL, bandwidth=bandwidth)

    @classmethod
    def histogram(cls, bins: int | Sequence[int] | None = None) -> "DensityEstimatorSpec":
        if bins is not None and np.ndim(bins):
            bins = tuple(bins)
        return cls(EstimatorKind.HISTOGRAM, bins=bins)

    def kernel_widths(self, positions: np.ndarray, grid: GridSpec) -> np.ndarray:
        """Per-axis kernel widths; ``auto`` scales the sample deviation by ``n^(-1/(D+4))``."""
        if self.bandwidth != "auto":
            return np.broadcast_to(np.asarray(self.bandwidth, dtype=float), (grid.ndim,))
        n, dims = positions.shape
        spread = np.std(positions, axis=0)
        spread = np.where(spread > 0, spread, grid.spacings)
        return spread * (4.0 / (dims + 2.0)) ** (1.0 / (dims + 4.0)) * n ** (-1.0 / (dims + 4.0))


@dataclasses.dataclass(eq=False)
class Pathline:
    """A tracer trajectory sampled at ``times``; truncated pathlines stop at the last defined point."""

    times: np.ndarray
    positions: np.ndarray
    truncated: bool = False

    @property
    def final(self) -> np.ndarray:
        return self.positions[-1]


def _guidance_field(state: WaveState, params: PhysicalParams) -> tuple[np.ndarray, np.ndarray]:
    hydro = madelung_decompose(state, params)
    return hydro.velocity.filled(), hydro.velocity.defined


def place_in_grid(grid: GridSpec, positions: np.ndarray, velocities: np.ndarray | None = None):
    """
    Wrap positions on periodic grids and reflect them off box walls.

    Returns the new positions, velocities (reflected components negated) and the
    number of worlds that crossed a boundary.
    """
    outside = ~grid.contains(positions)
    if grid.periodic:
        return grid.wrap(positions), velocities, int(np.count_nonzero(outside))
    lengths = grid.lengths
    folded = np.mod(positions - grid.lowers, 2.0 * lengths)
    flipped = folded >= lengths
    folded = np.where(flipped, 2.0 * lengths - folded, folded)
    placed = np.minimum(grid.lowers + folded, np.nextafter(grid.uppers, grid.lowers))
    if velocities is not None:
        velocities = np.where(flipped, -velocities, velocities)
    return placed, velocities, int(np.count_nonzero(outside))


def sample_worlds(state: WaveState, count: int, seed: int, params: PhysicalParams | None = None) -> WorldEnsemble:
    """
    Draw ``count`` worlds i.i.d. from |Ψ|² with the local guidance velocity.

    Grid cells are chosen by inverse CDF over ``|Ψ|² dV``; positions are jittered
    uniformly within the chosen cell.
    """
    if count < MIN_DYNAMIC_WORLDS:
        raise WorldCountError(f"ensembles need at least {MIN_DYNAMIC_WORLDS} worlds, got {count}")
    grid = state.grid
    params = resolve_params(grid, params)
    mass = state.density() * grid.cell_volume
    total = float(np.sum(mass))
    defined = node_mask(mass)
    stranded = float(np.sum(mass[~defined]))
    if stranded > UNSAMPLEABLE_MASS * total:
        raise NodeError(f"{stranded / total:.3g} of the mass sits below the node threshold; velocities are undefined")

    rng = np.random.default_rng(seed)
    cdf = np.cumsum(np.where(defined, mass, 0.0).ravel())
    cdf /= cdf[-1]
    cells = np.minimum(np.searchsorted(cdf, rng.random(count), side="right"), cdf.size - 1)
    index = np.stack(np.unravel_index(cells, grid.shape), axis=1)
    jitter = rng.uniform(-0.5, 0.5, size=(count, grid.ndim)) * grid.spacings
    positions, _, _ = place_in_grid(grid, grid.lowers + index * grid.spacings + jitter)

    velocity, _ = _guidance_field(state, params)
    velocities = interpolate(velocity, grid, positions).T
    return WorldEnsemble(positions, velocities, params, state.time)


def deposit(positions: np.ndarray, grid: GridSpec, weights: np.ndarray | None = None) -> np.ndarray:
    """Cloud-in-cell world counts on the grid (linear tent weights), optionally weighted per world."""
    scaled = grid.fractional_index(positions)
    base = np.floor(scaled).astype(int)
    frac = scaled - base
    shape = np.array(grid.shape)
    counts = np.zeros(grid.size)
    for corner in itertools.product((0, 1), repeat=grid.ndim):
        offset = np.array(corner)
        index = base + offset
        index = np.mod(index, shape) if grid.periodic else np.clip(index, 0, shape - 1)
        tent = np.prod(np.where(offset == 1, frac, 1.0 - frac), axis=1)
        if weights is not None:
            tent = tent * weights
        flat = np.ravel_multi_index(tuple(index.T), grid.shape)
        counts += np.bincount(flat, weights=tent, minlength=grid.size)
    return counts.reshape(grid.shape)


def _histogram(positions: np.ndarray, grid: GridSpec, bins) -> np.ndarray:
    bins = np.broadcast_to(np.asarray(grid.shape if bins is None else bins), (grid.ndim,))
    # bins are centred on grid points when their count matches the grid
    lower = grid.lowers - 0.5 * grid.spacings
    upper = grid.uppers - 0.5 * grid.spacings
    if grid.periodic:
        positions = np.where(positions >= upper, positions - grid.lengths, positions)
    else:
        positions = np.clip(positions, lower, np.nextafter(upper, lower))
    counts, _ = np.histogramdd(positions, bins=tuple(bins), range=list(zip(lower, upper)))
    widths = (upper - lower) / bins
    index = [
        np.clip(((grid.coordinates(a) - lower[a]) / widths[a]).astype(int), 0, bins[a] - 1) for a in range(grid.ndim)
    ]
    return counts[np.ix_(*index)]


def _smoothed_counts(positions: np.ndarray, est: DensityEstimatorSpec, grid: GridSpec) -> np.ndarray:
    if est.kind is EstimatorKind.HISTOGRAM:
        return _histogram(positions, grid, est.bins)
    sigma = est.kernel_widths(positions, grid) / grid.spacings
    mode = "wrap" if grid.periodic else "reflect"
    return ndimage.gaussian_filter(deposit(positions, grid), sigma=sigma, mode=mode, truncate=KERNEL_TRUNCATE)


def estimate_density(ensemble: WorldEnsemble, est: DensityEstimatorSpec, grid: GridSpec) -> ScalarField:
    """Normalized smooth world density on the grid."""
    positions = ensemble.positions
    if positions.shape[0] < MIN_DYNAMIC_WORLDS:
        raise WorldCountError(f"density estimates need at least {MIN_DYNAMIC_WORLDS} worlds")
    density = np.clip(_smoothed_counts(positions, est, grid), 0.0, None)
    return ScalarField(grid, density / (np.sum(density) * grid.cell_volume))


def world_accelerations(
    positions: np.ndarray, params: PhysicalParams, V: PotentialSpec, est: DensityEstimatorSpec, grid: GridSpec
) -> np.ndarray:
    """``a = −(1/m)∇[Q(ρ̂) + V]`` at every world, with ρ̂ estimated from the worlds themselves."""
    rho = estimate_density(WorldEnsemble(positions, np.zeros_like(positions), params), est, grid)
    q = quantum_potential(rho, params)
    total = fill_undefined(q.values + V.evaluate(grid, params), q.defined)
    masses = params.axis_masses()[(slice(None),) + (None,) * grid.ndim]
    field = -masked_gradient(total, grid, q.defined) / masses
    return interpolate(field, grid, positions).T


def step_worlds(
    ensemble: WorldEnsemble, V: PotentialSpec, est: DensityEstimatorSpec, grid: GridSpec, dt: float
) -> WorldEnsemble:
    """
    One velocity-Verlet step of every world.

    The density is estimated once per step, at the new positions; the kick from
    the start of the step reuses the accelerations cached on the ensemble.
    """
    if not dt > 0:
        raise ParameterError(f"dt must be positive, got {dt}")
    if ensemble.count < MIN_DYNAMIC_WORLDS:
        raise WorldCountError(f"dynamics needs at least {MIN_DYNAMIC_WORLDS} worlds, got {ensemble.count}")
    if ensemble.count < RELIABLE_WORLDS:
        logger.warning("continuum approximation unreliable with %d worlds", ensemble.count)
    params = ensemble.params
    params.check_grid(grid)

    accelerations = ensemble.accelerations
    if accelerations is None or accelerations.shape != ensemble.positions.shape:
        accelerations = world_accelerations(ensemble.positions, params, V, est, grid)
    half = ensemble.velocities + 0.5 * dt * accelerations
    positions, half, events = place_in_grid(grid, ensemble.positions + dt * half, half)
    if events:
        log = logger.debug if grid.periodic else logger.warning
        log("%d worlds crossed the grid boundary at t=%g", events, ensemble.time + dt)
    new_accelerations = world_accelerations(positions, params, V, est, grid)
    velocities = half + 0.5 * dt * new_accelerations

    diagnostics = dict(ensemble.diagnostics)
    diagnostics["boundary_events"] = diagnostics.get("boundary_events", 0) + events
    return WorldEnsemble(positions, velocities, params, ensemble.time + dt, new_accelerations, diagnostics)


def _defined_at(defined: np.ndarray, grid: GridSpec, points: np.ndarray) -> np.ndarray:
    index = np.rint(grid.fractional_index(points)).astype(int)
    shape = np.array(grid.shape)
    index = np.mod(index, shape) if grid.periodic else np.clip(index, 0, shape - 1)
    return defined[tuple(index.T)]


def bohmian_pathlines(
    wave_history: Sequence[WaveState],
    starts: np.ndarray,
    params: PhysicalParams | None = None,
    substeps: int = 4,
) -> list[Pathline]:
    """
    Integrate ``dx/dt = v(x, t)`` through a stored history with RK4.

    The guidance field is interpolated linearly in time between stored states.
    A pathline reaching a node region is truncated and flagged.
    """
    if len(wave_history) < 2:
        raise ParameterError("pathlines need at least two stored states")
    times = np.array([w.time for w in wave_history])
    spacing = np.diff(times)
    if spacing[0] <= 0 or not np.allclose(spacing, spacing[0], rtol=1e-9, atol=0.0):
        raise ParameterError("wave history must be uniformly spaced in time")
    grid = wave_history[0].grid
    params = resolve_params(grid, params)
    fields = [_guidance_field(w, params) for w in wave_history]

    dt = spacing[0] / substeps
    points = np.atleast_2d(np.asarray(starts, dtype=float)).copy()
    alive = np.ones(points.shape[0], dtype=bool)
    last = np.full(points.shape[0], 0)
    track = [points.copy()]
    clock = [times[0]]

    def velocity(segment, fraction, x):
        (v0, _), (v1, _) = fields[segment], fields[segment + 1]
        return ((1.0 - fraction) * interpolate(v0, grid, x) + fraction * interpolate(v1, grid, x)).T

    for segment in range(len(wave_history) - 1):
        for sub in range(substeps):
            f0, f1 = sub / substeps, (sub + 1) / substeps
            fm = 0.5 * (f0 + f1)
            x = points[alive]
            k1 = velocity(segment, f0, x)
            k2 = velocity(segment, fm, x + 0.5 * dt * k1)
            k3 = velocity(segment, fm, x + 0.5 * dt * k2)
            k4 = velocity(segment, f1, x + dt * k3)
            moved, _, _ = place_in_grid(grid, x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
            ok = _defined_at(fields[segment][1], grid, moved) & _defined_at(fields[segment + 1][1], grid, moved)
            alive_index = np.flatnonzero(alive)
            points[alive_index[ok]] = moved[ok]
            last[alive_index[ok]] = len(track)
            if not ok.all():
                logger.warning("%d pathlines entered a node region and were truncated", int(np.count_nonzero(~ok)))
                alive[alive_index[~ok]] = False
            track.append(points.copy())
            clock.append(times[segment] + f1 * spacing[0])

    history = np.stack(track)
    clock = np.asarray(clock)
    return [
        Pathline(clock[: last[i] + 1], history[: last[i] + 1, i], truncated=not alive[i])
        for i in range(points.shape[0])
    ]
