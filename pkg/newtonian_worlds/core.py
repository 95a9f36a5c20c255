"""
Grids, fields, states and finite-difference calculus for Newtonian Worlds.

Every array that lives on a grid keeps the grid axes as its *trailing* axes, so
stacked quantities (velocity components, moment components) are arrays of shape
``(components, *grid.shape)`` and share the same helpers as scalar fields.
"""
import dataclasses
import enum
from typing import Callable, Sequence

import numpy as np
from scipy import fft, ndimage

from newtonian_worlds.exceptions import ParameterError
from newtonian_worlds.utils import worker_count

NODE_THRESHOLD = 1e-12
MIN_AXIS_POINTS = 8
MAX_GRID_DIMS = 3


@dataclasses.dataclass(frozen=True)
class PhysicalParams:
    """Physical constants of the simulated universe (natural units by default)."""

    hbar: float = 1.0
    masses: tuple[float, ...] | None = None
    particle_count: int = 1
    space_dims: int = 1

    def __post_init__(self):
        if self.masses is None:
            object.__setattr__(self, "masses", (1.0,) * int(self.particle_count))
        else:
            masses = tuple(float(m) for m in self.masses)
            object.__setattr__(self, "masses", masses)
            if self.particle_count == 1 and len(masses) != 1:
                object.__setattr__(self, "particle_count", len(masses))
        if self.hbar <= 0:
            raise ParameterError(f"hbar must be positive, got {self.hbar}")
        if self.particle_count < 1:
            raise ParameterError(f"particle_count must be at least 1, got {self.particle_count}")
        if len(self.masses) != self.particle_count:
            raise ParameterError(f"{len(self.masses)} masses given for {self.particle_count} particles")
        if any(m <= 0 for m in self.masses):
            raise ParameterError(f"every mass must be positive, got {self.masses}")
        if self.space_dims not in (1, 2, 3):
            raise ParameterError(f"space_dims must be 1, 2 or 3, got {self.space_dims}")

    @classmethod
    def for_grid(cls, grid: "GridSpec", hbar: float = 1.0, mass: float = 1.0) -> "PhysicalParams":
        """A single particle living in all dimensions of the grid."""
        return cls(hbar=hbar, masses=(mass,), space_dims=grid.ndim)

    @property
    def config_dims(self) -> int:
        return self.particle_count * self.space_dims

    def axis_masses(self) -> np.ndarray:
        """Mass attached to every configuration-space axis."""
        return np.repeat(np.asarray(self.masses, dtype=float), self.space_dims)

    def check_grid(self, grid: "GridSpec"):
        """Reject grids that do not discretize this configuration space."""
        if self.config_dims > MAX_GRID_DIMS:
            raise ParameterError(
                f"grid modes support at most {MAX_GRID_DIMS} configuration dimensions, got {self.config_dims}"
            )
        if grid.ndim != self.config_dims:
            raise ParameterError(
                f"grid has {grid.ndim} axes but the configuration space has {self.config_dims} dimensions"
            )


def resolve_params(grid: "GridSpec", params: PhysicalParams | None) -> PhysicalParams:
    """Default to a single particle spanning the grid, and check the grid fits."""
    params = params or PhysicalParams.for_grid(grid)
    params.check_grid(grid)
    return params


class Boundary(str, enum.Enum):
    PERIODIC = "periodic"
    BOX = "box"


@dataclasses.dataclass(frozen=True)
class Axis:
    """One uniformly sampled axis; points sit at ``lower + i * spacing``."""

    lower: float
    upper: float
    points: int

    def __post_init__(self):
        if not self.upper > self.lower:
            raise ParameterError(f"axis upper bound {self.upper} must exceed lower bound {self.lower}")
        if self.points < MIN_AXIS_POINTS:
            raise ParameterError(f"axes need at least {MIN_AXIS_POINTS} points, got {self.points}")

    @property
    def length(self) -> float:
        return self.upper - self.lower

    @property
    def spacing(self) -> float:
        return (self.upper - self.lower) / self.points

    def coordinates(self) -> np.ndarray:
        return self.lower + np.arange(self.points) * self.spacing


@dataclasses.dataclass(frozen=True)
class GridSpec:
    """Uniform rectangular discretization of configuration space."""

    axes: tuple[Axis, ...]
    boundary: Boundary = Boundary.PERIODIC

    def __post_init__(self):
        axes = tuple(a if isinstance(a, Axis) else Axis(*a) for a in self.axes)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "boundary", Boundary(self.boundary))
        if not 1 <= len(axes) <= MAX_GRID_DIMS:
            raise ParameterError(f"grids have 1 to {MAX_GRID_DIMS} axes, got {len(axes)}")

    @classmethod
    def uniform(
        cls, lower: float, upper: float, points: int, ndim: int = 1, boundary: Boundary | str = Boundary.PERIODIC
    ) -> "GridSpec":
        """A grid with identical axes."""
        return cls(tuple(Axis(lower, upper, points) for _ in range(ndim)), Boundary(boundary))

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(a.points for a in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def periodic(self) -> bool:
        return self.boundary is Boundary.PERIODIC

    @property
    def spacings(self) -> np.ndarray:
        return np.array([a.spacing for a in self.axes])

    @property
    def lowers(self) -> np.ndarray:
        return np.array([a.lower for a in self.axes])

    @property
    def uppers(self) -> np.ndarray:
        return np.array([a.upper for a in self.axes])

    @property
    def lengths(self) -> np.ndarray:
        return self.uppers - self.lowers

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacings))

    def coordinates(self, axis: int) -> np.ndarray:
        return self.axes[axis].coordinates()

    def mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*[a.coordinates() for a in self.axes], indexing="ij"))

    def wavenumbers(self, axis: int) -> np.ndarray:
        a = self.axes[axis]
        return 2.0 * np.pi * fft.fftfreq(a.points, d=a.spacing)

    def wavenumber_mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*[self.wavenumbers(i) for i in range(self.ndim)], indexing="ij"))

    def fractional_index(self, points: np.ndarray) -> np.ndarray:
        """Positions expressed in grid-index units, shape ``(n, ndim)``."""
        return (np.atleast_2d(points) - self.lowers) / self.spacings

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        return np.all((points >= self.lowers) & (points < self.uppers), axis=1)

    def wrap(self, points: np.ndarray) -> np.ndarray:
        return self.lowers + np.mod(np.atleast_2d(points) - self.lowers, self.lengths)


def node_mask(rho: np.ndarray, threshold: float = NODE_THRESHOLD) -> np.ndarray:
    """Points where the density is large enough for velocities to be defined."""
    peak = float(np.max(rho)) if np.size(rho) else 0.0
    if peak <= 0.0:
        return np.zeros(np.shape(rho), dtype=bool)
    return rho > threshold * peak


@dataclasses.dataclass(eq=False)
class ScalarField:
    """A real value per grid point, optionally undefined at some points."""

    grid: GridSpec
    values: np.ndarray
    defined: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.shape != self.grid.shape:
            raise ParameterError(f"field of shape {self.values.shape} does not match grid shape {self.grid.shape}")
        if self.defined is not None:
            self.defined = np.broadcast_to(np.asarray(self.defined, dtype=bool), self.grid.shape).copy()

    @property
    def mask(self) -> np.ndarray:
        return np.ones(self.grid.shape, dtype=bool) if self.defined is None else self.defined

    def integral(self, region: "Region | np.ndarray | None" = None) -> float:
        return integrate(self, region)

    def check_density(self, tolerance: float = 1e-6):
        """Reject negative or unnormalized densities."""
        if np.min(self.values) < -tolerance:
            raise ParameterError(f"density has negative values down to {np.min(self.values):.3g}")
        total = self.integral()
        if abs(total - 1.0) > tolerance:
            raise ParameterError(f"density integrates to {total:.9g}, not 1")


@dataclasses.dataclass(eq=False)
class VectorField:
    """A configuration-space vector per grid point, stored as ``(ndim, *grid.shape)``."""

    grid: GridSpec
    values: np.ndarray
    defined: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expected = (self.grid.ndim, *self.grid.shape)
        if self.values.shape != expected:
            raise ParameterError(f"vector field of shape {self.values.shape} does not match {expected}")
        if self.defined is None:
            self.defined = np.ones(self.grid.shape, dtype=bool)
        else:
            self.defined = np.broadcast_to(np.asarray(self.defined, dtype=bool), self.grid.shape).copy()

    def filled(self) -> np.ndarray:
        """Components with undefined points replaced by their nearest defined neighbour."""
        return fill_undefined(self.values, self.defined)


@dataclasses.dataclass(eq=False)
class WaveState:
    """Complex wavefunction sampled on a grid."""

    grid: GridSpec
    amplitudes: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != self.grid.shape:
            raise ParameterError(
                f"amplitudes of shape {self.amplitudes.shape} do not match grid shape {self.grid.shape}"
            )

    def density(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def norm(self) -> float:
        return float(np.sum(self.density()) * self.grid.cell_volume)

    def normalized(self) -> "WaveState":
        return WaveState(self.grid, self.amplitudes / np.sqrt(self.norm()), self.time)

    def validate(self, tolerance: float = 1e-9):
        norm = self.norm()
        if abs(norm - 1.0) > tolerance:
            raise ParameterError(f"wave state norm is {norm:.12g}, not 1")


@dataclasses.dataclass(eq=False)
class HydroState:
    """
    World density and stacked per-particle velocity fields.

    ``phase`` is the velocity potential θ (mod 2π, with m v = ħ∇θ) when it is known;
    the field dynamics carry it along.
    """

    rho: ScalarField
    velocity: VectorField
    time: float = 0.0
    phase: ScalarField | None = None

    @property
    def grid(self) -> GridSpec:
        return self.rho.grid

    def validate(self, tolerance: float = 1e-6):
        self.rho.check_density(tolerance)


@dataclasses.dataclass(eq=False)
class WorldEnsemble:
    """A finite collection of worlds, one configuration point and velocity each."""

    positions: np.ndarray
    velocities: np.ndarray
    params: PhysicalParams
    time: float = 0.0
    accelerations: np.ndarray | None = None
    diagnostics: dict = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=float))
        self.velocities = np.atleast_2d(np.asarray(self.velocities, dtype=float))
        if self.positions.shape != self.velocities.shape:
            raise ParameterError(
                f"positions {self.positions.shape} and velocities {self.velocities.shape} differ in shape"
            )
        if self.positions.shape[1] != self.params.config_dims:
            raise ParameterError(
                f"worlds have {self.positions.shape[1]} coordinates, "
                f"configuration space has {self.params.config_dims}"
            )

    @property
    def count(self) -> int:
        return self.positions.shape[0]

    def replace(self, **changes) -> "WorldEnsemble":
        return dataclasses.replace(self, **changes)


class PotentialKind(str, enum.Enum):
    FREE = "free"
    HARMONIC = "harmonic"
    DOUBLE_SLIT = "double_slit"
    INFINITE_WELL = "infinite_well"
    CUSTOM_GRID = "custom_grid"


@dataclasses.dataclass(frozen=True)
class DoubleSlitGeometry:
    """A wall across axis 0 with two openings placed symmetrically along axis 1."""

    wall_position: float = 0.0
    wall_thickness: float = 0.5
    slit_separation: float = 3.0
    slit_width: float = 1.0
    height: float = 1.0e3

    def __post_init__(self):
        if self.wall_thickness <= 0 or self.slit_width <= 0 or self.height <= 0:
            raise ParameterError("double slit thickness, width and height must be positive")
        if self.slit_separation <= self.slit_width:
            raise ParameterError("slit separation must exceed the slit width")


@dataclasses.dataclass(frozen=True, eq=False)
class PotentialSpec:
    """Time-independent classical potential V."""

    kind: PotentialKind = PotentialKind.FREE
    omega: tuple[float, ...] = ()
    slits: DoubleSlitGeometry | None = None
    length: float | None = None
    well_height: float = 1.0e6
    values: ScalarField | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", PotentialKind(self.kind))
        object.__setattr__(self, "omega", tuple(float(w) for w in self.omega))
        if self.kind is PotentialKind.HARMONIC and (not self.omega or any(w <= 0 for w in self.omega)):
            raise ParameterError(f"harmonic frequencies must be positive, got {self.omega}")
        if self.kind is PotentialKind.INFINITE_WELL and (self.length is None or self.length <= 0):
            raise ParameterError(f"well length must be positive, got {self.length}")
        if self.kind is PotentialKind.INFINITE_WELL and self.well_height < 1.0e6:
            raise ParameterError(f"well walls must be at least 1e6 high, got {self.well_height}")
        if self.kind is PotentialKind.DOUBLE_SLIT and self.slits is None:
            object.__setattr__(self, "slits", DoubleSlitGeometry())
        if self.kind is PotentialKind.CUSTOM_GRID and self.values is None:
            raise ParameterError("custom potentials need sampled values")

    @classmethod
    def free(cls) -> "PotentialSpec":
        return cls(PotentialKind.FREE)

    @classmethod
    def harmonic(cls, *omega: float) -> "PotentialSpec":
        return cls(PotentialKind.HARMONIC, omega=omega or (1.0,))

    @classmethod
    def double_slit(cls, geometry: DoubleSlitGeometry | None = None) -> "PotentialSpec":
        return cls(PotentialKind.DOUBLE_SLIT, slits=geometry or DoubleSlitGeometry())

    @classmethod
    def infinite_well(cls, length: float, height: float = 1.0e6) -> "PotentialSpec":
        return cls(PotentialKind.INFINITE_WELL, length=length, well_height=height)

    @classmethod
    def custom_grid(cls, field: ScalarField) -> "PotentialSpec":
        return cls(PotentialKind.CUSTOM_GRID, values=field)

    @property
    def translation_invariant(self) -> bool:
        return self.kind is PotentialKind.FREE

    def evaluate(self, grid: GridSpec, params: PhysicalParams | None = None) -> np.ndarray:
        """Sample V on the grid."""
        params = params or PhysicalParams.for_grid(grid)
        if self.kind is PotentialKind.FREE:
            return np.zeros(grid.shape)
        mesh = grid.mesh()
        if self.kind is PotentialKind.HARMONIC:
            omega = np.broadcast_to(np.asarray(self.omega), (grid.ndim,))
            masses = params.axis_masses()
            return sum(0.5 * masses[a] * omega[a] ** 2 * mesh[a] ** 2 for a in range(grid.ndim))
        if self.kind is PotentialKind.DOUBLE_SLIT:
            if grid.ndim < 2:
                raise ParameterError("the double slit needs at least two axes")
            s = self.slits
            in_wall = np.abs(mesh[0] - s.wall_position) < 0.5 * s.wall_thickness
            upper = np.abs(mesh[1] - 0.5 * s.slit_separation) < 0.5 * s.slit_width
            lower = np.abs(mesh[1] + 0.5 * s.slit_separation) < 0.5 * s.slit_width
            return np.where(in_wall & ~upper & ~lower, s.height, 0.0)
        if self.kind is PotentialKind.INFINITE_WELL:
            # Smooth walls at 0 and L along every axis, two cells wide
            inside = np.ones(grid.shape)
            for a in range(grid.ndim):
                width = 2.0 * grid.spacings[a]
                x = mesh[a]
                inside *= 0.5 * (np.tanh(x / width) - np.tanh((x - self.length) / width))
            return self.well_height * (1.0 - inside)
        if self.values.grid != grid:
            raise ParameterError("custom potential was sampled on a different grid")
        return np.asarray(self.values.values, dtype=float)


@dataclasses.dataclass(frozen=True)
class Region:
    """A predicate over configuration-space points, composable with ``&``, ``|`` and ``~``."""

    predicate: Callable[[tuple[np.ndarray, ...]], np.ndarray]

    def mask(self, grid: GridSpec) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.predicate(grid.mesh()), dtype=bool), grid.shape)

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        coords = tuple(points[:, a] for a in range(points.shape[1]))
        return np.broadcast_to(np.asarray(self.predicate(coords), dtype=bool), (points.shape[0],))

    def __and__(self, other: "Region") -> "Region":
        return Region(lambda c: np.logical_and(self.predicate(c), other.predicate(c)))

    def __or__(self, other: "Region") -> "Region":
        return Region(lambda c: np.logical_or(self.predicate(c), other.predicate(c)))

    def __invert__(self) -> "Region":
        return Region(lambda c: np.logical_not(self.predicate(c)))

    @classmethod
    def everything(cls) -> "Region":
        return cls(lambda c: np.ones(np.shape(c[0]), dtype=bool))

    @classmethod
    def box(cls, lower: Sequence[float], upper: Sequence[float]) -> "Region":
        """Half-open box ``lower <= x < upper`` per axis."""
        lower, upper = tuple(lower), tuple(upper)

        def inside(c):
            result = np.ones(np.shape(c[0]), dtype=bool)
            for x, lo, hi in zip(c, lower, upper):
                result &= (x >= lo) & (x < hi)
            return result

        return cls(inside)

    @classmethod
    def halfspace(cls, axis: int, threshold: float, above: bool = True) -> "Region":
        if above:
            return cls(lambda c: c[axis] >= threshold)
        return cls(lambda c: c[axis] < threshold)


def _array_axis(values: np.ndarray, grid: GridSpec, axis: int) -> int:
    return values.ndim - grid.ndim + axis


def _shifted(values: np.ndarray, offset: int, axis: int, periodic: bool, fill=0) -> np.ndarray:
    """Values at index ``i + offset`` along ``axis``."""
    if periodic:
        return np.roll(values, -offset, axis=axis)
    result = np.full_like(values, fill)
    n = values.shape[axis]
    src = [slice(None)] * values.ndim
    dst = [slice(None)] * values.ndim
    if offset >= 0:
        src[axis], dst[axis] = slice(offset, n), slice(0, n - offset)
    else:
        src[axis], dst[axis] = slice(0, n + offset), slice(-offset, n)
    result[tuple(dst)] = values[tuple(src)]
    return result


def central_difference(values: np.ndarray, grid: GridSpec, axis: int) -> np.ndarray:
    """Second-order first derivative along a grid axis (one-sided at box edges)."""
    arr_axis = _array_axis(values, grid, axis)
    h = grid.spacings[axis]
    if grid.periodic:
        return (np.roll(values, -1, axis=arr_axis) - np.roll(values, 1, axis=arr_axis)) / (2.0 * h)
    return np.gradient(values, h, axis=arr_axis, edge_order=2)


def second_difference(values: np.ndarray, grid: GridSpec, axis: int) -> np.ndarray:
    """Second-order second derivative along a grid axis (one-sided at box edges)."""
    arr_axis = _array_axis(values, grid, axis)
    h2 = grid.spacings[axis] ** 2
    if grid.periodic:
        return (np.roll(values, -1, axis=arr_axis) + np.roll(values, 1, axis=arr_axis) - 2.0 * values) / h2
    f = np.moveaxis(values, arr_axis, 0)
    out = np.empty_like(f)
    out[1:-1] = (f[2:] + f[:-2] - 2.0 * f[1:-1]) / h2
    out[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / h2
    out[-1] = (2.0 * f[-1] - 5.0 * f[-2] + 4.0 * f[-3] - f[-4]) / h2
    return np.moveaxis(out, 0, arr_axis)


def gradient(field: ScalarField) -> VectorField:
    """Central-difference gradient of a scalar field."""
    grid = field.grid
    values = np.stack([central_difference(field.values, grid, a) for a in range(grid.ndim)])
    return VectorField(grid, values)


def divergence(field: VectorField) -> ScalarField:
    grid = field.grid
    return ScalarField(grid, sum(central_difference(field.values[a], grid, a) for a in range(grid.ndim)))


def laplacian(field: ScalarField) -> ScalarField:
    """Second-order central Laplacian of a scalar field."""
    grid = field.grid
    return ScalarField(grid, sum(second_difference(field.values, grid, a) for a in range(grid.ndim)))


def integrate(field: ScalarField, region: Region | np.ndarray | None = None) -> float:
    """Riemann sum of the field over a region (the whole grid by default)."""
    values = field.values
    if region is None:
        total = np.sum(values)
    else:
        mask = region.mask(field.grid) if isinstance(region, Region) else np.asarray(region, dtype=bool)
        total = np.sum(values[mask])
    return float(np.real(total) * field.grid.cell_volume)


def spectral_derivative(values: np.ndarray, grid: GridSpec, axis: int, order: int = 1) -> np.ndarray:
    """Fourier derivative along a periodic grid axis."""
    arr_axis = _array_axis(values, grid, axis)
    k = grid.wavenumbers(axis)
    n = grid.shape[axis]
    if order % 2 == 1 and n % 2 == 0:
        k = k.copy()
        k[n // 2] = 0.0
    shape = [1] * values.ndim
    shape[arr_axis] = n
    transformed = fft.fft(values, axis=arr_axis, workers=worker_count())
    result = fft.ifft(transformed * ((1j * k) ** order).reshape(shape), axis=arr_axis, workers=worker_count())
    return result if np.iscomplexobj(values) else result.real


def smooth_derivative(values: np.ndarray, grid: GridSpec, axis: int, order: int = 1) -> np.ndarray:
    """Spectral derivative on periodic grids, central differences on box grids."""
    if grid.periodic:
        return spectral_derivative(values, grid, axis, order)
    if order == 1:
        return central_difference(values, grid, axis)
    if order == 2:
        return second_difference(values, grid, axis)
    raise ParameterError(f"derivative order {order} is not supported on box grids")


def smooth_gradient(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    return np.stack([smooth_derivative(values, grid, a) for a in range(grid.ndim)])


def angle_gradient(angle: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Gradient of an angle field that may carry 2π jumps, taken through ``e^{iφ}``."""
    phase = np.exp(1j * np.asarray(angle))
    return np.imag(np.conj(phase) * smooth_gradient(phase, grid))


def masked_derivative(values: np.ndarray, grid: GridSpec, axis: int, defined: np.ndarray) -> np.ndarray:
    """
    First derivative that only reads defined points.

    Central where both neighbours are defined, second-order one-sided where only
    one side is, zero where neither stencil fits.
    """
    arr_axis = _array_axis(values, grid, axis)
    h = grid.spacings[axis]
    periodic = grid.periodic

    def nb(arr, offset, ax):
        return _shifted(arr, offset, ax, periodic, fill=False if arr.dtype == bool else 0)

    d0 = np.asarray(defined, dtype=bool)
    dp1, dm1, dp2, dm2 = (nb(d0, k, axis) for k in (1, -1, 2, -2))
    fp1, fm1, fp2, fm2 = (nb(values, k, arr_axis) for k in (1, -1, 2, -2))

    central = (fp1 - fm1) / (2.0 * h)
    forward = (-3.0 * values + 4.0 * fp1 - fp2) / (2.0 * h)
    backward = (3.0 * values - 4.0 * fm1 + fm2) / (2.0 * h)

    use_central = d0 & dp1 & dm1
    use_forward = d0 & dp1 & dp2 & ~dm1
    use_backward = d0 & dm1 & dm2 & ~dp1
    return np.where(use_central, central, np.where(use_forward, forward, np.where(use_backward, backward, 0.0)))


def masked_gradient(values: np.ndarray, grid: GridSpec, defined: np.ndarray) -> np.ndarray:
    return np.stack([masked_derivative(values, grid, a, defined) for a in range(grid.ndim)])


def fill_undefined(values: np.ndarray, defined: np.ndarray) -> np.ndarray:
    """Replace undefined points by the value at their nearest defined point."""
    defined = np.asarray(defined, dtype=bool)
    if defined.all():
        return np.array(values, copy=True)
    if not defined.any():
        return np.zeros_like(values)
    indices = ndimage.distance_transform_edt(~defined, return_distances=False, return_indices=True)
    return np.asarray(values)[(Ellipsis, *indices)]


def interpolate(values: np.ndarray, grid: GridSpec, points: np.ndarray) -> np.ndarray:
    """
    Multilinear interpolation of grid values at arbitrary points.

    Periodic grids wrap; box grids clamp to the edge values. Leading component
    axes are interpolated independently and kept in the result.
    """
    coords = grid.fractional_index(points).T
    mode = "grid-wrap" if grid.periodic else "nearest"
    values = np.asarray(values)
    if values.ndim == grid.ndim:
        return ndimage.map_coordinates(values, coords, order=1, mode=mode)
    flat = values.reshape((-1, *grid.shape))
    result = np.stack([ndimage.map_coordinates(component, coords, order=1, mode=mode) for component in flat])
    return result.reshape((*values.shape[: values.ndim - grid.ndim], coords.shape[1]))


def shift_values(values: np.ndarray, grid: GridSpec, displacement: Sequence[float]) -> np.ndarray:
    """
    Return ``f(x - displacement)`` sampled on the grid.

    Periodic grids use Fourier interpolation (exact for band-limited fields),
    box grids use linear interpolation with zero fill.
    """
    displacement = np.asarray(displacement, dtype=float)
    if not np.any(displacement):
        return np.array(values, copy=True)
    values = np.asarray(values)
    axes = tuple(range(values.ndim - grid.ndim, values.ndim))
    if grid.periodic:
        phase = np.ones(grid.shape, dtype=complex)
        for a, k in enumerate(grid.wavenumber_mesh()):
            phase = phase * np.exp(-1j * k * displacement[a])
        workers = worker_count()
        shifted = fft.ifftn(fft.fftn(values, axes=axes, workers=workers) * phase, axes=axes, workers=workers)
        return shifted if np.iscomplexobj(values) else shifted.real
    offset = displacement / grid.spacings

    def _shift(component):
        if np.iscomplexobj(component):
            return _shift(component.real) + 1j * _shift(component.imag)
        return ndimage.shift(component, offset, order=1, mode="constant", cval=0.0)

    if values.ndim == grid.ndim:
        return _shift(values)
    flat = values.reshape((-1, *grid.shape))
    return np.stack([_shift(c) for c in flat]).reshape(values.shape)
