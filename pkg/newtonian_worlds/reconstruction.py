"""
Quantization checks and wavefunction reconstruction for Newtonian Worlds.

Phases are integrated link by link with the end-corrected trapezoid rule
``h(f_i + f_j)/2 + h²(f'_i − f'_j)/12``, so loop sums of exact gradients close
to high order and a single global phase per support component stays free.
"""
import dataclasses
import logging
from typing import Iterator, Sequence

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse import csgraph

from newtonian_worlds.core import (
    GridSpec,
    HydroState,
    PhysicalParams,
    PotentialSpec,
    ScalarField,
    WaveState,
    fill_undefined,
    masked_derivative,
    node_mask,
    resolve_params,
)
from newtonian_worlds.exceptions import AmbiguityError, NodeError, ParameterError, QuantizationViolation
from newtonian_worlds.hydrodynamics import phase_time_derivative
from newtonian_worlds.oracle import apply_hamiltonian

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-3


@dataclasses.dataclass
class LoopCirculation:
    """Circulation of the momentum field around one closed loop."""

    description: str
    circulation: float
    winding: int
    residual: float
    determinate: bool = True


@dataclasses.dataclass(eq=False)
class LoopFamily:
    """Circulations of many loops of one shape, kept as arrays."""

    description: str
    circulation: np.ndarray
    determinate: np.ndarray
    origins: np.ndarray
    planck: float

    @property
    def windings(self) -> np.ndarray:
        return np.rint(self.circulation / self.planck).astype(int)

    @property
    def residuals(self) -> np.ndarray:
        residual = np.abs(self.circulation - self.windings * self.planck)
        return np.where(self.determinate, residual, np.nan)

    def loops(self) -> Iterator[LoopCirculation]:
        windings, residuals = self.windings, self.residuals
        for i, origin in enumerate(self.origins):
            yield LoopCirculation(
                f"{self.description} at {tuple(int(o) for o in origin)}",
                float(self.circulation[i]),
                int(windings[i]),
                float(residuals[i]),
                bool(self.determinate[i]),
            )


@dataclasses.dataclass(eq=False)
class QuantizationReport:
    """Loop circulations against multiples of Planck's constant ``h = 2πħ``."""

    families: list[LoopFamily]
    tolerance: float
    planck: float

    @property
    def satisfied(self) -> bool:
        return all(
            bool(np.all(family.residuals[family.determinate] < self.tolerance)) for family in self.families
        )

    @property
    def loops(self) -> list[LoopCirculation]:
        return [loop for family in self.families for loop in family.loops()]

    @property
    def max_residual(self) -> float:
        values = [np.nanmax(f.residuals) for f in self.families if np.any(f.determinate)]
        return float(max(values)) if values else 0.0

    @property
    def indeterminate(self) -> int:
        return int(sum(np.count_nonzero(~f.determinate) for f in self.families))

    def violations(self) -> list[LoopCirculation]:
        found = []
        for family in self.families:
            bad = family.determinate & (np.nan_to_num(family.residuals) >= self.tolerance)
            if np.any(bad):
                found.extend(loop for loop, flag in zip(family.loops(), bad) if flag)
        return found

    def as_dict(self) -> dict:
        return {
            "satisfied": self.satisfied,
            "tolerance": self.tolerance,
            "planck": self.planck,
            "max_residual": self.max_residual,
            "indeterminate": self.indeterminate,
            "loop_count": int(sum(f.circulation.size for f in self.families)),
            "windings": sorted({int(n) for f in self.families for n in f.windings[f.determinate]}),
        }


@dataclasses.dataclass(frozen=True, eq=False)
class ClosedLoop:
    """A closed path of face-adjacent grid points, given by integer indices."""

    indices: np.ndarray
    description: str = "loop"

    def __post_init__(self):
        object.__setattr__(self, "indices", np.atleast_2d(np.asarray(self.indices, dtype=int)))


def rectangle_loop(
    grid: GridSpec,
    lower: Sequence[float],
    upper: Sequence[float],
    axes=(0, 1),
    at: Sequence[float] | None = None,
) -> ClosedLoop:
    """
    Counter-clockwise rectangle in the plane of ``axes`` between the in-plane corners ``lower`` and ``upper``.

    Corners snap to the nearest grid points; the other axes sit at the matching
    coordinates of ``at`` (the origin by default).
    """
    a, b = axes
    base = np.zeros(grid.ndim) if at is None else np.asarray(at, dtype=float)
    if base.shape != (grid.ndim,):
        raise ParameterError(f"'at' needs {grid.ndim} coordinates, got {base.size}")
    corners = []
    for corner in (lower, upper):
        point = base.copy()
        point[[a, b]] = corner
        corners.append(np.rint(grid.fractional_index(point)[0]).astype(int))
    lo, hi = corners
    shape = np.array(grid.shape)
    if np.any(lo < 0) or np.any(hi >= shape):
        raise ParameterError("rectangle corners must lie on the grid")
    if hi[a] <= lo[a] or hi[b] <= lo[b]:
        raise ParameterError("rectangle upper corner must lie above the lower corner in both axes")
    path = []
    for i in range(lo[a], hi[a]):
        path.append((i, lo[b]))
    for j in range(lo[b], hi[b]):
        path.append((hi[a], j))
    for i in range(hi[a], lo[a], -1):
        path.append((i, hi[b]))
    for j in range(hi[b], lo[b], -1):
        path.append((lo[a], j))
    points = np.tile(lo, (len(path), 1))
    points[:, a] = [p[0] for p in path]
    points[:, b] = [p[1] for p in path]
    corners = f"{tuple(np.asarray(lower, float))}..{tuple(np.asarray(upper, float))}"
    return ClosedLoop(points, f"rectangle {corners} in axes {tuple(axes)}")


def _neighbour(values: np.ndarray, axis: int, periodic: bool, fill) -> np.ndarray:
    if periodic:
        return np.roll(values, -1, axis=axis)
    result = np.full_like(values, fill)
    src = [slice(None)] * values.ndim
    dst = [slice(None)] * values.ndim
    src[axis], dst[axis] = slice(1, None), slice(0, -1)
    result[tuple(dst)] = values[tuple(src)]
    return result


def link_integrals(momentum: np.ndarray, grid: GridSpec, defined: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Line integrals of each component along the forward link from every grid point.

    Returns ``(integrals, valid)`` of shape ``(ndim, *grid.shape)``; a link is valid
    when both of its ends are defined.
    """
    integrals = np.zeros((grid.ndim, *grid.shape))
    valid = np.zeros((grid.ndim, *grid.shape), dtype=bool)
    for a in range(grid.ndim):
        h = grid.spacings[a]
        f = np.where(defined, momentum[a], 0.0)
        df = masked_derivative(f, grid, a, defined)
        f1 = _neighbour(f, a, grid.periodic, 0.0)
        df1 = _neighbour(df, a, grid.periodic, 0.0)
        integrals[a] = 0.5 * h * (f + f1) + h**2 / 12.0 * (df - df1)
        valid[a] = defined & _neighbour(defined, a, grid.periodic, False)
    return integrals, valid


def _plaquettes(integrals, valid, grid: GridSpec, planck: float) -> list[LoopFamily]:
    families = []
    for a in range(grid.ndim):
        for b in range(a + 1, grid.ndim):
            la, lb = integrals[a], integrals[b]
            circulation = la + _neighbour(lb, a, grid.periodic, 0.0) - _neighbour(la, b, grid.periodic, 0.0) - lb
            ok = (
                valid[a]
                & valid[b]
                & _neighbour(valid[b], a, grid.periodic, False)
                & _neighbour(valid[a], b, grid.periodic, False)
            )
            keep = np.ones(grid.shape, dtype=bool)
            if not grid.periodic:
                edge = [slice(None)] * grid.ndim
                edge[a] = -1
                keep[tuple(edge)] = False
                edge = [slice(None)] * grid.ndim
                edge[b] = -1
                keep[tuple(edge)] = False
            origins = np.argwhere(keep)
            families.append(
                LoopFamily(f"plaquette in axes ({a}, {b})", circulation[keep], ok[keep], origins, planck)
            )
    return families


def _cycles(integrals, valid, grid: GridSpec, planck: float) -> list[LoopFamily]:
    families = []
    for a in range(grid.ndim):
        circulation = integrals[a].sum(axis=a)
        ok = valid[a].all(axis=a)
        origins = np.argwhere(np.ones(circulation.shape, dtype=bool))
        origins = np.insert(origins, a, 0, axis=1)
        families.append(LoopFamily(f"cycle along axis {a}", circulation.ravel(), ok.ravel(), origins, planck))
    return families


def _explicit(loop: ClosedLoop, integrals, valid, grid: GridSpec, planck: float) -> LoopFamily:
    points = loop.indices
    shape = np.array(grid.shape)
    total = 0.0
    ok = True
    for p, q in zip(points, np.roll(points, -1, axis=0)):
        step = q - p
        if grid.periodic:
            step = np.where(step > 1, step - shape, np.where(step < -1, step + shape, step))
        if np.count_nonzero(step) != 1 or np.abs(step).sum() != 1:
            raise ParameterError(f"{loop.description}: points {tuple(p)} and {tuple(q)} are not face neighbours")
        axis = int(np.flatnonzero(step)[0])
        start = p if step[axis] > 0 else q
        sign = 1.0 if step[axis] > 0 else -1.0
        total += sign * integrals[axis][tuple(start)]
        ok = ok and bool(valid[axis][tuple(start)])
    return LoopFamily(loop.description, np.array([total]), np.array([ok]), points[:1], planck)


def circulation_report(
    momentum: np.ndarray,
    grid: GridSpec,
    defined: np.ndarray,
    hbar: float,
    loops: Sequence[ClosedLoop] | str = "auto",
    tolerance: float | None = None,
) -> QuantizationReport:
    """Quantization report for any momentum-like field (action per unit length)."""
    planck = 2.0 * np.pi * hbar
    tolerance = DEFAULT_TOLERANCE * planck if tolerance is None else tolerance
    integrals, valid = link_integrals(momentum, grid, defined)
    if isinstance(loops, str):
        if loops != "auto":
            raise ParameterError(f"loops must be 'auto' or a list of closed loops, got '{loops}'")
        families = _plaquettes(integrals, valid, grid, planck)
        if grid.periodic:
            families += _cycles(integrals, valid, grid, planck)
    else:
        families = [_explicit(loop, integrals, valid, grid, planck) for loop in loops]
    report = QuantizationReport(families, tolerance, planck)
    if report.indeterminate:
        logger.debug("%d loops pass through node points and are indeterminate", report.indeterminate)
    return report


def check_quantization(
    state: HydroState,
    params: PhysicalParams | None = None,
    loops: Sequence[ClosedLoop] | str = "auto",
    tolerance: float | None = None,
) -> QuantizationReport:
    """Compare ``∮ Σ m_k v_k · dl_k`` around each loop with the nearest multiple of h."""
    grid = state.grid
    params = resolve_params(grid, params)
    masses = params.axis_masses()[(slice(None),) + (None,) * grid.ndim]
    momentum = masses * state.velocity.values
    return circulation_report(momentum, grid, state.velocity.defined, params.hbar, loops, tolerance)


@dataclasses.dataclass(eq=False)
class SupportComponent:
    mask: np.ndarray
    anchor: tuple[int, ...]

    @property
    def size(self) -> int:
        return int(np.count_nonzero(self.mask))


@dataclasses.dataclass(eq=False)
class ReconstructionResult:
    """A wavefunction compatible with (ρ, v), its phase and the support components it was built on."""

    wave: WaveState
    theta: ScalarField
    components: list[SupportComponent]
    report: QuantizationReport

    @property
    def ambiguous(self) -> bool:
        return len(self.components) > 1

    @property
    def free_phase_pairs(self) -> list[tuple[int, int]]:
        """Component pairs whose relative phase is not fixed by (ρ, v)."""
        n = len(self.components)
        return [(i, j) for i in range(n) for j in range(i + 1, n)]


def support_components(defined: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Label face-connected components of the support, joined across periodic faces."""
    structure = ndimage.generate_binary_structure(grid.ndim, 1)
    labels, count = ndimage.label(defined, structure=structure)
    if not grid.periodic or count < 2:
        return labels
    rows, cols = [], []
    for a in range(grid.ndim):
        first = np.take(labels, [0], axis=a)
        last = np.take(labels, [-1], axis=a)
        touching = (first > 0) & (last > 0)
        rows.extend(first[touching])
        cols.extend(last[touching])
    graph = sparse.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(count + 1, count + 1))
    _, merged = csgraph.connected_components(graph, directed=False)
    # label 0 (no support) must stay 0; renumber the rest densely from 1
    _, dense = np.unique(merged[1:], return_inverse=True)
    mapping = np.concatenate([[0], dense + 1])
    return mapping[labels]


def _link_graph(valid: np.ndarray, grid: GridSpec) -> sparse.csr_matrix:
    flat = np.arange(grid.size).reshape(grid.shape)
    rows, cols = [], []
    for a in range(grid.ndim):
        neighbour = _neighbour(flat, a, grid.periodic, -1)
        rows.append(flat[valid[a]])
        cols.append(neighbour[valid[a]])
    rows, cols = np.concatenate(rows), np.concatenate(cols)
    return sparse.coo_matrix((np.ones(rows.size), (rows, cols)), shape=(grid.size, grid.size)).tocsr()


def _integrate_tree(increments, grid: GridSpec, graph, anchor: int, start: float, theta: np.ndarray):
    order, predecessors = csgraph.breadth_first_order(graph, anchor, directed=False, return_predecessors=True)
    shape = np.array(grid.shape)
    nodes = order[1:]
    parents = predecessors[nodes]
    node_index = np.stack(np.unravel_index(nodes, grid.shape), axis=1)
    parent_index = np.stack(np.unravel_index(parents, grid.shape), axis=1)
    step = node_index - parent_index
    step = np.where(step > 1, step - shape, np.where(step < -1, step + shape, step))
    axis = np.argmax(np.abs(step), axis=1)
    forward = step[np.arange(nodes.size), axis] > 0
    from_parent = increments[(axis, *parent_index.T)]
    from_node = increments[(axis, *node_index.T)]
    delta = np.where(forward, from_parent, -from_node)

    flat = theta.reshape(-1)
    flat[anchor] = start
    for node, parent, d in zip(nodes, parents, delta):
        flat[node] = flat[parent] + d


def reconstruct_wavefunction(
    state: HydroState,
    params: PhysicalParams | None = None,
    gauge: float | Sequence[float] = 0.0,
    anchor: Sequence[int] | None = None,
    tolerance: float | None = None,
) -> ReconstructionResult:
    """
    Build ``Ψ = √ρ e^{iθ}`` by integrating ``(m/ħ)v`` along a spanning tree of each support component.

    ``gauge`` sets the phase at each component's anchor (its density maximum unless
    ``anchor`` is given for a single-component state).
    """
    grid = state.grid
    params = resolve_params(grid, params)
    report = check_quantization(state, params, "auto", tolerance)
    violations = report.violations()
    if violations:
        raise QuantizationViolation(violations[0])

    rho = state.rho.values
    defined = state.velocity.defined & node_mask(rho)
    labels = support_components(defined, grid)
    count = int(labels.max())
    if count == 0:
        raise NodeError("the density has no support above the node threshold")
    phases = np.broadcast_to(np.asarray(gauge, dtype=float), (count,)) if np.ndim(gauge) == 0 else np.asarray(gauge)
    if phases.shape != (count,):
        raise ParameterError(f"{count} support components need {count} gauge phases, got {len(phases)}")

    masses = params.axis_masses()[(slice(None),) + (None,) * grid.ndim]
    integrals, valid = link_integrals(masses * state.velocity.values / params.hbar, grid, defined)
    graph = _link_graph(valid, grid)
    theta = np.zeros(grid.shape)
    components = []
    for label in range(1, count + 1):
        mask = labels == label
        if anchor is not None and count == 1:
            start = tuple(int(i) for i in anchor)
            if not mask[start]:
                raise NodeError(f"anchor {start} lies outside the density support")
        else:
            start = np.unravel_index(int(np.argmax(np.where(mask, rho, -np.inf))), grid.shape)
            start = tuple(int(i) for i in start)
        _integrate_tree(integrals, grid, graph, int(np.ravel_multi_index(start, grid.shape)), phases[label - 1], theta)
        components.append(SupportComponent(mask, start))
    if count > 1:
        logger.info("density support has %d components; their relative phases are free", count)

    theta = fill_undefined(theta, defined)
    wave = WaveState(grid, np.sqrt(np.clip(rho, 0.0, None)) * np.exp(1j * theta), state.time)
    return ReconstructionResult(wave, ScalarField(grid, theta, defined), components, report)


def fidelity(a: WaveState, b: WaveState) -> float:
    """``|⟨a|b⟩|`` for normalized states, i.e. the overlap after the best global phase."""
    overlap = np.sum(np.conj(a.amplitudes) * b.amplitudes) * a.grid.cell_volume
    return float(np.abs(overlap) / np.sqrt(a.norm() * b.norm()))


def fix_phase_history(
    states: Sequence[HydroState], V: PotentialSpec, params: PhysicalParams | None = None, gauge: float = 0.0
) -> list[WaveState]:
    """
    Wavefunctions for a history of (ρ, v) whose global phase obeys the phase equation.

    The anchor point is fixed at the first state's density maximum and its phase is
    advanced by trapezoidal integration of ∂θ/∂t there.
    """
    if not states:
        return []
    grid = states[0].grid
    params = resolve_params(grid, params)
    waves = []
    anchor = None
    phase = float(gauge)
    previous = None
    for state in states:
        result = reconstruct_wavefunction(state, params, 0.0, anchor)
        if result.ambiguous:
            raise AmbiguityError(
                f"state at t={state.time:g} has {len(result.components)} support components; "
                "their relative phases over time are not determined"
            )
        anchor = anchor or result.components[0].anchor
        rate = phase_time_derivative(state, result.theta, V, params).values[anchor]
        if previous is not None:
            previous_time, previous_rate = previous
            phase += 0.5 * (state.time - previous_time) * (previous_rate + rate)
        previous = (state.time, rate)
        waves.append(WaveState(grid, result.wave.amplitudes * np.exp(1j * phase), state.time))
    return waves


def schrodinger_residual(history: Sequence[WaveState], V: PotentialSpec, params: PhysicalParams | None = None) -> float:
    """Largest ``‖iħ∂tΨ − HΨ‖/‖HΨ‖`` over the interior of a uniformly spaced history."""
    if len(history) < 3:
        raise ParameterError("the Schrödinger residual needs at least three states")
    grid = history[0].grid
    params = resolve_params(grid, params)
    worst = 0.0
    for before, state, after in zip(history, history[1:], history[2:]):
        dt = after.time - before.time
        derivative = 1j * params.hbar * (after.amplitudes - before.amplitudes) / dt
        h_psi = apply_hamiltonian(state, V, params)
        scale = np.linalg.norm(h_psi)
        worst = max(worst, float(np.linalg.norm(derivative - h_psi) / scale))
    return worst
