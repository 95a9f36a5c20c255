"""
Self-locating credences and Born-statistics checks for Newtonian Worlds.
"""
import dataclasses
import logging
from typing import Sequence

import numpy as np
from scipy import stats

from newtonian_worlds.core import GridSpec, HydroState, Region, WaveState, WorldEnsemble, integrate
from newtonian_worlds.exceptions import NoCompatibleWorldsError, ParameterError

logger = logging.getLogger(__name__)


def self_locating_credence(state: HydroState, region_a_and_s: Region, region_s: Region) -> float:
    """
    Credence that an agent with data S is in a world with property A.

    The ratio of the world density integrated over A∧S to the density integrated over S.
    """
    grid = state.grid
    s_mask = region_s.mask(grid)
    compatible = integrate(state.rho, s_mask)
    if not compatible > 0.0:
        raise NoCompatibleWorldsError("no compatible worlds: the conditioning region carries no density")
    return integrate(state.rho, region_a_and_s.mask(grid) & s_mask) / compatible


def world_count_credence(ensemble: WorldEnsemble, region_a_and_s: Region, region_s: Region) -> float:
    """The counting form: worlds with A and a copy of S over worlds with a copy of S."""
    in_s = region_s.contains(ensemble.positions)
    compatible = int(np.count_nonzero(in_s))
    if compatible == 0:
        raise NoCompatibleWorldsError("no compatible worlds: no world lies in the conditioning region")
    return int(np.count_nonzero(in_s & region_a_and_s.contains(ensemble.positions))) / compatible


@dataclasses.dataclass(eq=False)
class BornReport:
    """Per-region world frequencies against |Ψ|² masses."""

    frequencies: np.ndarray
    masses: np.ndarray
    count: int

    @property
    def total_variation(self) -> float:
        return 0.5 * float(np.sum(np.abs(self.frequencies - self.masses)))

    @property
    def sampling_scale(self) -> float:
        """Expected size of the total variation for an honest sample of this size."""
        return float(np.sum(np.sqrt(self.masses * (1.0 - self.masses)))) / np.sqrt(max(self.count, 1))

    def as_dict(self) -> dict:
        return {
            "frequencies": self.frequencies.tolist(),
            "masses": self.masses.tolist(),
            "count": self.count,
            "total_variation": self.total_variation,
        }


def born_divergence(ensemble: WorldEnsemble, wave: WaveState, partition: Sequence[Region]) -> BornReport:
    """
    Compare the fraction of worlds in each region with its |Ψ|² mass.

    The partition must cover every grid point exactly once.
    """
    grid = wave.grid
    if not partition:
        raise ParameterError("the partition needs at least one region")
    masks = np.stack([region.mask(grid) for region in partition])
    coverage = masks.sum(axis=0)
    if np.any(coverage != 1):
        raise ParameterError(
            f"regions must be disjoint and cover the grid; {int(np.count_nonzero(coverage != 1))} points are not"
        )
    density = wave.density() * grid.cell_volume
    masses = np.array([float(np.sum(density[mask])) for mask in masks])
    masses = masses / np.sum(masses)

    members = np.stack([region.contains(ensemble.positions) for region in partition])
    frequencies = members.sum(axis=1) / ensemble.count
    report = BornReport(frequencies, masses, ensemble.count)
    if ensemble.count == 1:
        logger.warning("Born statistics from a single world: total variation %.3g", report.total_variation)
    return report


def slab_partition(grid: GridSpec, axis: int, count: int) -> list[Region]:
    """
    ``count`` slabs of whole grid cells along ``axis``.

    Slab edges sit on cell boundaries (half a spacing below grid points) so grid
    masks and world positions fall into the same slab; periodic grids wrap the
    upper half cell into the first slab.
    """
    points = grid.shape[axis]
    if count < 1 or points % count:
        raise ParameterError(f"{count} slabs do not divide {points} grid points")
    h = grid.spacings[axis]
    start = grid.lowers[axis] - 0.5 * h
    width = points // count * h
    length = grid.lengths[axis]
    periodic = grid.periodic

    def slab_of(coords):
        offset = coords[axis] - start
        offset = np.mod(offset, length) if periodic else np.clip(offset, 0.0, np.nextafter(length, 0.0))
        return np.minimum((offset // width).astype(int), count - 1)

    return [Region(lambda c, k=k: slab_of(c) == k) for k in range(count)]


def ks_distance(positions: np.ndarray, wave: WaveState, axis: int = 0) -> float:
    """Kolmogorov–Smirnov distance between the worlds' marginal along ``axis`` and that of |Ψ|²."""
    grid = wave.grid
    density = wave.density()
    others = tuple(a for a in range(grid.ndim) if a != axis)
    marginal = density.sum(axis=others) if others else density
    h = grid.spacings[axis]
    edges = grid.lowers[axis] - 0.5 * h + np.arange(grid.shape[axis] + 1) * h
    cdf = np.concatenate([[0.0], np.cumsum(marginal)])
    cdf /= cdf[-1]
    samples = np.asarray(positions, dtype=float)[:, axis]
    if grid.periodic:
        samples = np.where(samples >= edges[-1], samples - grid.lengths[axis], samples)
    result = stats.kstest(samples, lambda x: np.interp(x, edges, cdf, left=0.0, right=1.0))
    return float(result.statistic)
