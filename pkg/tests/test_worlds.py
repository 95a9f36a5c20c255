from unittest import TestCase

import numpy as np
from numpy import testing
from scipy import stats

from newtonian_worlds.core import Boundary, GridSpec, PhysicalParams, PotentialSpec, Region, WaveState, WorldEnsemble
from newtonian_worlds.exceptions import ParameterError, WorldCountError
from newtonian_worlds.fixtures import gaussian_packet, grid_wavenumber, harmonic_ground, plane_wave, spread_width
from newtonian_worlds.hydrodynamics import madelung_decompose
from newtonian_worlds.oracle import evolve_schrodinger
from newtonian_worlds.probability import (
    born_divergence,
    ks_distance,
    self_locating_credence,
    slab_partition,
    world_count_credence,
)
from newtonian_worlds.scenarios import build_scenario
from newtonian_worlds.worlds import (
    DensityEstimatorSpec,
    bohmian_pathlines,
    deposit,
    estimate_density,
    place_in_grid,
    sample_worlds,
    step_worlds,
    world_accelerations,
)


def iqr(values: np.ndarray) -> float:
    upper, lower = np.percentile(values, [75, 25])
    return float(upper - lower)


class SampleWorldsTest(TestCase):
    def setUp(self):
        self.grid = GridSpec.uniform(-10.0, 10.0, 256)

    def test_sample_moments(self):
        """
        Test that sampled worlds reproduce the mean and variance of |Ψ|².
        """
        count = 100_000
        ensemble = sample_worlds(gaussian_packet(self.grid, 1.5, 1.0), count, seed=3)
        self.assertEqual(ensemble.positions.shape, (count, 1))
        self.assertLess(abs(np.mean(ensemble.positions) - 1.5), 4.0 / np.sqrt(count))
        self.assertLess(abs(np.var(ensemble.positions) - 1.0), 0.05)

    def test_plane_wave_velocities(self):
        """
        Test that every world of a plane wave moves at hbar k / m.
        """
        grid = GridSpec.uniform(0.0, 10.0, 64)
        k = grid_wavenumber(grid, 0, 2)
        ensemble = sample_worlds(plane_wave(grid, k), 500, seed=0)
        testing.assert_allclose(ensemble.velocities, k, atol=1e-10)

    def test_fixed_seed_is_deterministic(self):
        """
        Test that the same seed draws a bit-identical ensemble.
        """
        state = gaussian_packet(self.grid, 0.0, 1.0, 1.0)
        a = sample_worlds(state, 1000, seed=11)
        b = sample_worlds(state, 1000, seed=11)
        c = sample_worlds(state, 1000, seed=12)
        testing.assert_array_equal(a.positions, b.positions)
        testing.assert_array_equal(a.velocities, b.velocities)
        self.assertFalse(np.array_equal(a.positions, c.positions))

    def test_worlds_stay_on_the_grid(self):
        """
        Test that jittered worlds never leave the grid.
        """
        ensemble = sample_worlds(gaussian_packet(self.grid, 0.0, 3.0), 5000, seed=1)
        self.assertTrue(np.all(self.grid.contains(ensemble.positions)))

    def test_needs_two_worlds(self):
        """
        Test that a single world is not an ensemble.
        """
        with self.assertRaises(WorldCountError):
            sample_worlds(gaussian_packet(self.grid), 1, seed=0)


class DensityEstimatorSpecTest(TestCase):
    def test_rejects_invalid_settings(self):
        """
        Test that non-positive bandwidths and coarse histograms are rejected.
        """
        with self.assertRaises(ParameterError):
            DensityEstimatorSpec.gaussian_kernel(-1.0)
        with self.assertRaises(ParameterError):
            DensityEstimatorSpec.histogram(4)
        with self.assertRaises(ValueError):
            DensityEstimatorSpec("nearest")

    def test_auto_bandwidth_scaling(self):
        """
        Test that the automatic bandwidth scales the sample deviation by n^(-1/(D+4)).
        """
        grid = GridSpec.uniform(-10.0, 10.0, 64)
        positions = np.random.default_rng(0).normal(size=(500, 1))
        widths = DensityEstimatorSpec.gaussian_kernel().kernel_widths(positions, grid)
        expected = np.std(positions) * (4.0 / 3.0) ** 0.2 * 500**-0.2
        testing.assert_allclose(widths, [expected])

    def test_explicit_bandwidth_per_axis(self):
        """
        Test that explicit bandwidths are broadcast to every axis.
        """
        grid = GridSpec.uniform(-4.0, 4.0, 16, ndim=2)
        widths = DensityEstimatorSpec.gaussian_kernel(0.5).kernel_widths(np.zeros((3, 2)), grid)
        testing.assert_array_equal(widths, [0.5, 0.5])


class EstimateDensityTest(TestCase):
    def test_kernel_estimate_converges(self):
        """
        Test that a kernel estimate from many samples is close to the sampled density.
        """
        grid = GridSpec.uniform(-8.0, 8.0, 256)
        state = gaussian_packet(grid, 0.0, 1.0)
        ensemble = sample_worlds(state, 100_000, seed=5)
        rho = estimate_density(ensemble, DensityEstimatorSpec.gaussian_kernel(), grid)
        self.assertAlmostEqual(rho.integral(), 1.0, places=12)
        self.assertLess(np.sum(np.abs(rho.values - state.density())) * grid.cell_volume, 0.02)

    def test_histogram_of_coincident_worlds(self):
        """
        Test that worlds sharing one point fill a single histogram bin with the full mass.
        """
        grid = GridSpec.uniform(-4.0, 4.0, 16)
        ensemble = WorldEnsemble(np.zeros((50, 1)), np.zeros((50, 1)), PhysicalParams())
        rho = estimate_density(ensemble, DensityEstimatorSpec.histogram(), grid)
        self.assertEqual(np.count_nonzero(rho.values), 1)
        self.assertAlmostEqual(rho.values[8], 1.0 / grid.cell_volume)

    def test_needs_two_worlds(self):
        """
        Test that a density cannot be read off a single world.
        """
        grid = GridSpec.uniform(-4.0, 4.0, 16)
        ensemble = WorldEnsemble(np.zeros((1, 1)), np.zeros((1, 1)), PhysicalParams())
        with self.assertRaises(WorldCountError):
            estimate_density(ensemble, DensityEstimatorSpec.gaussian_kernel(), grid)


class DepositTest(TestCase):
    def test_cloud_in_cell_splits_between_neighbours(self):
        """
        Test that a world halfway between grid points is shared equally.
        """
        grid = GridSpec.uniform(0.0, 8.0, 8)
        counts = deposit(np.array([[2.5]]), grid)
        testing.assert_allclose(counts[[2, 3]], [0.5, 0.5])
        self.assertAlmostEqual(counts.sum(), 1.0)

    def test_weights_scale_counts(self):
        """
        Test that per-world weights multiply the deposited counts.
        """
        grid = GridSpec.uniform(0.0, 8.0, 8, ndim=2)
        counts = deposit(np.array([[1.0, 1.0], [7.5, 7.5]]), grid, weights=np.array([2.0, 3.0]))
        self.assertAlmostEqual(counts.sum(), 5.0)
        self.assertAlmostEqual(counts[1, 1], 2.0)


class PlaceInGridTest(TestCase):
    def test_box_walls_reflect(self):
        """
        Test that a world past a box wall is mirrored back and its velocity flipped.
        """
        grid = GridSpec.uniform(0.0, 10.0, 32, boundary=Boundary.BOX)
        positions, velocities, events = place_in_grid(grid, np.array([[11.0], [5.0]]), np.array([[2.0], [2.0]]))
        testing.assert_allclose(positions[:, 0], [9.0, 5.0])
        testing.assert_array_equal(velocities[:, 0], [-2.0, 2.0])
        self.assertEqual(events, 1)

    def test_periodic_wraps(self):
        """
        Test that a world past a periodic edge reappears on the other side.
        """
        grid = GridSpec.uniform(0.0, 10.0, 32)
        positions, _, events = place_in_grid(grid, np.array([[11.0], [-1.0]]))
        testing.assert_allclose(positions[:, 0], [1.0, 9.0])
        self.assertEqual(events, 2)


class WorldAccelerationsTest(TestCase):
    def test_two_worlds_repel(self):
        """
        Test that the inter-world force pushes two close worlds apart.
        """
        grid = GridSpec.uniform(-4.0, 4.0, 128)
        positions = np.array([[-0.25], [0.25]])
        est = DensityEstimatorSpec.gaussian_kernel(0.5)
        accelerations = world_accelerations(positions, PhysicalParams(), PotentialSpec.free(), est, grid)
        self.assertLess(accelerations[0, 0], 0.0)
        self.assertGreater(accelerations[1, 0], 0.0)
        self.assertAlmostEqual(accelerations[0, 0], -accelerations[1, 0], places=8)

    def test_mirror_symmetric_ensemble(self):
        """
        Test that mirrored worlds feel mirrored forces.
        """
        grid = GridSpec.uniform(-8.0, 8.0, 128)
        half = np.random.default_rng(4).normal(size=(200, 1))
        positions = np.concatenate([half, -half])
        est = DensityEstimatorSpec.gaussian_kernel(0.4)
        accelerations = world_accelerations(positions, PhysicalParams(), PotentialSpec.free(), est, grid)
        testing.assert_allclose(accelerations[:200], -accelerations[200:], atol=1e-8)


    def test_ground_state_is_force_free(self):
        """
        Test that worlds spread like the harmonic ground state feel no net force.
        """
        grid = GridSpec.uniform(-8.0, 8.0, 1024)
        count = 10_000
        # worlds on the quantiles of |Ψ|², which has variance 1/2
        positions = np.sqrt(0.5) * stats.norm.ppf((np.arange(count) + 0.5) / count)[:, None]
        est = DensityEstimatorSpec.gaussian_kernel(0.05)
        accelerations = world_accelerations(positions, PhysicalParams(), PotentialSpec.harmonic(), est, grid)
        core = np.abs(positions[:, 0]) < 2.0
        self.assertGreater(np.mean(core), 0.99)
        self.assertLess(np.max(np.abs(accelerations[core])), 0.05)

class StepWorldsTest(TestCase):
    def test_free_ensemble_spreads(self):
        """
        Test that the inter-world force spreads a free Gaussian ensemble like the wave packet.
        """
        grid = GridSpec.uniform(-20.0, 20.0, 256)
        ensemble = sample_worlds(gaussian_packet(grid, 0.0, 1.0), 10_000, seed=9)
        initial = iqr(ensemble.positions[:, 0])
        est = DensityEstimatorSpec.gaussian_kernel(0.3)
        for _ in range(100):
            ensemble = step_worlds(ensemble, PotentialSpec.free(), est, grid, 0.01)
        final = iqr(ensemble.positions[:, 0])
        expected = initial * spread_width(1.0, 1.0)
        self.assertAlmostEqual(ensemble.time, 1.0)
        self.assertGreater(final, 1.05 * initial)
        self.assertLess(abs(final - expected) / expected, 0.1)

    def test_free_ensemble_tracks_born_density(self):
        """
        Test that a free ensemble stays as close to |Ψ|² as its initial sample.
        """
        s = build_scenario("free_gaussian")
        ensemble = sample_worlds(s.wave, 10_000, seed=7, params=s.params)
        initial = ks_distance(ensemble.positions, s.wave)
        est = DensityEstimatorSpec.gaussian_kernel()
        for _ in range(s.steps):
            ensemble = step_worlds(ensemble, s.potential, est, s.grid, s.dt)
        reference = evolve_schrodinger(s.wave, s.potential, s.dt, s.steps, s.params)
        self.assertLess(ks_distance(ensemble.positions, reference), max(0.03, 3.0 * initial))

    def test_coherent_ensemble_tracks_born_density(self):
        """
        Test that an oscillating ensemble stays as close to |Ψ|² as its initial sample.
        """
        s = build_scenario("harmonic_coherent")
        ensemble = sample_worlds(s.wave, 10_000, seed=7, params=s.params)
        initial = ks_distance(ensemble.positions, s.wave)
        est = DensityEstimatorSpec.gaussian_kernel()
        for _ in range(s.steps):
            ensemble = step_worlds(ensemble, s.potential, est, s.grid, s.dt)
        reference = evolve_schrodinger(s.wave, s.potential, s.dt, s.steps, s.params)
        self.assertLess(ks_distance(ensemble.positions, reference), max(0.03, 3.0 * initial))

    def test_count_and_determinism(self):
        """
        Test that steps conserve the number of worlds and repeat bit for bit.
        """
        grid = GridSpec.uniform(-8.0, 8.0, 128)
        ensemble = sample_worlds(harmonic_ground(grid), 500, seed=2)
        est = DensityEstimatorSpec.gaussian_kernel(0.3)
        a = step_worlds(ensemble, PotentialSpec.harmonic(), est, grid, 0.01)
        b = step_worlds(ensemble, PotentialSpec.harmonic(), est, grid, 0.01)
        self.assertEqual(a.count, 500)
        testing.assert_array_equal(a.positions, b.positions)
        testing.assert_array_equal(a.velocities, b.velocities)

    def test_boundary_events_are_counted(self):
        """
        Test that worlds crossing a box wall are reflected and counted.
        """
        grid = GridSpec.uniform(0.0, 10.0, 64, boundary=Boundary.BOX)
        positions = np.linspace(9.0, 9.9, 200)[:, None]
        ensemble = WorldEnsemble(positions, np.full((200, 1), 20.0), PhysicalParams())
        stepped = step_worlds(ensemble, PotentialSpec.free(), DensityEstimatorSpec.gaussian_kernel(1.0), grid, 0.1)
        self.assertEqual(stepped.diagnostics["boundary_events"], 200)
        self.assertTrue(np.all(stepped.velocities < 0.0))
        self.assertTrue(np.all(grid.contains(stepped.positions)))

    def test_few_worlds_warn(self):
        """
        Test that small ensembles log that the continuum approximation is unreliable.
        """
        grid = GridSpec.uniform(-8.0, 8.0, 64)
        ensemble = sample_worlds(harmonic_ground(grid), 10, seed=0)
        with self.assertLogs("newtonian_worlds.worlds", "WARNING"):
            step_worlds(ensemble, PotentialSpec.harmonic(), DensityEstimatorSpec.gaussian_kernel(1.0), grid, 0.01)

    def test_rejects_single_world_and_bad_dt(self):
        """
        Test that dynamics refuses lone worlds and non-positive steps.
        """
        grid = GridSpec.uniform(-8.0, 8.0, 64)
        est = DensityEstimatorSpec.gaussian_kernel()
        lone = WorldEnsemble(np.zeros((1, 1)), np.zeros((1, 1)), PhysicalParams())
        with self.assertRaises(WorldCountError):
            step_worlds(lone, PotentialSpec.free(), est, grid, 0.01)
        pair = WorldEnsemble(np.array([[0.0], [1.0]]), np.zeros((2, 1)), PhysicalParams())
        with self.assertRaises(ParameterError):
            step_worlds(pair, PotentialSpec.free(), est, grid, -0.01)


class DoubleSlitWorldsTest(TestCase):
    @classmethod
    def setUpClass(cls):
        s = build_scenario("double_slit")
        ensemble = sample_worlds(s.wave, 10_000, seed=7, params=s.params)
        cls.initial_ks = ks_distance(ensemble.positions, s.wave, s.screen_axis)
        est = DensityEstimatorSpec.gaussian_kernel()
        for _ in range(s.steps):
            ensemble = step_worlds(ensemble, s.potential, est, s.grid, s.dt)
        cls.scenario = s
        cls.ensemble = ensemble
        cls.reference = evolve_schrodinger(s.wave, s.potential, s.dt, s.steps, s.params)

    def test_screen_distribution_tracks_born_density(self):
        """
        Test that the worlds' screen coordinate stays as close to |Ψ|² as the initial sample.
        """
        s = self.scenario
        ks = ks_distance(self.ensemble.positions, self.reference, s.screen_axis)
        self.assertLess(ks, max(0.03, 3.0 * self.initial_ks))

    def test_screen_slabs_follow_born_rule(self):
        """
        Test that worlds populate slabs along the screen in proportion to |Ψ|².
        """
        partition = slab_partition(self.scenario.grid, self.scenario.screen_axis, 16)
        report = born_divergence(self.ensemble, self.reference, partition)
        self.assertLess(report.total_variation, 0.03)

    def test_band_credence_matches_density(self):
        """
        Test that the fraction of transmitted worlds in the central band matches the density credence.
        """
        # band edges sit on cell boundaries
        transmitted = Region.halfspace(0, 0.5625)
        band = Region.box([0.5625, -1.40625], [100.0, 1.40625])
        expected = self_locating_credence(madelung_decompose(self.reference), band, transmitted)
        counted = world_count_credence(self.ensemble, band, transmitted)
        compatible = int(np.count_nonzero(transmitted.contains(self.ensemble.positions)))
        self.assertLess(abs(counted - expected), 3.0 * np.sqrt(expected * (1.0 - expected) / compatible))


class BohmianPathlinesTest(TestCase):
    def history(self, state: WaveState, count: int, dt: float) -> list[WaveState]:
        return [WaveState(state.grid, state.amplitudes, i * dt) for i in range(count)]

    def test_plane_wave_lines(self):
        """
        Test that plane wave pathlines are straight lines of slope hbar k / m.
        """
        grid = GridSpec.uniform(0.0, 10.0, 64)
        k = grid_wavenumber(grid, 0, 1)
        pathlines = bohmian_pathlines(self.history(plane_wave(grid, k), 11, 0.1), np.array([[1.0], [2.0]]))
        for start, pathline in zip((1.0, 2.0), pathlines):
            self.assertFalse(pathline.truncated)
            testing.assert_allclose(pathline.positions[:, 0], start + k * pathline.times, atol=1e-9)
            self.assertAlmostEqual(pathline.times[-1], 1.0)

    def test_ground_state_fixed_points(self):
        """
        Test that pathlines in the harmonic ground state stay put.
        """
        grid = GridSpec.uniform(-8.0, 8.0, 128)
        pathlines = bohmian_pathlines(self.history(harmonic_ground(grid), 5, 0.5), np.array([[-1.0], [0.5]]))
        testing.assert_allclose([p.final[0] for p in pathlines], [-1.0, 0.5], atol=1e-10)

    def test_node_regions_truncate(self):
        """
        Test that a pathline starting in a node region is truncated and flagged.
        """
        grid = GridSpec.uniform(-20.0, 20.0, 256)
        wave = gaussian_packet(grid, 0.0, 1.0, 1.0)
        inside, outside = bohmian_pathlines(self.history(wave, 3, 0.1), np.array([[0.0], [15.0]]))
        self.assertFalse(inside.truncated)
        self.assertTrue(outside.truncated)
        self.assertEqual(len(outside.times), 1)

    def test_history_must_be_uniform(self):
        """
        Test that short or unevenly spaced histories are rejected.
        """
        grid = GridSpec.uniform(0.0, 10.0, 32)
        wave = plane_wave(grid, 0.0)
        with self.assertRaises(ParameterError):
            bohmian_pathlines([wave], np.array([[1.0]]))
        uneven = [WaveState(grid, wave.amplitudes, t) for t in (0.0, 0.1, 0.3)]
        with self.assertRaises(ParameterError):
            bohmian_pathlines(uneven, np.array([[1.0]]))

    def test_pathlines_do_not_cross_the_symmetry_axis(self):
        """
        Test that double slit pathlines starting above the axis stay above it.
        """
        s = build_scenario("double_slit")
        history = [s.wave]
        for _ in range(s.steps // 10):
            history.append(evolve_schrodinger(history[-1], s.potential, s.dt, 10, s.params))
        starts = sample_worlds(s.wave, 400, seed=7, params=s.params).positions
        starts = starts[starts[:, 1] > 0.2][:100]
        for pathline in bohmian_pathlines(history, starts, s.params, substeps=8):
            self.assertGreaterEqual(np.min(pathline.positions[:, 1]), 0.0)

    def test_agrees_with_world_dynamics(self):
        """
        Test that pathlines end where the interacting worlds of the same quantile end.
        """
        grid = GridSpec.uniform(-20.0, 20.0, 256)
        wave = gaussian_packet(grid, 0.0, 1.0, 1.0)
        initial = sample_worlds(wave, 10_000, seed=9)
        ensemble = initial
        est = DensityEstimatorSpec.gaussian_kernel(0.3)
        for _ in range(100):
            ensemble = step_worlds(ensemble, PotentialSpec.free(), est, grid, 0.01)
        history = [wave]
        for _ in range(10):
            history.append(evolve_schrodinger(history[-1], PotentialSpec.free(), 0.01, 10))
        quantiles = [10, 25, 50, 75, 90]
        starts = np.percentile(initial.positions[:, 0], quantiles)[:, None]
        finals = [p.final[0] for p in bohmian_pathlines(history, starts)]
        testing.assert_allclose(finals, np.percentile(ensemble.positions[:, 0], quantiles), atol=0.2)
