from unittest import TestCase

import numpy as np
from numpy import testing

from newtonian_worlds.core import Boundary, GridSpec, HydroState, PhysicalParams, PotentialSpec, ScalarField, VectorField
from newtonian_worlds.exceptions import ParameterError
from newtonian_worlds.fixtures import gaussian_packet, grid_wavenumber, plane_wave, polarized_spinor
from newtonian_worlds.hydrodynamics import madelung_decompose, step_hydro
from newtonian_worlds.oracle import BFieldSpec, SpinorState, evolve_pauli
from newtonian_worlds.reconstruction import check_quantization
from newtonian_worlds.scenarios import build_scenario
from newtonian_worlds.spin import (
    SpinHydroState,
    SpinParams,
    SpinWorldEnsemble,
    b_total,
    check_spin_quantization,
    guidance_velocity,
    moment_field,
    moment_mean,
    rotate_moments,
    sample_spin_worlds,
    spin_angular_momentum,
    spinor_compose,
    spinor_decompose,
    step_spin_hydro,
    step_spin_worlds,
)
from newtonian_worlds.worlds import DensityEstimatorSpec


def l1(a: np.ndarray, b: np.ndarray, grid: GridSpec) -> float:
    return float(np.sum(np.abs(a - b)) * grid.cell_volume)


def larmor_direction(t: float, mu: float = -1.0, b: float = 1.0) -> np.ndarray:
    omega = 2.0 * mu * b
    return np.array([np.cos(omega * t), -np.sin(omega * t), 0.0])


class SpinParamsTest(TestCase):
    def test_rejects_zero_moment(self):
        """
        Test that a vanishing magnetic moment is rejected.
        """
        with self.assertRaises(ParameterError):
            SpinParams(0.0)

    def test_single_particle_only(self):
        """
        Test that spin dynamics refuses several particles.
        """
        with self.assertRaises(ParameterError):
            SpinParams(-1.0, PhysicalParams(masses=(1.0, 1.0)))


class SpinorDecomposeTest(TestCase):
    def setUp(self):
        self.grid = GridSpec.uniform(-12.0, 12.0, 128)

    def test_round_trip(self):
        """
        Test that composing the decomposed fields returns the spinor.
        """
        spinor = polarized_spinor(gaussian_packet(self.grid, 1.0, 1.5, 0.7), np.pi / 3, 0.4)
        hydro, theta = spinor_decompose(spinor)
        rebuilt = spinor_compose(hydro, theta)
        mask = hydro.beta.mask
        testing.assert_allclose(rebuilt.plus[mask], spinor.plus[mask], atol=1e-10)
        testing.assert_allclose(rebuilt.minus[mask], spinor.minus[mask], atol=1e-10)
        testing.assert_allclose(hydro.alpha.values[mask], np.pi / 3)
        testing.assert_allclose(hydro.beta.values[mask], 0.4)

    def test_round_trip_through_poles(self):
        """
        Test that a spinor whose components vanish in different places composes back exactly.
        """
        spinor = SpinorState(
            self.grid, gaussian_packet(self.grid, -4.0, 1.0, 1.0).amplitudes, gaussian_packet(self.grid, 4.0, 1.0, -1.0).amplitudes
        ).normalized()
        hydro, theta = spinor_decompose(spinor)
        self.assertFalse(hydro.beta.mask.all())
        rebuilt = spinor_compose(hydro, theta)
        testing.assert_allclose(rebuilt.plus, spinor.plus, atol=1e-12)
        testing.assert_allclose(rebuilt.minus, spinor.minus, atol=1e-12)
        self.assertIs(hydro.phase, theta)

    def test_angle_form_of_velocity(self):
        """
        Test that the angle form of the guidance velocity matches the spinor current.
        """
        grid = GridSpec.uniform(0.0, 10.0, 64)
        k, q = grid_wavenumber(grid, 0, 1), grid_wavenumber(grid, 0, 2)
        x = grid.mesh()[0]
        spinor = SpinorState(grid, np.exp(1j * k * x), np.exp(1j * (k + q) * x)).normalized()
        hydro, theta = spinor_decompose(spinor)
        testing.assert_allclose(hydro.velocity.values[0], k + 0.5 * q, atol=1e-10)
        testing.assert_allclose(guidance_velocity(hydro, theta).values, hydro.velocity.values, atol=1e-10)

    def test_moments_and_spin(self):
        """
        Test that the moment is mu n and the spin angular momentum is hbar n / 2.
        """
        hydro, _ = spinor_decompose(polarized_spinor(gaussian_packet(self.grid)))
        core = hydro.velocity.defined
        moments = moment_field(hydro).values
        spin = spin_angular_momentum(hydro).values
        for c, (moment, half) in enumerate(zip((-1.0, 0.0, 0.0), (0.5, 0.0, 0.0))):
            testing.assert_allclose(moments[c][core], moment, atol=1e-12)
            testing.assert_allclose(spin[c][core], half, atol=1e-12)

    def test_uniform_moments_feel_the_bare_field(self):
        """
        Test that the quantum correction to the field vanishes for uniform moments.
        """
        hydro, _ = spinor_decompose(polarized_spinor(gaussian_packet(self.grid)))
        field = BFieldSpec.stern_gerlach(1.0, 0.5)
        total = b_total(hydro, field)
        core = total.defined
        testing.assert_allclose(total.values[:, core], field.evaluate(self.grid)[:, core])


class RotateMomentsTest(TestCase):
    def test_precession_sense(self):
        """
        Test that moments precess about the field at angular frequency 2 mu B / hbar.
        """
        params = SpinParams()
        rotated = rotate_moments(np.array([1.0, 0.0, 0.0]), np.array([0.0, 0.0, 1.0]), params, 0.3)
        testing.assert_allclose(rotated, larmor_direction(0.3), atol=1e-14)

    def test_rotation_keeps_unit_length(self):
        """
        Test that precession about arbitrary fields preserves unit directions.
        """
        rng = np.random.default_rng(0)
        direction = rng.normal(size=(3, 50))
        direction /= np.linalg.norm(direction, axis=0)
        rotated = rotate_moments(direction, rng.normal(size=(3, 50)), SpinParams(), 0.7)
        testing.assert_allclose(np.linalg.norm(rotated, axis=0), 1.0, atol=1e-12)


class StepSpinHydroTest(TestCase):
    def test_larmor_precession(self):
        """
        Test that a uniform fluid precesses at the Larmor frequency.
        """
        grid = GridSpec.uniform(0.0, 2.0 * np.pi, 32)
        state, _ = spinor_decompose(polarized_spinor(plane_wave(grid, 0.0)))
        field = BFieldSpec.uniform(0.0, 0.0, 1.0)
        for _ in range(100):
            state = step_spin_hydro(state, PotentialSpec.free(), field, None, 0.01)
        direction = state.direction()[:, 5]
        testing.assert_allclose(direction, larmor_direction(state.time), atol=1e-10)

    def test_uniform_moments_reduce_to_spinless_flow(self):
        """
        Test that uniformly polarized fluid moves like the spinless fluid, with and without a uniform field.
        """
        grid = GridSpec.uniform(-20.0, 20.0, 256)
        wave = gaussian_packet(grid, 0.0, 1.0, 1.0)
        for field in (BFieldSpec.uniform(0.0, 0.0, 0.0), BFieldSpec.uniform(0.0, 0.0, 1.0)):
            spinning, _ = spinor_decompose(polarized_spinor(wave))
            plain = madelung_decompose(wave)
            for _ in range(100):
                spinning = step_spin_hydro(spinning, PotentialSpec.free(), field, None, 0.01)
                plain = step_hydro(plain, PotentialSpec.free(), None, 0.01)
            testing.assert_allclose(spinning.rho.values, plain.rho.values, atol=1e-12)
            core = plain.rho.values > 1e-6 * plain.rho.values.max()
            testing.assert_allclose(spinning.velocity.values[0][core], plain.velocity.values[0][core], atol=1e-9)

    def test_stern_gerlach_tracks_pauli(self):
        """
        Test that the spinning fluid in the Stern-Gerlach scenario follows the Pauli density.
        """
        s = build_scenario("stern_gerlach")
        state, _ = spinor_decompose(s.spinor, s.spin)
        for _ in range(s.steps):
            state = step_spin_hydro(state, s.potential, s.field, s.spin, s.dt)
        reference = evolve_pauli(s.spinor, s.potential, s.field, s.spin.mu, s.dt, s.steps)
        self.assertLess(l1(state.rho.values, reference.density(), s.grid), 1e-3)
        x = s.grid.mesh()[0]
        upper = x > 0
        self.assertAlmostEqual(float(np.sum(state.rho.values[upper]) * s.grid.cell_volume), 0.5, delta=1e-2)

    def test_needs_a_carried_phase(self):
        """
        Test that a spin state without its spinor phase cannot be stepped.
        """
        grid = GridSpec.uniform(0.0, 2.0 * np.pi, 32)
        state, _ = spinor_decompose(polarized_spinor(plane_wave(grid, 0.0)))
        bare = SpinHydroState(state.rho, state.velocity, state.alpha, state.beta)
        with self.assertRaises(ParameterError):
            step_spin_hydro(bare, PotentialSpec.free(), BFieldSpec.uniform(0.0, 0.0, 1.0), None, 0.01)

    def test_rejects_non_positive_dt(self):
        """
        Test that time steps must be positive.
        """
        grid = GridSpec.uniform(0.0, 2.0 * np.pi, 32)
        state, _ = spinor_decompose(polarized_spinor(plane_wave(grid, 0.0)))
        with self.assertRaises(ParameterError):
            step_spin_hydro(state, PotentialSpec.free(), BFieldSpec.uniform(0.0, 0.0, 1.0), None, 0.0)


class MomentMeanTest(TestCase):
    def setUp(self):
        self.grid = GridSpec.uniform(-12.0, 12.0, 128)
        self.positions = np.random.default_rng(5).uniform(-8.0, 8.0, size=(2000, 1))

    def test_parallel_moments(self):
        """
        Test that parallel world moments give that direction everywhere, empty cells included.
        """
        directions = np.tile([0.6, 0.0, 0.8], (2000, 1))
        mean = moment_mean(self.positions, directions, self.grid)
        self.assertEqual(mean.shape, (3, 128))
        testing.assert_allclose(mean.T, np.broadcast_to([0.6, 0.0, 0.8], (128, 3)), atol=1e-12)

    def test_opposite_beams_stay_apart(self):
        """
        Test that the mean field keeps opposite moments on either side of the packet.
        """
        up = self.positions[:, 0] < 0.0
        directions = np.where(up[:, None], [0.0, 0.0, 1.0], [0.0, 0.0, -1.0])
        mean = moment_mean(self.positions, directions, self.grid)
        x = self.grid.coordinates(0)
        testing.assert_allclose(mean[2][(x < -1.0) & (x > -7.0)], 1.0, atol=1e-9)
        testing.assert_allclose(mean[2][(x > 1.0) & (x < 7.0)], -1.0, atol=1e-9)


class SpinWorldsTest(TestCase):
    def test_sampled_moments_follow_the_spinor(self):
        """
        Test that sampled worlds carry the local moment direction.
        """
        grid = GridSpec.uniform(-8.0, 8.0, 64)
        ensemble = sample_spin_worlds(polarized_spinor(gaussian_packet(grid)), 300, seed=1)
        self.assertEqual(ensemble.count, 300)
        testing.assert_allclose(ensemble.directions, [[1.0, 0.0, 0.0]] * 300, atol=1e-12)
        testing.assert_allclose(ensemble.moments[:, 0], -1.0, atol=1e-12)

    def test_directions_are_normalized(self):
        """
        Test that world directions are scaled to unit length and zero directions are rejected.
        """
        params = SpinParams()
        ensemble = SpinWorldEnsemble(np.zeros((2, 1)), np.zeros((2, 1)), [[0.0, 0.0, 2.0], [3.0, 0.0, 0.0]], params)
        testing.assert_allclose(ensemble.directions, [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
        testing.assert_allclose(ensemble.alpha, [0.0, np.pi / 2])
        with self.assertRaises(ParameterError):
            SpinWorldEnsemble(np.zeros((1, 1)), np.zeros((1, 1)), [[0.0, 0.0, 0.0]], params)

    def test_larmor_precession(self):
        """
        Test that every world precesses at the Larmor frequency in a uniform field.
        """
        grid = GridSpec.uniform(0.0, 2.0 * np.pi, 32)
        ensemble = sample_spin_worlds(polarized_spinor(plane_wave(grid, 0.0)), 200, seed=3)
        field = BFieldSpec.uniform(0.0, 0.0, 1.0)
        est = DensityEstimatorSpec.gaussian_kernel(1.0)
        for _ in range(100):
            ensemble = step_spin_worlds(ensemble, PotentialSpec.free(), field, est, grid, None, 0.01)
        expected = np.broadcast_to(larmor_direction(ensemble.time), (200, 3))
        testing.assert_allclose(ensemble.directions, expected, atol=1e-6)

    def test_precession_frequency_matches_the_fluid(self):
        """
        Test that worlds and fluid precess at the same Larmor frequency.
        """
        s = build_scenario("larmor")
        ensemble = sample_spin_worlds(s.spinor, 200, seed=3, params=s.spin)
        hydro, _ = spinor_decompose(s.spinor, s.spin)
        est = DensityEstimatorSpec.gaussian_kernel(1.0)
        times, world_azimuth, fluid_azimuth = [], [], []
        for _ in range(s.steps):
            ensemble = step_spin_worlds(ensemble, s.potential, s.field, est, s.grid, s.spin, s.dt)
            hydro = step_spin_hydro(hydro, s.potential, s.field, s.spin, s.dt)
            times.append(ensemble.time)
            world_azimuth.append(ensemble.beta[0])
            fluid_azimuth.append(hydro.beta.values[5])
        world_rate = np.polyfit(times, np.unwrap(world_azimuth), 1)[0]
        fluid_rate = np.polyfit(times, np.unwrap(fluid_azimuth), 1)[0]
        self.assertAlmostEqual(world_rate / fluid_rate, 1.0, delta=1e-4)
        self.assertAlmostEqual(fluid_rate / 2.0, 1.0, delta=1e-4)

    def test_stern_gerlach_sorts_moments(self):
        """
        Test that the field gradient splits the worlds evenly into beams aligned with ±z.
        """
        s = build_scenario("stern_gerlach")
        count = 10_000
        ensemble = sample_spin_worlds(s.spinor, count, seed=7, params=s.spin)
        est = DensityEstimatorSpec.gaussian_kernel(0.3)
        for _ in range(s.steps):
            ensemble = step_spin_worlds(ensemble, s.potential, s.field, est, s.grid, s.spin, s.dt)
        up = ensemble.directions[:, 2] > 0
        self.assertLess(abs(np.mean(up) - 0.5), 3.0 * 0.5 / np.sqrt(count))
        left = ensemble.positions[:, 0] < 0
        # moments with n_z > 0 are pushed towards −x when μ < 0
        self.assertLess(np.percentile(ensemble.alpha[left], 99), 0.05)
        self.assertGreater(np.percentile(ensemble.alpha[~left], 1), np.pi - 0.05)


class CheckSpinQuantizationTest(TestCase):
    def test_moment_winding_carries_the_flow(self):
        """
        Test that flow generated by a winding moment azimuth is quantized once the spin term is included.
        """
        grid = GridSpec.uniform(0.0, 10.0, 64)
        x = grid.mesh()[0]
        q = grid_wavenumber(grid, 0, 1)
        spinor = SpinorState(grid, np.ones(64), np.exp(1j * q * x)).normalized()
        hydro, _ = spinor_decompose(spinor)
        spinless = check_quantization(HydroState(hydro.rho, hydro.velocity))
        self.assertFalse(spinless.satisfied)
        report = check_spin_quantization(hydro)
        self.assertTrue(report.satisfied)
        self.assertEqual(report.loops[0].winding, 0)

    def test_polarized_packet_on_box_grid(self):
        """
        Test that a polarized packet at rest on a box grid satisfies every determinate plaquette.
        """
        grid = GridSpec.uniform(-10.0, 10.0, 64, ndim=2, boundary=Boundary.BOX)
        hydro, _ = spinor_decompose(polarized_spinor(gaussian_packet(grid, 0.0, 0.7)))
        report = check_spin_quantization(hydro)
        self.assertTrue(report.satisfied)
        self.assertGreater(report.indeterminate, 0)

    def test_half_winding_of_the_azimuth_is_flagged(self):
        """
        Test that a moment azimuth winding once around an equatorial fluid leaves half a quantum unaccounted.
        """
        grid = GridSpec.uniform(0.0, 10.0, 64)
        x = grid.mesh()[0]
        q = grid_wavenumber(grid, 0, 1)
        state = SpinHydroState(
            ScalarField(grid, np.full(64, 0.1)),
            VectorField(grid, np.zeros((1, 64))),
            ScalarField(grid, np.full(64, np.pi / 2)),
            ScalarField(grid, np.mod(q * x, 2.0 * np.pi)),
        )
        report = check_spin_quantization(state)
        self.assertFalse(report.satisfied)
        self.assertAlmostEqual(report.loops[0].residual, np.pi, places=9)
