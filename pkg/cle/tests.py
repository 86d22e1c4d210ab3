import numpy as np
from django.test import SimpleTestCase
from scipy.integrate import solve_ivp

from network.reactions import ReactionNetwork, drift, lotka_volterra_network
from ssa.simulators import ssa_propagate
from stochkin.exceptions import FactorizationError
from stochkin.streams import StreamFactory
from .langevin import (
    DiffusionState, cle_grid, cle_propagate, cle_simulate, diffusion_factor, diffusion_matrix, em_step,
    substeps,
)

LV_TRUTH = (1.0, 0.005, 0.6)


def production_network():
    return ReactionNetwork.mass_action(('X',), ('kappa',), [[0]], [[1]])


class EulerMaruyamaTests(SimpleTestCase):
    def test_noise_free_step_follows_drift(self):
        s = em_step(lotka_volterra_network(), DiffusionState(0.0, [70, 80]), LV_TRUTH, 0.1, np.zeros(2))
        np.testing.assert_allclose(s.x, [74.2, 78.0])
        self.assertAlmostEqual(s.t, 0.1)

    def test_zero_hazards_leave_state_unchanged(self):
        noise = np.random.default_rng(0).standard_normal(2)
        s = em_step(lotka_volterra_network(), DiffusionState(0.0, [70, 80]), np.zeros(3), 0.5, noise)
        np.testing.assert_array_equal(s.x, [70, 80])

    def test_rejects_non_positive_step(self):
        with self.assertRaises(ValueError):
            em_step(lotka_volterra_network(), DiffusionState(0.0, [70, 80]), LV_TRUTH, 0.0, np.zeros(2))

    def test_increment_variance_of_production(self):
        kappa, dt, n = 4.0, 0.1, 100_000
        x = cle_propagate(production_network(), np.zeros((n, 1)), (kappa,), 0.0, dt, dt, StreamFactory(3).generator(0))
        increments = x[:, 0]
        self.assertAlmostEqual(increments.mean(), kappa * dt, delta=4 * np.sqrt(kappa * dt / n))
        self.assertLess(abs(increments.var() - kappa * dt), 3 * kappa * dt * np.sqrt(2 / n))

    def test_negative_states_are_not_clamped(self):
        net = ReactionNetwork.mass_action(('X',), ('gamma',), [[1]], [[0]])
        s = em_step(net, DiffusionState(0.0, [-2.0]), (1.0,), 0.1, np.array([1.0]))
        np.testing.assert_array_equal(s.x, [-2.0])


class DiffusionFactorTests(SimpleTestCase):
    def test_matrix_is_symmetric_psd(self):
        rng = np.random.default_rng(1)
        for x in rng.uniform(-5, 200, size=(50, 2)):
            matrix = diffusion_matrix(lotka_volterra_network(), x, LV_TRUTH)
            np.testing.assert_array_equal(matrix, matrix.T)
            self.assertGreaterEqual(np.linalg.eigvalsh(matrix).min(), -1e-8 * max(1.0, np.abs(matrix).max()))

    def test_zero_matrix_has_zero_factor(self):
        np.testing.assert_array_equal(diffusion_factor(np.zeros((2, 2))), 0)

    def test_singular_matrix_uses_jitter(self):
        matrix = diffusion_matrix(lotka_volterra_network(), np.array([0.0, 80.0]), LV_TRUTH)
        self.assertEqual(np.linalg.matrix_rank(matrix), 1)
        factor = diffusion_factor(matrix)
        np.testing.assert_allclose(factor @ factor.T, matrix, atol=1e-6)

    def test_indefinite_or_asymmetric_matrix_is_an_error(self):
        for matrix in ([[1.0, 2.0], [2.0, 1.0]], [[1.0, 0.5], [0.0, 1.0]], [[np.nan, 0.0], [0.0, 1.0]]):
            with self.assertRaises(FactorizationError):
                diffusion_factor(np.array(matrix))
        with self.assertRaises(FactorizationError):
            diffusion_factor(np.array([np.eye(2), [[1.0, 2.0], [2.0, 1.0]]]))

    def test_batch_matches_single(self):
        states = np.array([[70.0, 80.0], [0.0, 80.0], [0.0, 0.0]])
        batch = diffusion_factor(diffusion_matrix(lotka_volterra_network(), states, LV_TRUTH))
        for factor, state in zip(batch, states):
            np.testing.assert_allclose(factor, diffusion_factor(diffusion_matrix(lotka_volterra_network(), state, LV_TRUTH)))


class SubstepTests(SimpleTestCase):
    def test_even_division(self):
        count, dt = substeps(0.0, 1.0, 0.2)
        self.assertEqual(count, 5)
        self.assertAlmostEqual(dt, 0.2)

    def test_ceiling_rule(self):
        count, dt = substeps(0.0, 1.0, 0.3)
        self.assertEqual(count, 4)
        self.assertAlmostEqual(dt, 0.25)

    def test_dyadic_step_sizes(self):
        for dt_max, expected in ((0.2, 5), (0.125, 8), (0.0625, 16)):
            self.assertEqual(substeps(3.0, 4.0, dt_max)[0], expected)


class SimulateTests(SimpleTestCase):
    def test_reproducible(self):
        first = cle_simulate(lotka_volterra_network(), [70, 80], LV_TRUTH, 0, 1, 0.1, StreamFactory(9).generator(1))
        second = cle_simulate(lotka_volterra_network(), [70, 80], LV_TRUTH, 0, 1, 0.1, StreamFactory(9).generator(1))
        np.testing.assert_array_equal(first.x, second.x)
        self.assertEqual(first.t, 1.0)

    def test_noise_free_path_converges_to_rate_equations(self):
        net = lotka_volterra_network()
        exact = solve_ivp(lambda t, z: drift(net, z, LV_TRUTH, t), (0, 1), [70.0, 80.0],
                          rtol=1e-10, atol=1e-10).y[:, -1]
        errors = []
        for dt in (0.1, 0.01):
            s = DiffusionState(0.0, [70, 80])
            for _ in range(round(1 / dt)):
                s = em_step(net, s, LV_TRUTH, dt, np.zeros(2))
            errors.append(np.abs(s.x - exact).max())
        self.assertGreater(errors[0] / errors[1], 5)
        self.assertLess(errors[0] / errors[1], 20)

    def test_mean_close_to_exact_simulation(self):
        streams, n = StreamFactory(12), 20_000
        net = lotka_volterra_network()
        start = np.tile([70, 80], (n, 1))
        cle = cle_propagate(net, start, LV_TRUTH, 0, 1, 0.0625, streams.generator(0))
        ssa = ssa_propagate(net, start, LV_TRUTH, 0, 1, streams.generator(1))
        np.testing.assert_allclose(cle.mean(axis=0), ssa.mean(axis=0), rtol=0.02)

    def test_grid(self):
        path = cle_grid(lotka_volterra_network(), [70, 80], LV_TRUTH, [0.0, 1.0, 2.0], 0.2, StreamFactory(1).generator(0))
        self.assertEqual(path.shape, (3, 2))
        np.testing.assert_array_equal(path[0], [70, 80])
