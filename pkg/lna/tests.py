import math

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings, strategies as st
from scipy import linalg, stats

from network.reactions import (
    ReactionNetwork, gene_expression_network, lotka_volterra_network, pure_death_network, sir_network,
)
from ssa.simulators import ssa_grid
from stochkin.exceptions import DataError, IntegrationError
from stochkin.streams import StreamFactory
from .likelihood import LnaLikelihood, lna_log_marginal, temper
from .moments import LnaBelief, integrate_moments
from .observations import ObservationModel

LV_TRUTH = np.array([1.0, 0.005, 0.6])
GENE_LINEAR = np.array([0.44, 0.52, 10, 15, 0.0, 7, 3, 10])


def linear_gene_moments(c, a, C, dt):
    """
    Exact LNA moments of the gene expression model with a constant transcription rate,
    from the matrix exponential of the joint linear system in (vec V, z, 1).
    """
    gamma_r, gamma_p, kappa_p, kappa_r = c[0], c[1], c[2], c[3] + c[6]
    A = np.array([[-gamma_r, 0.0], [kappa_p, -gamma_p]])
    M = np.zeros((7, 7))
    M[:4, :4] = np.kron(A, np.eye(2)) + np.kron(np.eye(2), A)
    # S diag{h(z)} S' = diag(kappa_r + gamma_r z_R, kappa_p z_R + gamma_p z_P)
    M[0, 4], M[0, 6] = gamma_r, kappa_r
    M[3, 4], M[3, 5] = kappa_p, gamma_p
    M[4:6, 4:6] = A
    M[4, 6] = kappa_r
    state = linalg.expm(M * dt) @ np.concatenate([np.ravel(C), a, [1.0]])
    return state[4:6], state[:4].reshape(2, 2)


def kalman_log_likelihood(c, times, values, x1):
    """Textbook Kalman filter for protein observations with noise sd c[7]."""
    G, R = np.array([0.0, 1.0]), c[7] ** 2
    a, C, total = np.asarray(x1, dtype=float), np.zeros((2, 2)), 0.0
    total += stats.norm.logpdf(values[0], G @ a, math.sqrt(R))
    for k in range(1, len(times)):
        z, V = linear_gene_moments(c, a, C, times[k] - times[k - 1])
        q = G @ V @ G + R
        total += stats.norm.logpdf(values[k], G @ z, math.sqrt(q))
        gain = V @ G / q
        a = z + gain * (values[k] - G @ z)
        C = V - np.outer(gain, G @ V)
    return total


def lotka_volterra_data(seed=8, length=50):
    rng = StreamFactory(seed).generator(5)
    times = np.arange(1.0, length + 1)
    path = ssa_grid(lotka_volterra_network(), np.array([70, 80]), LV_TRUTH, times, rng)
    return times, rng.poisson(path[:, :1]).astype(float)


class ObservationModelTests(SimpleTestCase):
    def test_rank_deficient_G_is_rejected(self):
        with self.assertRaises(ValueError):
            ObservationModel.exact([[1.0, 2.0], [2.0, 4.0]])

    def test_covariances(self):
        poisson = ObservationModel.poisson(2, [0])
        np.testing.assert_allclose(poisson.covariance(LV_TRUTH, np.array([12.0, 3.0])), [[12.0]])
        np.testing.assert_allclose(poisson.covariance(LV_TRUTH, np.array([-1.0, 3.0])), [[1e-6]])
        gaussian = ObservationModel.gaussian([0.0, 1.0], sd_indices=[7])
        np.testing.assert_allclose(gaussian.covariance(GENE_LINEAR), [[100.0]])
        np.testing.assert_array_equal(ObservationModel.exact([1.0, 1.0]).covariance(None), [[0.0]])

    def test_validate_data(self):
        poisson = ObservationModel.poisson(2, [0])
        self.assertEqual(poisson.validate_data([1, 2, 3]).shape, (3, 1))
        with self.assertRaises(DataError):
            poisson.validate_data([1, -2])
        with self.assertRaises(DataError):
            poisson.validate_data([1.5])
        with self.assertRaises(DataError):
            ObservationModel.gaussian(np.eye(2), np.eye(2)).validate_data([1.0, 2.0])

    def test_spec_round_trip(self):
        species, names = ('S', 'I'), ('beta', 'gamma', 'sigma')
        for obs in (
            ObservationModel.poisson(2, [1]),
            ObservationModel.exact([1.0, 1.0]),
            ObservationModel.gaussian([0.0, 1.0], sd_indices=[2]),
            ObservationModel.gaussian(np.eye(2), 4 * np.eye(2)),
        ):
            rebuilt = ObservationModel.from_spec(obs.to_spec(species, names), species, names)
            self.assertEqual(rebuilt.kind, obs.kind)
            np.testing.assert_array_equal(rebuilt.G, obs.G)
            self.assertEqual(rebuilt.sd_indices, obs.sd_indices)

    def test_samples(self):
        rng = np.random.default_rng(0)
        exact = ObservationModel.exact([1.0, 1.0])
        self.assertEqual(float(exact.sample(np.array([100, 19]), None, rng)[0]), 119.0)
        draws = ObservationModel.gaussian([0.0, 1.0], sd_indices=[7]).sample(np.tile([10, 150], (20_000, 1)), GENE_LINEAR, rng)
        self.assertAlmostEqual(draws.std(), 10.0, delta=0.2)


class MomentTests(SimpleTestCase):
    def test_zero_hazards_leave_moments_unchanged(self):
        belief = LnaBelief.restart(0.0, [70.0, 80.0], [[2.0, 0.5], [0.5, 1.0]])
        advanced = integrate_moments(lotka_volterra_network(), belief, np.zeros(3), 1.0)
        np.testing.assert_allclose(advanced.z, belief.z)
        np.testing.assert_allclose(advanced.V, belief.V)
        self.assertEqual(advanced.t, 1.0)

    def test_pure_death_closed_form(self):
        gamma, z0 = 0.6, 20.0
        advanced = integrate_moments(pure_death_network(), LnaBelief.restart(0.0, [z0], [[0.0]]), (gamma,), 1.0)
        self.assertAlmostEqual(advanced.z[0] / (z0 * math.exp(-gamma)), 1.0, delta=1e-5)
        expected_v = z0 * (math.exp(-gamma) - math.exp(-2 * gamma))
        self.assertAlmostEqual(advanced.V[0, 0] / expected_v, 1.0, delta=1e-5)
        self.assertAlmostEqual(expected_v, 4.954, places=3)

    def test_linear_gene_expression_matches_matrix_exponential(self):
        a, C = np.array([10.0, 150.0]), np.array([[4.0, 1.0], [1.0, 9.0]])
        advanced = integrate_moments(gene_expression_network(), LnaBelief.restart(0.0, a, C), GENE_LINEAR, 1.0)
        z, V = linear_gene_moments(GENE_LINEAR, a, C, 1.0)
        np.testing.assert_allclose(advanced.z, z, rtol=1e-5)
        np.testing.assert_allclose(advanced.V, V, rtol=1e-5)

    def test_residual_mean_follows_jacobian_when_non_zero(self):
        belief = LnaBelief(0.0, np.array([20.0]), np.array([1.0]), np.zeros((1, 1)), np.array([20.0]), np.zeros((1, 1)))
        advanced = integrate_moments(pure_death_network(), belief, (0.6,), 1.0)
        self.assertAlmostEqual(advanced.m[0], math.exp(-0.6), places=5)

    def test_covariance_stays_psd(self):
        rng = np.random.default_rng(4)
        cases = (
            (lotka_volterra_network(), LV_TRUTH, [70.0, 80.0]),
            (gene_expression_network(), np.array([0.44, 0.52, 10, 15, 0.4, 7, 3, 10]), [10.0, 150.0]),
            (sir_network(), np.array([0.0009, 0.1]), [118.0, 1.0]),
        )
        for net, truth, x1 in cases:
            for _ in range(20):
                c = truth * np.exp(0.1 * rng.standard_normal(truth.size))
                belief = LnaBelief.restart(0.0, x1, np.zeros((2, 2)))
                for t in (1.0, 2.0, 3.0):
                    belief = integrate_moments(net, belief, c, t)
                    self.assertGreaterEqual(np.linalg.eigvalsh(belief.V).min(), -1e-8)

    def test_blow_up_reports_failure_time(self):
        explosive = ReactionNetwork.mass_action(('A',), ('k',), [[2]], [[3]])
        with self.assertRaises(IntegrationError) as raised:
            integrate_moments(explosive, LnaBelief.restart(0.0, [10.0], [[0.0]]), (1.0,), 10.0)
        self.assertIsNotNone(raised.exception.time)
        self.assertLess(raised.exception.time, 1.0)


class LogMarginalTests(SimpleTestCase):
    def test_single_observation_is_gaussian_density(self):
        Sigma = np.array([[4.0, 1.0], [1.0, 9.0]])
        obs = ObservationModel.gaussian(np.eye(2), Sigma)
        y = np.array([[72.0, 77.0]])
        log_p = lna_log_marginal(lotka_volterra_network(), obs, [1.0], y, LV_TRUTH, [70, 80])
        self.assertAlmostEqual(log_p, stats.multivariate_normal.logpdf(y[0], [70, 80], Sigma))

    def test_linear_gene_expression_matches_kalman_filter(self):
        rng = StreamFactory(21).generator(5)
        times = 0.25 * np.arange(20)
        path = ssa_grid(gene_expression_network(), np.array([10, 150]), GENE_LINEAR, times, rng)
        values = path[:, 1] + 10 * rng.standard_normal(times.size)
        obs = ObservationModel.gaussian([0.0, 1.0], sd_indices=[7])
        log_p = lna_log_marginal(gene_expression_network(), obs, times, values, GENE_LINEAR, [10, 150])
        self.assertAlmostEqual(log_p, kalman_log_likelihood(GENE_LINEAR, times, values, [10, 150]), delta=1e-4)

    def test_exact_observation_of_known_start(self):
        obs, c = ObservationModel.exact([1.0, 1.0]), (0.001, 0.1)
        self.assertEqual(lna_log_marginal(sir_network(), obs, [0.0], [119.0], c, [118, 1]), 0.0)
        self.assertEqual(lna_log_marginal(sir_network(), obs, [0.0], [120.0], c, [118, 1]), -math.inf)
        later = lna_log_marginal(sir_network(), obs, [0.0, 1.0, 2.0], [119.0, 119.0, 118.0], c, [118, 1])
        self.assertTrue(np.isfinite(later))

    def test_deterministic(self):
        times, values = lotka_volterra_data(length=15)
        obs = ObservationModel.poisson(2, [0])
        first = lna_log_marginal(lotka_volterra_network(), obs, times, values, LV_TRUTH, [70, 80])
        second = lna_log_marginal(lotka_volterra_network(), obs, times, values, LV_TRUTH, [70, 80])
        self.assertEqual(first, second)

    def test_tolerance_halving(self):
        times, values = lotka_volterra_data()
        obs = ObservationModel.poisson(2, [0])
        coarse = lna_log_marginal(lotka_volterra_network(), obs, times, values, LV_TRUTH, [70, 80], rtol=1e-6)
        fine = lna_log_marginal(lotka_volterra_network(), obs, times, values, LV_TRUTH, [70, 80], rtol=5e-7)
        self.assertTrue(np.isfinite(coarse))
        self.assertLess(abs(coarse - fine), 1e-4)

    def test_estimator_counts_calls_and_tempers(self):
        times, values = lotka_volterra_data(length=10)
        obs = ObservationModel.poisson(2, [0])
        plain = LnaLikelihood(lotka_volterra_network(), obs, times, values, [70, 80])
        tempered = LnaLikelihood(lotka_volterra_network(), obs, times, values, [70, 80], tau=5)
        self.assertAlmostEqual(tempered(LV_TRUTH), plain(LV_TRUTH) / 5)
        self.assertEqual(plain.calls, 1)

    def test_estimator_turns_integration_failure_into_rejection(self):
        explosive = ReactionNetwork.mass_action(('A',), ('k',), [[2]], [[3]])
        obs = ObservationModel.gaussian([1.0], [[1.0]])
        estimator = LnaLikelihood(explosive, obs, [0.0, 10.0], [10.0, 12.0], [10.0])
        with self.assertLogs('lna.likelihood', level='WARNING'):
            self.assertEqual(estimator((1.0,)), -math.inf)


class TemperTests(SimpleTestCase):
    def test_values(self):
        self.assertEqual(temper(-100.0, 5), -20.0)
        self.assertEqual(temper(-3.7, 1), -3.7)
        self.assertEqual(temper(-math.inf, 5), -math.inf)
        with self.assertRaises(ValueError):
            temper(-1.0, 0.5)

    @given(
        st.floats(min_value=-1e4, max_value=0), st.floats(min_value=-1e4, max_value=0),
        st.floats(min_value=1, max_value=50),
    )
    @settings(deadline=None)
    def test_tempered_ratio_is_untempered_ratio_over_tau(self, current, proposed, tau):
        ratio = temper(proposed, tau) - temper(current, tau)
        self.assertAlmostEqual(ratio, (proposed - current) / tau, delta=1e-9 * max(1.0, abs(current) + abs(proposed)))
