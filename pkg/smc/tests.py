import math

import numpy as np
from django.test import SimpleTestCase
from scipy import linalg, stats

from lna.observations import ObservationModel
from network.reactions import immigration_death_network, lotka_volterra_network, sir_network
from ssa.simulators import ssa_grid, ssa_propagate
from stochkin import streams as stream_keys
from stochkin.streams import StreamFactory
from .filters import (
    RESAMPLERS, ClePropagator, ParticleFilterLikelihood, ParticleSet, SsaPropagator, bootstrap_filter,
    obs_log_density, resample, resample_multinomial,
)

LV_TRUTH = np.array([1.0, 0.005, 0.6])


def immigration_death_generator(kappa, gamma, size):
    q = np.zeros((size, size))
    for n in range(size):
        if n + 1 < size:
            q[n, n + 1] = kappa
        if n > 0:
            q[n, n - 1] = gamma * n
        q[n, n] = -q[n].sum()
    return q


def forward_likelihood(kappa, gamma, sd, times, values, x1, size=60):
    """Exact likelihood of Gaussian observations of the truncated immigration-death chain."""
    emission = lambda y: stats.norm.pdf(y, np.arange(size), sd)
    alpha = np.zeros(size)
    alpha[x1] = emission(values[0])[x1]
    q = immigration_death_generator(kappa, gamma, size)
    for k in range(1, len(times)):
        alpha = alpha @ linalg.expm(q * (times[k] - times[k - 1])) * emission(values[k])
    return alpha.sum()


class ObsLogDensityTests(SimpleTestCase):
    def test_gaussian(self):
        obs = ObservationModel.gaussian([0.0, 1.0], sd_indices=[7])
        c = np.array([0.44, 0.52, 10, 15, 0.4, 7, 3, 10])
        self.assertAlmostEqual(obs_log_density(obs, [150.0], np.array([10, 150]), c), -3.2215, places=4)

    def test_poisson_zero_rate(self):
        obs = ObservationModel.poisson(2, [0])
        self.assertEqual(obs_log_density(obs, [0.0], np.array([0, 5]), LV_TRUTH), 0.0)
        self.assertEqual(obs_log_density(obs, [2.0], np.array([0, 5]), LV_TRUTH), -math.inf)
        self.assertAlmostEqual(obs_log_density(obs, [3.0], np.array([4, 5]), LV_TRUTH), stats.poisson.logpmf(3, 4))

    def test_exact(self):
        obs = ObservationModel.exact([1.0, 1.0])
        self.assertEqual(obs_log_density(obs, [119.0], np.array([100, 19]), None), 0.0)
        self.assertEqual(obs_log_density(obs, [120.0], np.array([100, 19]), None), -math.inf)

    def test_batch(self):
        obs = ObservationModel.poisson(2, [0])
        batch = obs_log_density(obs, [3.0], np.array([[4, 5], [0, 1], [3, 3]]), LV_TRUTH)
        np.testing.assert_allclose(batch, [stats.poisson.logpmf(3, 4), -np.inf, stats.poisson.logpmf(3, 3)])


class ResampleTests(SimpleTestCase):
    def setUp(self):
        self.rng = np.random.default_rng(31)

    def weighted(self, weights):
        weights = np.asarray(weights, dtype=float)
        with np.errstate(divide='ignore'):
            return ParticleSet(np.arange(weights.size)[:, None], np.log(weights))

    def test_weights_are_normalised(self):
        ps = ParticleSet(np.zeros((5, 1)), np.array([-1000.0, -1001.0, -np.inf, -999.5, -1000.2]))
        self.assertAlmostEqual(ps.weights.sum(), 1.0, delta=1e-12)

    def test_all_weight_on_one_particle(self):
        for scheme in RESAMPLERS:
            result = resample(self.weighted([0, 0, 1, 0]), self.rng, scheme)
            np.testing.assert_array_equal(result.states[:, 0], 2)
            np.testing.assert_array_equal(result.log_weights, 0)

    def test_zero_weight_particles_never_survive(self):
        for scheme in RESAMPLERS:
            for _ in range(200):
                result = resample(self.weighted([0.5, 0.5, 0, 0, 0, 0]), self.rng, scheme)
                self.assertTrue(set(result.states[:, 0]) <= {0, 1})

    def test_multinomial_copy_counts(self):
        n, repetitions = 1000, 10_000
        ps = self.weighted(np.full(n, 1.0 / n))
        counts = np.zeros(n)
        for _ in range(repetitions):
            counts += np.bincount(resample_multinomial(ps, self.rng).states[:, 0], minlength=n)
        standard_error = math.sqrt((1 - 1 / n) / repetitions)
        self.assertLess(np.abs(counts / repetitions - 1.0).max(), 4.5 * standard_error)

    def test_expected_copies_follow_weights(self):
        weights = np.array([0.1, 0.4, 0.2, 0.3])
        ps = self.weighted(np.repeat(weights / 250, 250))
        for scheme in RESAMPLERS:
            counts = np.zeros(1000)
            for _ in range(400):
                counts += np.bincount(resample(ps, self.rng, scheme).states[:, 0], minlength=1000)
            per_group = counts.reshape(4, 250).sum(axis=1) / 400
            np.testing.assert_allclose(per_group, 1000 * weights, rtol=0.02)

    def test_collapsed_weights_are_an_error(self):
        with self.assertRaises(ValueError):
            ParticleSet(np.zeros((3, 1)), np.full(3, -np.inf)).weights


class BootstrapFilterTests(SimpleTestCase):
    def setUp(self):
        self.streams = StreamFactory(404)

    def test_deterministic_path_matches_data(self):
        obs = ObservationModel.exact([1.0, 1.0])
        times, values = np.arange(5.0), np.full(5, 119.0)
        log_p = bootstrap_filter(SsaPropagator(sir_network()), obs, times, values, np.zeros(2), [118, 1], 50, self.streams)
        self.assertAlmostEqual(log_p, 0.0, places=12)

    def test_impossible_data_gives_minus_infinity(self):
        obs = ObservationModel.exact([1.0, 1.0])
        log_p = bootstrap_filter(SsaPropagator(sir_network()), obs, [0.0, 1.0], [119.0, 125.0], (0.001, 0.1),
                                 [118, 1], 50, self.streams)
        self.assertEqual(log_p, -math.inf)

    def test_unbiased_against_master_equation(self):
        kappa, gamma, sd = 5.0, 0.5, 2.0
        times, values, x1 = np.array([0.0, 1.0, 2.0]), np.array([10.5, 9.0, 12.3]), 10
        obs = ObservationModel.gaussian([1.0], [[sd ** 2]])
        exact = forward_likelihood(kappa, gamma, sd, times, values, x1)
        propagator = SsaPropagator(immigration_death_network())
        ratios = np.exp([
            bootstrap_filter(propagator, obs, times, values, (kappa, gamma), [x1], 100, self.streams,
                             iteration=run) - math.log(exact)
            for run in range(500)
        ])
        self.assertLess(abs(ratios.mean() - 1.0), 3 * ratios.std(ddof=1) / math.sqrt(ratios.size))

    def test_single_particle_is_one_path(self):
        net, c = lotka_volterra_network(), LV_TRUTH
        obs = ObservationModel.poisson(2, [0])
        times, values = np.arange(1.0, 6.0), np.array([70.0, 90.0, 110.0, 120.0, 100.0])
        log_p = bootstrap_filter(SsaPropagator(net), obs, times, values, c, [70, 80], 1, self.streams, iteration=3)
        states, expected = np.array([[70, 80]]), obs_log_density(obs, values[0], np.array([70, 80]), c)
        for k in range(1, times.size):
            rng = self.streams.block_generator(stream_keys.EXACT_FILTER, 3, k, 0)
            states = ssa_propagate(net, states, c, times[k - 1], times[k], rng)
            expected += obs_log_density(obs, values[k], states[0], c)
        self.assertAlmostEqual(log_p, expected)

    def test_worker_count_does_not_change_estimate(self):
        obs = ObservationModel.poisson(2, [0])
        times, values = np.arange(1.0, 11.0), np.array([70, 90, 110, 120, 100, 60, 40, 35, 40, 55], dtype=float)
        estimates = {
            workers: bootstrap_filter(SsaPropagator(lotka_volterra_network()), obs, times, values, LV_TRUTH,
                                      [70, 80], 300, self.streams, iteration=1, workers=workers)
            for workers in (1, 4, 8)
        }
        self.assertEqual(len(set(estimates.values())), 1)

    def test_variance_falls_with_particle_count(self):
        rng = self.streams.generator(stream_keys.DATA)
        times = np.arange(1.0, 21.0)
        values = rng.poisson(ssa_grid(lotka_volterra_network(), np.array([70, 80]), LV_TRUTH, times, rng)[:, 0])
        obs = ObservationModel.poisson(2, [0])
        variances = []
        for n in (50, 100, 200, 400):
            estimator = ParticleFilterLikelihood(SsaPropagator(lotka_volterra_network()), obs, times, values,
                                                 [70, 80], n, self.streams)
            variances.append(np.var([estimator(LV_TRUTH, iteration=r) for r in range(100)], ddof=1))
        for fewer, more in zip(variances, variances[1:]):
            self.assertGreater(fewer, more)

    def test_cle_filter_is_finite_and_reproducible(self):
        obs = ObservationModel.gaussian([1.0], [[4.0]])
        times, values = np.array([0.0, 1.0, 2.0]), np.array([10.5, 9.0, 12.3])
        runs = [
            bootstrap_filter(ClePropagator(immigration_death_network(), 0.1), obs, times, values, (5.0, 0.5), [10.0],
                             200, self.streams, purpose=stream_keys.SURROGATE_FILTER, iteration=2)
            for _ in range(2)
        ]
        self.assertTrue(np.isfinite(runs[0]))
        self.assertEqual(runs[0], runs[1])

    def test_rejects_bad_arguments(self):
        obs = ObservationModel.poisson(1, [0])
        with self.assertRaises(ValueError):
            bootstrap_filter(SsaPropagator(immigration_death_network()), obs, [0, 1], [1, 1], (1, 1), [1], 0, self.streams)
        with self.assertRaises(ValueError):
            bootstrap_filter(SsaPropagator(immigration_death_network()), obs, [0, 1], [1, 1], (1, 1), [1], 5,
                             self.streams, resampling='residual')
        with self.assertRaises(ValueError):
            ClePropagator(immigration_death_network(), 0.0)


class ParticleFilterLikelihoodTests(SimpleTestCase):
    def test_counts_calls_and_reuses_streams_per_iteration(self):
        obs = ObservationModel.poisson(2, [0])
        times, values = np.arange(1.0, 6.0), np.array([70.0, 90.0, 110.0, 120.0, 100.0])
        estimator = ParticleFilterLikelihood(SsaPropagator(lotka_volterra_network()), obs, times, values, [70, 80],
                                             64, StreamFactory(1))
        first, again, other = estimator(LV_TRUTH, 5), estimator(LV_TRUTH, 5), estimator(LV_TRUTH, 6)
        self.assertEqual(first, again)
        self.assertNotEqual(first, other)
        self.assertEqual(estimator.calls, 3)

    def test_shared_pool_gives_the_same_estimate(self):
        obs = ObservationModel.poisson(2, [0])
        times, values = np.arange(1.0, 6.0), np.array([70.0, 90.0, 110.0, 120.0, 100.0])
        serial = ParticleFilterLikelihood(SsaPropagator(lotka_volterra_network()), obs, times, values, [70, 80],
                                          200, StreamFactory(2))
        with ParticleFilterLikelihood(SsaPropagator(lotka_volterra_network()), obs, times, values, [70, 80],
                                      200, StreamFactory(2), workers=3) as threaded:
            pool = threaded.pool
            estimates = [threaded(LV_TRUTH, r) for r in range(3)]
            self.assertIs(threaded.pool, pool)
        self.assertIsNone(threaded._pool)
        self.assertEqual(estimates, [serial(LV_TRUTH, r) for r in range(3)])

    def test_serial_estimator_has_no_pool(self):
        obs = ObservationModel.poisson(1, [0])
        estimator = ParticleFilterLikelihood(SsaPropagator(immigration_death_network()), obs, [0.0, 1.0], [1, 1],
                                             [1], 10, StreamFactory(3))
        self.assertIsNone(estimator.pool)
        estimator.close()

    def test_singular_observation_noise_gives_minus_infinity(self):
        obs = ObservationModel.gaussian([1.0], [[0.0]])
        estimator = ParticleFilterLikelihood(SsaPropagator(immigration_death_network()), obs, [0.0, 1.0],
                                             [10.0, 10.0], [10], 20, StreamFactory(4))
        self.assertEqual(estimator((5.0, 0.5), 0), -math.inf)
        self.assertEqual(estimator.calls, 1)


class DivergingPropagator:
    """Moves every particle by one, except that rows with index below ``lost`` become NaN."""
    name = 'diverging'

    def __init__(self, lost):
        self.lost = lost

    def __call__(self, states, c, t0, t1, rng):
        moved = np.asarray(states, dtype=float) + 1.0
        moved[:self.lost] = np.nan
        return moved


class NonFiniteWeightTests(SimpleTestCase):
    def setUp(self):
        self.obs = ObservationModel.poisson(1, [0])
        self.times, self.values = np.array([0.0, 1.0, 2.0]), np.array([5.0, 6.0, 7.0])

    def test_nan_particles_have_zero_weight(self):
        # blocks of 64: the first 10 rows of each block diverge at every step
        log_p = bootstrap_filter(DivergingPropagator(10), self.obs, self.times, self.values, (1.0, 1.0), [5], 64,
                                 StreamFactory(5))
        expected = (stats.poisson.logpmf(5, 5) + stats.poisson.logpmf(6, 6) + stats.poisson.logpmf(7, 7)
                    + 2 * math.log(54 / 64))
        self.assertAlmostEqual(log_p, expected)

    def test_all_nan_particles_give_minus_infinity(self):
        estimator = ParticleFilterLikelihood(DivergingPropagator(64), self.obs, self.times, self.values, [5], 64,
                                             StreamFactory(6))
        self.assertEqual(estimator((1.0, 1.0), 0), -math.inf)
