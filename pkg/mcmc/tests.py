import math

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings, strategies as st
from scipy import integrate

from experiments.bundles import get_bundle
from smc.filters import ParticleFilterLikelihood, SsaPropagator
from stochkin.exceptions import ConfigurationError
from stochkin.streams import PILOT, StreamFactory
from .diagnostics import acceptance_rate, autocorrelation, density_grid, ess, ess_per_param
from .priors import ExponentialPrior, GammaPrior, JointPrior, LogUniformPrior, prior_from_spec
from .proposals import ProposalSpec, rw_propose
from .samplers import RunReport, dapmmh_run, mh_accept_prob, pmmh_run
from .tuning import choose_particles, pilot_summary, pilot_tune_particles


class CellLikelihood:
    """
    Log-likelihood that is constant on each unit cell of log c, optionally with
    log-normal noise whose natural-scale mean is one.
    """

    def __init__(self, weights, noise=0.0, seed=0):
        self.log_weights = np.log(np.asarray(weights, dtype=float))
        self.noise = noise
        self.rng = np.random.default_rng(seed)
        self.calls = 0

    def __call__(self, params, iteration=0):
        self.calls += 1
        cell = min(int(math.floor(params.log_values[0])), self.log_weights.size - 1)
        value = self.log_weights[cell]
        if self.noise:
            value += self.rng.normal(-0.5 * self.noise ** 2, self.noise)
        return value


def occupancy(report, cells):
    counts = np.bincount(np.minimum(np.floor(report.samples[:, 0]).astype(int), cells - 1), minlength=cells)
    return counts / counts.sum()


def box_setup(cells, step=2.0):
    prior = JointPrior([LogUniformPrior(0.0, cells)])
    prop = ProposalSpec(1.0, [[(step / 2.38) ** 2]])
    return prior, prop


class AcceptProbTests(SimpleTestCase):
    def test_values(self):
        self.assertEqual(mh_accept_prob(math.log(1), math.log(2)), 0.5)
        self.assertEqual(mh_accept_prob(-3.2, -3.2), 1.0)
        self.assertEqual(mh_accept_prob(-math.inf, 0.0), 0.0)
        self.assertEqual(mh_accept_prob(0.0, -math.inf), 1.0)
        self.assertEqual(mh_accept_prob(math.nan, 0.0), 0.0)
        with self.assertRaises(ValueError):
            mh_accept_prob(-math.inf, -math.inf)

    def test_detailed_balance_identity_example(self):
        a, a_star = 2.0, 1.0
        F = lambda x, y: mh_accept_prob(math.log(y), math.log(x))
        self.assertEqual(a * F(a, a_star), a_star * F(a_star, a))

    @given(
        st.floats(min_value=1e-6, max_value=1e6), st.floats(min_value=1e-6, max_value=1e6),
        st.floats(min_value=1e-6, max_value=1e6),
    )
    @settings(deadline=None, max_examples=10_000)
    def test_identities(self, a, a_star, b):
        F = lambda x, y: mh_accept_prob(math.log(y), math.log(x))
        self.assertAlmostEqual(a * F(a, a_star), a_star * F(a_star, a), delta=1e-12 * max(a, a_star))
        self.assertAlmostEqual(F(b * a, b * a_star), F(a, a_star), delta=1e-12)


class ProposalTests(SimpleTestCase):
    def test_innovation_covariance(self):
        prop = ProposalSpec(0.7, np.eye(3))
        np.testing.assert_allclose(prop.innovation_covariance, 0.7 * 2.38 ** 2 / 3 * np.eye(3))
        self.assertAlmostEqual(prop.innovation_covariance[0, 0], 1.3217, places=4)

    def test_d_eff_overrides_dimension(self):
        prop = ProposalSpec(1.0, np.eye(8), d_eff=3)
        self.assertAlmostEqual(prop.innovation_covariance[0, 0], 2.38 ** 2 / 3)

    def test_tiny_scale_does_not_move(self):
        log_c = np.array([0.1, -5.3, -0.5])
        moved = rw_propose(log_c, ProposalSpec(1e-30, np.eye(3)), np.random.default_rng(0))
        np.testing.assert_allclose(moved, log_c, rtol=0, atol=1e-14)

    def test_empirical_covariance(self):
        covariance = np.array([[0.04, 0.01, 0.0], [0.01, 0.09, -0.02], [0.0, -0.02, 0.25]])
        prop = ProposalSpec(0.7, covariance)
        rng = np.random.default_rng(1)
        draws = np.array([rw_propose(np.zeros(3), prop, rng) for _ in range(100_000)])
        target = prop.innovation_covariance
        tolerance = 0.05 * np.sqrt(np.outer(np.diag(target), np.diag(target)))
        self.assertTrue(np.all(np.abs(np.cov(draws, rowvar=False) - target) <= tolerance))

    def test_rejects_bad_specs(self):
        with self.assertRaises(ValueError):
            ProposalSpec(0.0, np.eye(2))
        with self.assertRaises(ValueError):
            ProposalSpec(1.0, np.ones(3))


class PriorTests(SimpleTestCase):
    def test_log_uniform_support(self):
        prior = JointPrior([LogUniformPrior(-8, 8)] * 3)
        self.assertAlmostEqual(prior.log_density(np.log([1.0, 0.005, 0.6])), -3 * math.log(16))
        self.assertEqual(prior.log_density([0.0, 8.5, 0.0]), -math.inf)
        self.assertEqual(prior.log_density([0.0, 8.0, 0.0]), -math.inf)

    def test_densities_integrate_to_one_on_log_scale(self):
        for prior in (GammaPrior(19.36, 44), GammaPrior(10, 1e4), ExponentialPrior(0.01), ExponentialPrior(1.0)):
            total, _ = integrate.quad(lambda u: math.exp(prior.log_density(u)), -40, 15,
                                      points=[prior.mean_log()], limit=400)
            self.assertAlmostEqual(total, 1.0, places=6)

    def test_gamma_prior_mean_matches_truth(self):
        self.assertAlmostEqual(19.36 / 44, 0.44)
        self.assertAlmostEqual(math.exp(GammaPrior(1e6, 1e6).mean_log()), 1.0, places=5)

    def test_spec_round_trip(self):
        prior = JointPrior([LogUniformPrior(-8, 8), GammaPrior(10, 100), ExponentialPrior(0.1)])
        rebuilt = JointPrior.from_spec(prior.to_spec())
        point = np.array([0.3, -2.0, 1.5])
        self.assertEqual(rebuilt.log_density(point), prior.log_density(point))
        with self.assertRaises(ValueError):
            prior_from_spec({'kind': 'beta'})

    def test_conjugate_posterior_recovered(self):
        # c ~ Gamma(3, 2), y_i ~ Poisson(c): posterior is Gamma(3 + sum y, 2 + n)
        shape, rate, y = 3.0, 2.0, np.array([4, 2, 5, 3, 6])

        class PoissonLikelihood:
            calls = 0

            def __call__(self, params, iteration=0):
                c = params.values[0]
                return float(np.sum(y * math.log(c) - c))

        report = pmmh_run(JointPrior([GammaPrior(shape, rate)]), PoissonLikelihood(), ProposalSpec(1.0, [[0.1]]),
                          [0.0], 60_000, StreamFactory(3), burn_in=0.05)
        draws = np.exp(report.samples[:, 0])
        expected = (shape + y.sum()) / (rate + y.size)
        self.assertAlmostEqual(draws.mean(), expected, delta=4 * draws.std() / math.sqrt(report.ess_min))


class PmmhTests(SimpleTestCase):
    def test_prior_rejection_skips_estimator(self):
        prior, _ = box_setup(5)
        estimator = CellLikelihood([1, 3, 2, 5, 4])
        report = pmmh_run(prior, estimator, ProposalSpec(1.0, [[25.0]]), [2.5], 500, StreamFactory(1))
        self.assertGreater(report.prior_rejections, 0)
        self.assertEqual(estimator.calls, 1 + 500 - report.prior_rejections)
        self.assertEqual(report.filter_calls, estimator.calls)

    def test_occupancy_matches_posterior(self):
        prior, prop = box_setup(2)
        report = pmmh_run(prior, CellLikelihood([1, 3]), prop, [0.5], 200_000, StreamFactory(2), burn_in=0.0)
        self.assertAlmostEqual(occupancy(report, 2)[1], 0.75, delta=0.01)

    def test_same_seed_same_chain(self):
        prior, prop = box_setup(5)
        first = pmmh_run(prior, CellLikelihood([1, 3, 2, 5, 4]), prop, [2.5], 300, StreamFactory(8))
        second = pmmh_run(prior, CellLikelihood([1, 3, 2, 5, 4]), prop, [2.5], 300, StreamFactory(8))
        np.testing.assert_array_equal(first.chain, second.chain)

    def test_impossible_start_is_an_error(self):
        prior, prop = box_setup(2)
        with self.assertRaises(ConfigurationError):
            pmmh_run(prior, CellLikelihood([0, 1]), prop, [0.5], 10, StreamFactory(0))
        with self.assertRaises(ConfigurationError):
            pmmh_run(prior, CellLikelihood([1, 1]), prop, [3.0], 10, StreamFactory(0))

    def test_surrogate_chain_reports_surrogate_calls(self):
        prior, prop = box_setup(2)
        report = pmmh_run(prior, CellLikelihood([1, 3]), prop, [0.5], 100, StreamFactory(2), exact=False,
                          algorithm='approx-lna')
        self.assertEqual(report.filter_calls, 0)
        self.assertGreater(report.surrogate_calls, 0)
        self.assertTrue(np.all(np.isnan(report.trace[:, 0])))

    def test_single_stage_report_has_no_stage_two_rate(self):
        prior, prop = box_setup(2)
        report = pmmh_run(prior, CellLikelihood([1, 3]), prop, [0.5], 400, StreamFactory(3))
        self.assertFalse(report.delayed)
        self.assertIsNone(report.stage2_invocations)
        self.assertIsNone(report.alpha2_given_1)
        self.assertEqual(report.alpha1, report.acceptance_rate)
        self.assertIsNone(report.summary()['alpha2_given_1'])

    def test_failed_estimates_are_never_accepted(self):
        prior, prop = box_setup(2)
        with np.errstate(invalid='ignore'):
            report = pmmh_run(prior, CellLikelihood([1, np.nan]), prop, [0.5], 2000, StreamFactory(4), burn_in=0.0)
        self.assertTrue(np.all(report.samples < 1.0))
        self.assertGreater(report.accepted, 0)


class DelayedAcceptanceTests(SimpleTestCase):
    cells = 5
    weights = np.array([1.0, 3.0, 2.0, 5.0, 4.0])

    def posterior_distance(self, report):
        return 0.5 * np.abs(occupancy(report, self.cells) - self.weights / self.weights.sum()).sum()

    def test_biased_surrogate_keeps_exact_target(self):
        prior, prop = box_setup(self.cells)
        report = dapmmh_run(prior, CellLikelihood(self.weights), CellLikelihood([5, 1, 1, 2, 8]), prop, [2.5],
                            1_000_000, StreamFactory(10), burn_in=0.0)
        self.assertLess(self.posterior_distance(report), 0.01)

    def test_noisy_surrogate_and_noisy_exact_estimator(self):
        prior, prop = box_setup(self.cells)
        report = dapmmh_run(prior, CellLikelihood(self.weights, noise=0.5, seed=1),
                            CellLikelihood([5, 1, 1, 2, 8], noise=0.5, seed=2), prop, [2.5], 400_000,
                            StreamFactory(11), burn_in=0.0)
        self.assertLess(self.posterior_distance(report), 0.015)

    def test_two_point_biased_surrogate(self):
        prior, prop = box_setup(2)
        report = dapmmh_run(prior, CellLikelihood([1, 1]), CellLikelihood([10, 1]), prop, [0.5], 300_000,
                            StreamFactory(12), burn_in=0.0)
        self.assertAlmostEqual(occupancy(report, 2)[0], 0.5, delta=0.01)

    def test_two_point_unbiased_noisy_surrogate(self):
        prior, prop = box_setup(2)
        report = dapmmh_run(prior, CellLikelihood([1, 2]), CellLikelihood([1, 2], noise=0.8, seed=5), prop, [0.5],
                            300_000, StreamFactory(13), burn_in=0.0)
        self.assertAlmostEqual(occupancy(report, 2)[1], 2 / 3, delta=0.01)

    def test_exact_surrogate_never_rejects_at_stage_two(self):
        prior, prop = box_setup(self.cells)
        report = dapmmh_run(prior, CellLikelihood(self.weights), CellLikelihood(self.weights), prop, [2.5], 50_000,
                            StreamFactory(14))
        self.assertEqual(report.alpha2_given_1, 1.0)
        plain = pmmh_run(prior, CellLikelihood(self.weights), prop, [2.5], 50_000, StreamFactory(15))
        self.assertAlmostEqual(report.acceptance_rate, plain.acceptance_rate, delta=0.015)

    def test_failed_exact_estimates_are_never_accepted(self):
        prior, prop = box_setup(2)
        with np.errstate(invalid='ignore'):
            report = dapmmh_run(prior, CellLikelihood([1, np.nan]), CellLikelihood([1, 1]), prop, [0.5], 2000,
                                StreamFactory(17), burn_in=0.0)
        self.assertTrue(report.delayed)
        self.assertGreater(report.stage2_invocations, report.accepted)
        self.assertTrue(np.all(report.samples < 1.0))

    def test_call_accounting(self):
        prior, prop = box_setup(self.cells)
        exact, surrogate = CellLikelihood(self.weights), CellLikelihood([5, 1, 1, 2, 8])
        report = dapmmh_run(prior, exact, surrogate, prop, [2.5], 5000, StreamFactory(16))
        self.assertEqual(report.filter_calls, 1 + report.stage2_invocations)
        self.assertEqual(exact.calls, report.filter_calls)
        self.assertEqual(surrogate.calls, 1 + 5000 - report.prior_rejections)
        self.assertAlmostEqual(report.alpha1 * 5000, report.stage2_invocations)
        self.assertLessEqual(report.stage2_invocations, 5000)
        self.assertAlmostEqual(report.alpha2_given_1 * report.stage2_invocations, report.accepted)
        self.assertEqual(report.samples.shape, (4500, 1))
        trace = report.trace
        self.assertTrue(np.all(np.isfinite(trace)))

    def test_summary_is_serialisable(self):
        prior, prop = box_setup(self.cells)
        report = dapmmh_run(prior, CellLikelihood(self.weights), CellLikelihood(self.weights), prop, [2.5], 200,
                            StreamFactory(17), names=('theta',))
        summary = report.summary()
        self.assertEqual(summary['parameters'], ['theta'])
        self.assertIn('theta', summary['ess_per_param'])
        self.assertEqual(summary['filter_calls'], report.filter_calls)


class DiagnosticsTests(SimpleTestCase):
    def test_iid_chain(self):
        x = np.random.default_rng(0).standard_normal(100_000)
        self.assertTrue(0.9 <= ess(x) / x.size <= 1.1)

    def test_ar1_chain(self):
        rng, n, rho = np.random.default_rng(1), 100_000, 0.5
        x = np.empty(n)
        x[0] = rng.standard_normal()
        for k in range(1, n):
            x[k] = rho * x[k - 1] + math.sqrt(1 - rho ** 2) * rng.standard_normal()
        self.assertAlmostEqual(ess(x) / (n / 3), 1.0, delta=0.1)

    def test_constant_chain(self):
        self.assertEqual(ess(np.full(50, 2.0)), 1.0)

    def test_short_chain_is_rejected(self):
        with self.assertRaises(ValueError):
            ess(np.arange(9.0))

    def test_autocorrelation_starts_at_one(self):
        rho = autocorrelation(np.random.default_rng(2).standard_normal(1000))
        self.assertAlmostEqual(rho[0], 1.0)
        self.assertEqual(rho.size, 1000)

    def test_per_parameter_and_acceptance(self):
        samples = np.repeat(np.random.default_rng(3).standard_normal((500, 2)), 2, axis=0)
        self.assertEqual(ess_per_param(samples).shape, (2,))
        self.assertAlmostEqual(acceptance_rate(samples), 499 / 999)

    def test_density_grid(self):
        samples = np.random.default_rng(4).standard_normal((2000, 2))
        grid = density_grid(samples, ('a', 'b'))
        self.assertEqual(len(grid), 400)
        self.assertEqual(list(grid.columns), ['parameter', 'log_value', 'density'])
        a = grid[grid.parameter == 'a']
        self.assertAlmostEqual(np.trapz(a.density, a.log_value), 1.0, delta=0.05)

    def test_density_grid_skips_frozen_chains(self):
        samples = np.column_stack([np.zeros(100), np.random.default_rng(5).standard_normal(100)])
        with self.assertLogs('mcmc.diagnostics', level='WARNING'):
            grid = density_grid(samples, ('stuck', 'free'))
        self.assertEqual(set(grid.parameter), {'free'})


class TuningTests(SimpleTestCase):
    def test_selection_rules(self):
        self.assertEqual(choose_particles([50, 100, 200], [3.0, 1.2, 0.6]), (100, True))
        with self.assertLogs('mcmc.tuning', level='WARNING'):
            self.assertEqual(choose_particles([50, 100, 200], [3.0, 0.8, 0.4]), (100, False))
        with self.assertLogs('mcmc.tuning', level='WARNING'):
            self.assertEqual(choose_particles([50, 100, 200], [9.0, 5.0, 2.0]), (200, False))

    def test_noisy_estimator(self):
        def make_estimator(n):
            def estimator(params, iteration):
                return np.random.default_rng([n, iteration]).normal(0.0, math.sqrt(120.0 / n))
            return estimator

        result = pilot_tune_particles(make_estimator, None, [250, 50, 100, 150, 200], reps=1000)
        self.assertEqual(result.candidates, [50, 100, 150, 200, 250])
        self.assertEqual(result.chosen, 100)
        self.assertTrue(result.in_band)
        self.assertTrue(all(a > b for a, b in zip(result.variances, result.variances[1:])))

    def test_lotka_volterra_particle_count(self):
        bundle = get_bundle('lotka-volterra')
        streams = StreamFactory(21)

        def make_estimator(n):
            return ParticleFilterLikelihood(SsaPropagator(bundle.network), bundle.obs, bundle.times, bundle.values,
                                            bundle.x1, n, streams, PILOT, workers=4)

        result = pilot_tune_particles(make_estimator, bundle.true_params, [50, 100, 150, 200, 300, 400], reps=50)
        self.assertGreaterEqual(result.chosen, 100)
        self.assertLessEqual(result.chosen, 400)
        self.assertLessEqual(result.variances[result.candidates.index(result.chosen)], 1.5)
        self.assertGreater(result.variances[0], result.variances[-1])

    def test_deterministic_estimator(self):
        with self.assertLogs('mcmc.tuning', level='WARNING'):
            result = pilot_tune_particles(lambda n: (lambda params, iteration: -12.5), None, [50, 100], reps=10)
        self.assertEqual(result.variances, [0.0, 0.0])
        self.assertEqual(result.chosen, 50)
        self.assertFalse(result.in_band)
        self.assertEqual(result.to_dict()['chosen'], 50)

    def test_pilot_summary(self):
        rng = np.random.default_rng(6)
        chain = rng.normal([0.0, -5.0], [0.1, 0.2], size=(20_000, 2))
        report = RunReport('pmmh', ('c1', 'c2'), chain, np.zeros((20_000, 2)), 0, 20_000, 100, None, 0, 20_001, 0, 1.0)
        summary = pilot_summary(report)
        np.testing.assert_allclose(summary.covariance, np.diag([0.01, 0.04]), rtol=0.05, atol=5e-4)
        np.testing.assert_allclose(summary.c_hat, np.exp([0.005, -5.0 + 0.02]), rtol=0.01)
        self.assertEqual(summary.to_dict()['parameters'], ['c1', 'c2'])
