import json
import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from lna.likelihood import lna_log_marginal
from network.reactions import SystemState, hazards
from stochkin.exceptions import ConfigurationError, DataError
from .bundles import (
    ABAKALIKI_CSV, ExperimentBundle, build_abakaliki, build_gene_expression, build_lotka_volterra,
    densify_removals, get_bundle, load_removals,
)


class LotkaVolterraBundleTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.bundle = build_lotka_volterra()

    def test_network(self):
        np.testing.assert_array_equal(self.bundle.network.stoich, [[1, -1, 0], [0, 1, -1]])
        h = hazards(self.bundle.network, [70, 80], self.bundle.true_params)
        np.testing.assert_allclose(h, [70.0, 28.0, 48.0])

    def test_data_shape(self):
        self.assertEqual(self.bundle.values.shape, (50, 1))
        np.testing.assert_array_equal(self.bundle.times, np.arange(1, 51))
        self.assertEqual(self.bundle.x1.t, 1.0)
        np.testing.assert_array_equal(self.bundle.x1.x, [70, 80])
        self.assertTrue(np.all(self.bundle.values >= 0))

    def test_prior_support(self):
        prior = self.bundle.prior
        self.assertGreater(prior.log_density(self.bundle.true_params.log_values), -math.inf)
        self.assertEqual(prior.log_density([0.0, -8.5, 0.0]), -math.inf)
        np.testing.assert_allclose(self.bundle.initial_log_c(), np.log([1.0, 0.005, 0.6]))

    def test_data_regenerate_from_seed(self):
        np.testing.assert_array_equal(build_lotka_volterra().values, self.bundle.values)
        self.assertFalse(np.array_equal(build_lotka_volterra(seed=99).values, self.bundle.values))

    def test_defaults(self):
        self.assertEqual(self.bundle.scale('pmmh'), 0.7)
        self.assertEqual(self.bundle.scale('dapmmh-lna'), 3.0)
        self.assertEqual(self.bundle.scale('dapmmh-cle'), 1.0)
        self.assertEqual(self.bundle.defaults['N'], 200)
        self.assertEqual(self.bundle.defaults['d_eff'], 3)


class GeneExpressionBundleTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.bundle = build_gene_expression()

    def test_network(self):
        np.testing.assert_array_equal(self.bundle.network.stoich, [[1, -1, 0, 0], [0, 0, 1, -1]])
        self.assertFalse(self.bundle.network.is_time_homogeneous)

    def test_grid(self):
        self.assertEqual(self.bundle.times.size, 100)
        np.testing.assert_allclose(np.diff(self.bundle.times), 0.25)
        self.assertEqual(self.bundle.times[-1], 24.75)

    def test_observes_protein_with_inferred_noise(self):
        np.testing.assert_array_equal(self.bundle.obs.G, [[0.0], [1.0]])
        self.assertEqual(self.bundle.obs.sd_indices, (7,))
        self.assertEqual(self.bundle.values.shape, (100, 1))

    def test_prior_means(self):
        gamma_r = self.bundle.prior.priors[0]
        self.assertAlmostEqual(gamma_r.shape / gamma_r.rate, 0.44)
        self.assertAlmostEqual(self.bundle.true_params['gamma_R'], 0.44)
        self.assertGreater(self.bundle.prior.log_density(self.bundle.true_params.log_values), -math.inf)


class AbakalikiBundleTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.bundle = build_abakaliki()

    def test_table(self):
        table = load_removals()
        self.assertEqual(len(table), 23)
        self.assertEqual(table['removals'].sum(), 30)
        self.assertEqual(table['removals'][table['day'] <= 25].sum(), 7)

    def test_daily_grid(self):
        np.testing.assert_array_equal(self.bundle.times, np.arange(77))
        y = self.bundle.values[:, 0]
        self.assertEqual(y[0], 119)
        self.assertEqual(y[25], 113)
        self.assertEqual(y[24], 116)
        self.assertEqual(y[76], 90)
        self.assertTrue(np.all(np.diff(y) <= 0))

    def test_initial_state_matches_first_observation(self):
        np.testing.assert_array_equal(self.bundle.x1.x, [118, 1])
        self.assertEqual(self.bundle.obs.mean(self.bundle.x1.x)[0], self.bundle.values[0, 0])
        self.assertIsNone(self.bundle.true_params)
        np.testing.assert_allclose(self.bundle.initial_log_c(), self.bundle.prior.mean_log())

    def test_densify(self):
        times, cumulative = densify_removals([0, 2, 3], [1, 2, 1], last_day=5)
        np.testing.assert_array_equal(times, np.arange(6))
        np.testing.assert_array_equal(cumulative, [1, 1, 3, 4, 4, 4])
        with self.assertRaises(DataError):
            densify_removals([0, 7], [1, 1], last_day=5)

    def test_bad_table(self):
        with tempfile.TemporaryDirectory() as directory:
            path = Path(directory) / 'removals.csv'
            path.write_text('day,removals\n0,1\n5,1\n3,2\n')
            with self.assertRaises(DataError):
                load_removals(path)
            path.write_text('when,count\n0,1\n')
            with self.assertRaises(DataError):
                load_removals(path)

    def test_csv_is_the_bundled_table(self):
        self.assertTrue(ABAKALIKI_CSV.read_text().startswith('day,removals\n0,1\n13,1\n'))


class BundleSpecTests(SimpleTestCase):
    def test_round_trip_through_json(self):
        for name in ('lotka-volterra', 'gene-expression', 'abakaliki'):
            bundle = get_bundle(name)
            spec = json.loads(json.dumps(bundle.to_spec()))
            rebuilt = ExperimentBundle.from_spec(spec)
            self.assertEqual(rebuilt.to_spec(), bundle.to_spec())

    def test_round_trip_keeps_likelihood(self):
        bundle = get_bundle('lotka-volterra')
        rebuilt = ExperimentBundle.from_spec(json.loads(json.dumps(bundle.to_spec())))
        args = (bundle.times, bundle.values, bundle.true_params, bundle.x1)
        expected = lna_log_marginal(bundle.network, bundle.obs, *args)
        self.assertAlmostEqual(lna_log_marginal(rebuilt.network, rebuilt.obs, *args), expected, delta=1e-4)

    def test_missing_values_are_simulated_from_seed(self):
        bundle = get_bundle('lotka-volterra')
        spec = bundle.to_spec()
        del spec['values']
        np.testing.assert_array_equal(ExperimentBundle.from_spec(spec).values, bundle.values)
        spec['data_seed'] = None
        with self.assertRaises(DataError):
            ExperimentBundle.from_spec(spec)

    def test_inconsistent_bundle(self):
        bundle = get_bundle('abakaliki')
        with self.assertRaises(DataError):
            ExperimentBundle(bundle.name, bundle.network, bundle.obs, bundle.prior, bundle.x1,
                             bundle.times[:-1], bundle.values)
        with self.assertRaises(DataError):
            ExperimentBundle(bundle.name, bundle.network, bundle.obs, bundle.prior, SystemState(1.0, [118, 1]),
                             bundle.times, bundle.values)

    def test_registry(self):
        self.assertIs(get_bundle('abakaliki'), get_bundle('abakaliki'))
        with self.assertRaises(ConfigurationError):
            get_bundle('brusselator')
