import json
import tempfile
from io import StringIO
from pathlib import Path

import numpy as np
import pandas as pd
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase

from experiments.bundles import get_bundle
from lna.observations import ObservationModel
from network.reactions import immigration_death_network
from stochkin.exceptions import ConfigurationError
from .config import load_experiment, parse_config
from .models import RunRecord
from .services import InferenceService, read_matrix


def config_text(**fields):
    return json.dumps({'experiment': 'lotka-volterra', 'algorithm': 'pmmh', 'iters': 10, 'seed': 1, **fields})


class ParseConfigTests(SimpleTestCase):
    def test_minimal_config(self):
        config = parse_config(config_text(N=200, iters=1000))
        self.assertEqual(config.N, 200)
        self.assertEqual(config.iters, 1000)
        self.assertEqual(config.burn_in, 0.1)
        self.assertEqual(config.workers, 1)
        self.assertEqual(config.resampling, 'multinomial')
        self.assertIsNone(config.scale)

    def test_lambda_key(self):
        config = parse_config(config_text(**{'lambda': 0.7}))
        self.assertEqual(config.scale, 0.7)
        self.assertEqual(config.to_dict()['lambda'], 0.7)

    def test_tau_defaults_to_one(self):
        self.assertEqual(parse_config(config_text(algorithm='dapmmh-lna')).tau, 1.0)
        self.assertEqual(parse_config(config_text(algorithm='dapmmh-lna', tau=5)).tau, 5.0)

    def test_cle_needs_dt_max(self):
        with self.assertRaisesRegex(ConfigurationError, 'dt_max'):
            parse_config(config_text(algorithm='dapmmh-cle'))
        self.assertEqual(parse_config(config_text(algorithm='dapmmh-cle', dt_max=0.125)).dt_max, 0.125)

    def test_rejected_documents(self):
        bad = [
            config_text(walltime=5),
            config_text(tau=2),
            config_text(algorithm='dapmmh-lna', N1=10),
            config_text(algorithm='dapmmh-lna', dt_max=0.1),
            config_text(algorithm='approx-lna', N=10),
            config_text(algorithm='gibbs'),
            config_text(burn_in=1.0),
            config_text(N=0),
            config_text(**{'lambda': 0}),
            config_text(covariance=[[1, 0]]),
            json.dumps({'experiment': 'lotka-volterra', 'algorithm': 'pmmh', 'iters': 10}),
            '[1, 2]',
            '{"experiment": ',
        ]
        for text in bad:
            with self.subTest(text=text), self.assertRaises(ConfigurationError):
                parse_config(text)

    def test_resolve_from_bundle(self):
        bundle = get_bundle('lotka-volterra')
        config = parse_config(config_text(algorithm='dapmmh-lna')).resolve(bundle)
        self.assertEqual(config.N, 200)
        self.assertEqual(config.scale, 3.0)
        self.assertEqual(config.d_eff, 3)
        self.assertEqual(config.rtol, 1e-6)
        self.assertIsNone(config.N1)
        self.assertEqual(parse_config(config_text()).resolve(bundle, pilot=True).N, 50)
        cle = parse_config(config_text(algorithm='dapmmh-cle', dt_max=0.2, N=80)).resolve(bundle)
        self.assertEqual(cle.N1, 80)
        self.assertIsNone(parse_config(config_text(algorithm='approx-lna')).resolve(bundle).N)

    def test_particle_count_from_tuning_file(self):
        with tempfile.TemporaryDirectory() as directory:
            path = Path(directory) / 'tuning.json'
            path.write_text(json.dumps({'chosen': 150}))
            config = parse_config(config_text(N=str(path))).resolve(get_bundle('lotka-volterra'))
            self.assertEqual(config.N, 150)
            path.write_text('{}')
            with self.assertRaises(ConfigurationError):
                parse_config(config_text(N=str(path))).resolve(get_bundle('lotka-volterra'))


class ModelSpecTests(SimpleTestCase):
    def model_spec(self, **extra):
        net = immigration_death_network()
        obs = ObservationModel.gaussian([[1.0]], Sigma=[[4.0]])
        return {
            'name': 'immigration-death',
            'network': net.to_spec(),
            'observation': obs.to_spec(net.species, net.param_names),
            'prior': [{'kind': 'log-uniform', 'lower': -5, 'upper': 5}] * 2,
            'x1': {'t': 0, 'x': [10]},
            'times': [0, 1, 2],
            'values': [[10.5], [9.0], [12.3]],
            **extra,
        }

    def test_user_model_file(self):
        with tempfile.TemporaryDirectory() as directory:
            path = Path(directory) / 'model.json'
            path.write_text(json.dumps(self.model_spec()))
            bundle = load_experiment(str(path))
        self.assertEqual(bundle.name, 'immigration-death')
        self.assertEqual(bundle.param_names, ('kappa', 'gamma'))
        np.testing.assert_array_equal(bundle.values, [[10.5], [9.0], [12.3]])
        np.testing.assert_allclose(bundle.initial_log_c(), [0.0, 0.0])

    def test_simulated_user_data(self):
        with tempfile.TemporaryDirectory() as directory:
            path = Path(directory) / 'model.json'
            spec = self.model_spec(true_params=[5.0, 0.5], data_seed=3)
            del spec['values']
            path.write_text(json.dumps(spec))
            first = load_experiment(str(path))
            second = load_experiment(str(path))
        self.assertEqual(first.values.shape, (3, 1))
        np.testing.assert_array_equal(first.values, second.values)

    def test_invalid_models(self):
        broken = [
            self.model_spec(colour='red'),
            self.model_spec(values=[[1.0], [2.0]]),
            self.model_spec(prior=[{'kind': 'log-uniform', 'lower': -5, 'upper': 5}]),
            self.model_spec(observation={'kind': 'poisson', 'observed': ['Y']}),
        ]
        with tempfile.TemporaryDirectory() as directory:
            path = Path(directory) / 'model.json'
            for spec in broken:
                path.write_text(json.dumps(spec))
                with self.subTest(spec=spec), self.assertRaises(ConfigurationError):
                    load_experiment(str(path))
        with self.assertRaises(ConfigurationError):
            load_experiment('no-such-experiment')


class InferenceServiceTests(TestCase):
    def setUp(self):
        self.directory = tempfile.TemporaryDirectory()
        self.root = Path(self.directory.name)

    def tearDown(self):
        self.directory.cleanup()

    def config(self, name, **fields):
        return parse_config(config_text(output_dir=str(self.root / name), **fields))

    def test_pmmh_call_count_and_outputs(self):
        report = InferenceService(self.config('pmmh', N=50)).run()
        self.assertEqual(report.filter_calls, 11)
        out = self.root / 'pmmh'
        for name in ('samples.csv', 'trace.csv', 'report.json'):
            self.assertTrue((out / name).exists(), name)
        data = json.loads((out / 'report.json').read_text())
        self.assertEqual(data['filter_calls'], 11)
        self.assertEqual(data['seed'], 1)
        self.assertIsNone(data['stage2_invocations'])
        self.assertIsNone(data['alpha2_given_1'])
        self.assertEqual(data['alpha1'], data['acceptance_rate'])
        self.assertEqual(data['config']['N'], 50)
        self.assertEqual(data['config']['lambda'], 0.7)
        names, samples = read_matrix(out / 'samples.csv')
        self.assertEqual(names, ('c1', 'c2', 'c3'))
        np.testing.assert_array_equal(samples, report.samples)
        trace = pd.read_csv(out / 'trace.csv')
        self.assertEqual(len(trace), 10)
        record = RunRecord.objects.get()
        self.assertEqual(record.filter_calls, 11)
        self.assertEqual(record.particles, 50)
        self.assertEqual(record.algorithm, 'pmmh')
        self.assertIsNone(record.alpha2_given_1)

    def test_same_seed_same_files(self):
        for name, workers in (('first', 1), ('second', 1), ('threaded', 4)):
            InferenceService(self.config(name, N=70, iters=15, workers=workers)).run()
        first = (self.root / 'first' / 'samples.csv').read_bytes()
        self.assertEqual((self.root / 'second' / 'samples.csv').read_bytes(), first)
        self.assertEqual((self.root / 'threaded' / 'samples.csv').read_bytes(), first)

    def test_delayed_acceptance_accounting(self):
        report = InferenceService(self.config('da', algorithm='dapmmh-lna', N=20, iters=30)).run()
        self.assertLessEqual(report.stage2_invocations, 30)
        self.assertEqual(report.filter_calls, 1 + report.stage2_invocations)
        self.assertEqual(report.surrogate_calls, 31 - report.prior_rejections)
        data = json.loads((self.root / 'da' / 'report.json').read_text())
        if data['stage2_invocations']:
            self.assertAlmostEqual(data['alpha2_given_1'] * data['stage2_invocations'], data['accepted'])

    def test_cle_surrogate(self):
        report = InferenceService(self.config('cle', algorithm='dapmmh-cle', dt_max=0.1, N=20, iters=5)).run()
        self.assertEqual(report.filter_calls, 1 + report.stage2_invocations)
        self.assertEqual(report.surrogate_calls, 6 - report.prior_rejections)

    def test_surrogate_only_chain(self):
        report = InferenceService(self.config('approx', algorithm='approx-lna', iters=20)).run()
        self.assertEqual(report.filter_calls, 0)
        self.assertEqual(report.surrogate_calls, 21 - report.prior_rejections)
        self.assertIsNone(RunRecord.objects.get().particles)

    def test_pilot_tune_run_pipeline(self):
        pilot_dir = self.root / 'pilot'
        InferenceService(self.config('pilot', iters=30, N=20), pilot=True).pilot()
        pilot = json.loads((pilot_dir / 'pilot.json').read_text())
        self.assertEqual(pilot['parameters'], ['c1', 'c2', 'c3'])
        self.assertEqual(np.shape(pilot['covariance']), (3, 3))

        service = InferenceService(self.config('tune'))
        result = service.tune(pilot_dir / 'pilot.json', [10, 40], reps=5)
        self.assertIn(result.chosen, (10, 40))
        tuning = json.loads((self.root / 'tune' / 'tuning.json').read_text())
        self.assertEqual(tuning['candidates'], [10, 40])

        config = self.config('main', N=str(self.root / 'tune' / 'tuning.json'),
                             covariance=str(pilot_dir / 'pilot.json'), iters=5)
        service = InferenceService(config)
        self.assertEqual(service.config.N, result.chosen)
        np.testing.assert_allclose(service.covariance(), pilot['covariance'])
        service.run()

    def test_pilot_requires_pmmh(self):
        with self.assertRaises(ConfigurationError):
            InferenceService(self.config('pilot', algorithm='dapmmh-lna'), pilot=True).pilot()

    def test_bad_covariance_and_initial(self):
        service = InferenceService(self.config('bad', covariance=[[1.0, 0.0], [0.0, 1.0]]))
        with self.assertRaises(ConfigurationError):
            service.covariance()
        service = InferenceService(self.config('bad', initial=[0.0, 0.0]))
        with self.assertRaises(ConfigurationError):
            service.initial()

    def test_unwritable_output_dir(self):
        blocker = self.root / 'file'
        blocker.write_text('')
        service = InferenceService(parse_config(config_text(output_dir=str(blocker / 'out'))))
        with self.assertRaises(ConfigurationError):
            service.run()
        self.assertFalse(RunRecord.objects.exists())


class AcceptanceRateTests(TestCase):
    """Short chains on the built-in experiments, checked against loose acceptance bands."""

    def setUp(self):
        self.directory = tempfile.TemporaryDirectory()
        self.root = Path(self.directory.name)

    def tearDown(self):
        self.directory.cleanup()

    def test_abakaliki_tempered_lna_surrogate(self):
        config = parse_config(json.dumps({
            'experiment': 'abakaliki', 'algorithm': 'dapmmh-lna', 'tau': 5, 'lambda': 1.1, 'N': 1000,
            'iters': 300, 'seed': 7, 'workers': 4, 'output_dir': str(self.root / 'abakaliki'),
        }))
        report = InferenceService(config).run()
        self.assertTrue(report.delayed)
        self.assertTrue(np.all(np.isfinite(report.trace)))
        self.assertEqual(report.filter_calls, 1 + report.stage2_invocations)
        self.assertGreaterEqual(report.alpha1, 0.05)
        self.assertLessEqual(report.alpha1, 0.9)
        self.assertGreaterEqual(report.alpha2_given_1, 0.05)
        self.assertLessEqual(report.alpha2_given_1, 0.95)
        beta, gamma = np.exp(report.samples.mean(axis=0))
        self.assertTrue(1e-4 < beta < 1e-2, beta)
        self.assertTrue(1e-2 < gamma < 1.0, gamma)
        data = json.loads((self.root / 'abakaliki' / 'report.json').read_text())
        self.assertEqual(data['config']['tau'], 5)
        self.assertEqual(RunRecord.objects.get().experiment, 'abakaliki')

    def test_cle_stage_two_rate_falls_as_step_grows(self):
        rates = {}
        for dt_max in (0.0625, 0.5):
            config = parse_config(config_text(
                algorithm='dapmmh-cle', dt_max=dt_max, N=100, N1=100, iters=400, seed=3,
                covariance=(0.001 * np.eye(3)).tolist(), output_dir=str(self.root / f'cle-{dt_max}'),
            ))
            report = InferenceService(config).run()
            self.assertGreater(report.stage2_invocations, 0)
            rates[dt_max] = report.alpha2_given_1
        self.assertGreater(rates[0.0625], rates[0.5])


class CommandTests(TestCase):
    def setUp(self):
        self.directory = tempfile.TemporaryDirectory()
        self.root = Path(self.directory.name)

    def tearDown(self):
        self.directory.cleanup()

    def test_run_command(self):
        path = self.root / 'config.json'
        path.write_text(config_text(N=30, iters=12))
        out = StringIO()
        call_command('run', str(path), output_dir=str(self.root / 'out'), stdout=out)
        self.assertIn('13 exact filter calls', out.getvalue())
        self.assertEqual(RunRecord.objects.count(), 1)

        diagnose = StringIO()
        call_command('diagnose', str(self.root / 'out' / 'samples.csv'), stdout=diagnose)
        summary = json.loads(diagnose.getvalue())
        self.assertEqual(summary['parameters'], ['c1', 'c2', 'c3'])
        self.assertEqual(summary['draws'], 11)

    def test_flags_without_config_file(self):
        call_command('run', experiment='lotka-volterra', algorithm='pmmh', iters=5, seed=3, N='20',
                     output_dir=str(self.root / 'flags'), stdout=StringIO())
        data = json.loads((self.root / 'flags' / 'report.json').read_text())
        self.assertEqual(data['config']['N'], 20)
        self.assertEqual(data['seed'], 3)

    def test_errors_are_one_json_line(self):
        path = self.root / 'config.json'
        path.write_text(config_text(algorithm='dapmmh-cle'))
        with self.assertRaises(CommandError) as caught:
            call_command('run', str(path), stdout=StringIO())
        message = json.loads(str(caught.exception))
        self.assertEqual(message['error'], 'ConfigurationError')
        self.assertIn('dt_max', message['message'])

    def test_simulate_command(self):
        output = self.root / 'paths.csv'
        call_command('simulate', experiment='lotka-volterra', seed=4, replicates=2, output=str(output),
                     stdout=StringIO())
        frame = pd.read_csv(output)
        self.assertEqual(len(frame), 100)
        self.assertEqual(list(frame.columns), ['replicate', 't', 'prey', 'predator', 'y1'])

        call_command('simulate', experiment='abakaliki', seed=4, output=str(output), method='cle',
                     param=['beta=0.001', 'gamma=0.1'], stdout=StringIO())
        self.assertEqual(len(pd.read_csv(output)), 77)
        with self.assertRaises(CommandError):
            call_command('simulate', experiment='abakaliki', seed=4, output=str(output), stdout=StringIO())
