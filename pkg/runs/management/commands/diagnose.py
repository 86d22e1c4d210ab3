import numpy as np

from mcmc.diagnostics import acceptance_rate, density_grid, ess_per_param
from runs.services import FLOAT_FORMAT, read_matrix
from stochkin.exceptions import ConfigurationError
from ._common import StochKinCommand


class Command(StochKinCommand):
    help = 'ESS and acceptance rate of an existing samples.csv'

    def add_arguments(self, parser):
        parser.add_argument('samples', help='samples.csv written by run or pilot')
        parser.add_argument('--burn-in', type=float, default=0.0,
                            help='Fraction of further draws to discard (default: 0)')
        parser.add_argument('--density', help='Also write a kernel-density grid to this CSV')

    def run(self, **options):
        if not 0 <= options['burn_in'] < 1:
            raise ConfigurationError(f"burn-in must lie in [0, 1), got {options['burn_in']}")
        names, samples = read_matrix(options['samples'])
        samples = samples[int(options['burn_in'] * samples.shape[0]):]
        ess = ess_per_param(samples)
        self.write_json({
            'parameters': list(names),
            'draws': int(samples.shape[0]),
            'ess_per_param': dict(zip(names, ess.tolist())),
            'ess_min': float(np.min(ess)),
            'acceptance_rate': acceptance_rate(samples),
            'posterior_mean_log': dict(zip(names, samples.mean(axis=0).tolist())),
        })
        if options['density']:
            density_grid(samples, names).to_csv(options['density'], index=False, float_format=FLOAT_FORMAT)
