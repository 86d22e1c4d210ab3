import numpy as np
import pandas as pd

from cle.langevin import cle_grid
from network.reactions import ParamVector
from runs.config import load_experiment
from runs.services import FLOAT_FORMAT
from ssa.simulators import ssa_grid
from stochkin.exceptions import ConfigurationError
from stochkin.streams import SIMULATE, StreamFactory
from ._common import StochKinCommand


def parse_params(pairs, bundle):
    """Parameter vector from name=value overrides on top of the bundle's truth."""
    values = dict(bundle.true_params.as_dict()) if bundle.true_params is not None else {}
    for pair in pairs or ():
        name, _, value = pair.partition('=')
        if name not in bundle.param_names:
            raise ConfigurationError(f"Unknown parameter {name!r}; parameters are {list(bundle.param_names)}")
        values[name] = float(value)
    missing = [name for name in bundle.param_names if name not in values]
    if missing:
        raise ConfigurationError(f"{bundle.name} has no true parameters; give values for {missing}")
    return ParamVector([values[name] for name in bundle.param_names], bundle.param_names)


class Command(StochKinCommand):
    help = 'Forward trajectories (exact or chemical Langevin) on the observation grid of an experiment'

    def add_arguments(self, parser):
        parser.add_argument('--experiment', required=True)
        parser.add_argument('--seed', type=int, required=True)
        parser.add_argument('--output', required=True, help='CSV to write')
        parser.add_argument('--method', choices=['ssa', 'cle'], default='ssa')
        parser.add_argument('--dt-max', type=float, default=None, help='Euler-Maruyama step bound for cle')
        parser.add_argument('--replicates', type=int, default=1)
        parser.add_argument('--param', action='append', help='name=value, overriding the true parameter')

    def run(self, **options):
        bundle = load_experiment(options['experiment'])
        c = parse_params(options['param'], bundle)
        if options['replicates'] < 1:
            raise ConfigurationError("At least one replicate is needed")
        dt_max = options['dt_max'] or bundle.defaults['dt_max']
        streams = StreamFactory(options['seed'])
        frames = []
        for replicate in range(options['replicates']):
            rng = streams.generator(SIMULATE, replicate)
            if options['method'] == 'ssa':
                path = ssa_grid(bundle.network, bundle.x1, c, bundle.times, rng)
            else:
                path = cle_grid(bundle.network, bundle.x1, c, bundle.times, dt_max, rng)
            observed = bundle.obs.sample(np.maximum(path, 0), c, rng)
            frame = pd.DataFrame(path, columns=list(bundle.network.species))
            for j in range(observed.shape[1]):
                frame[f'y{j + 1}'] = observed[:, j]
            frame.insert(0, 't', bundle.times)
            frame.insert(0, 'replicate', replicate)
            frames.append(frame)
        pd.concat(frames, ignore_index=True).to_csv(options['output'], index=False, float_format=FLOAT_FORMAT)
        self.stdout.write(self.style.SUCCESS(
            f"Wrote {options['replicates']} {options['method']} trajectories of {bundle.name} to {options['output']}"
        ))
