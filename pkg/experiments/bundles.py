"""
The built-in experiments: network, observation model, priors, initial state,
data and the tuning defaults that go with them.

Synthetic data sets are regenerated from the stated truth with the seeds below,
so a bundle built twice holds bit-identical observations.
"""
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from lna.observations import ObservationModel
from mcmc.priors import ExponentialPrior, GammaPrior, JointPrior, LogUniformPrior
from network.reactions import (
    ParamVector, ReactionNetwork, SystemState, gene_expression_network, lotka_volterra_network, sir_network,
)
from ssa.simulators import ssa_grid
from stochkin.exceptions import ConfigurationError, DataError
from stochkin.streams import DATA, StreamFactory

logger = logging.getLogger(__name__)

DATA_DIR = Path(__file__).resolve().parent / 'data'
ABAKALIKI_CSV = DATA_DIR / 'abakaliki.csv'

LOTKA_VOLTERRA_SEED = 1
GENE_EXPRESSION_SEED = 2
ABAKALIKI_POPULATION = 120

ALGORITHMS = ('pmmh', 'dapmmh-lna', 'dapmmh-cle', 'approx-lna', 'approx-cle')


def _scales(pmmh, lna, cle):
    """Random walk scale lambda for every algorithm; surrogate-only chains share their delayed scheme's value."""
    return {'pmmh': pmmh, 'dapmmh-lna': lna, 'dapmmh-cle': cle, 'approx-lna': lna, 'approx-cle': cle}


DEFAULTS = {
    'lambda': _scales(1.0, 1.0, 1.0),
    'N': 100,
    'pilot_N': 50,
    'candidates': [50, 100, 150, 200, 250],
    'dt_max': 0.1,
    'd_eff': None,
}


@dataclass(frozen=True, eq=False)
class ExperimentBundle:
    """Everything a run needs besides the sampler settings."""
    name: str
    network: ReactionNetwork
    obs: ObservationModel
    prior: JointPrior
    x1: SystemState
    times: np.ndarray
    values: np.ndarray
    true_params: Optional[ParamVector] = None
    defaults: dict = field(default_factory=dict)
    data_seed: Optional[int] = None

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        values = self.obs.validate_data(self.values)
        if times.ndim != 1 or times.size != values.shape[0]:
            raise DataError(f"{self.name}: {times.size} observation times for {values.shape[0]} observations")
        if np.any(np.diff(times) <= 0):
            raise DataError(f"{self.name}: observation times must be strictly increasing")
        if times[0] != self.x1.t:
            raise DataError(f"{self.name}: the initial state is at t={self.x1.t}, the first observation at {times[0]}")
        if self.x1.x.size != self.network.num_species:
            raise DataError(f"{self.name}: initial state has {self.x1.x.size} species, "
                            f"the network {self.network.num_species}")
        if len(self.prior) != len(self.network.param_names):
            raise ConfigurationError(f"{self.name}: {len(self.prior)} priors for "
                                     f"{len(self.network.param_names)} parameters")
        if self.true_params is not None and self.prior.log_density(self.true_params.log_values) == -np.inf:
            raise ConfigurationError(f"{self.name}: the true parameters have zero prior density")
        times.setflags(write=False)
        values.setflags(write=False)
        defaults = {**DEFAULTS, **self.defaults}
        defaults['lambda'] = {**DEFAULTS['lambda'], **self.defaults.get('lambda', {})}
        object.__setattr__(self, 'times', times)
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 'defaults', defaults)

    @property
    def param_names(self):
        return self.network.param_names

    @property
    def dimension(self):
        return len(self.param_names)

    def initial_log_c(self):
        """Starting point for a chain: the truth when known, otherwise the prior means of log c."""
        if self.true_params is not None:
            return self.true_params.log_values
        return self.prior.mean_log()

    def scale(self, algorithm):
        return self.defaults['lambda'][algorithm]

    def to_spec(self):
        species, names = self.network.species, self.network.param_names
        return {
            'name': self.name,
            'network': self.network.to_spec(),
            'observation': self.obs.to_spec(species, names),
            'prior': self.prior.to_spec(),
            'x1': {'t': self.x1.t, 'x': self.x1.x.tolist()},
            'times': self.times.tolist(),
            'values': self.values.tolist(),
            'true_params': None if self.true_params is None else self.true_params.values.tolist(),
            'defaults': self.defaults,
            'data_seed': self.data_seed,
        }

    @classmethod
    def from_spec(cls, spec):
        """
        Rebuild a bundle from ``to_spec`` output or a user model document.

        When ``values`` is absent the data are simulated from ``true_params`` with
        ``data_seed``.
        """
        network = ReactionNetwork.from_spec(spec['network'])
        species, names = network.species, network.param_names
        obs = ObservationModel.from_spec(spec['observation'], species, names)
        x1 = SystemState(spec['x1']['t'], np.asarray(spec['x1']['x']))
        truth = spec.get('true_params')
        true_params = None if truth is None else ParamVector(truth, names)
        values = spec.get('values')
        if values is None:
            if true_params is None or spec.get('data_seed') is None:
                raise DataError("A model without data needs true_params and data_seed to simulate it")
            values = simulate_observations(network, obs, x1, true_params, spec['times'], spec['data_seed'])
        return cls(
            name=spec.get('name', 'custom'),
            network=network,
            obs=obs,
            prior=JointPrior.from_spec(spec['prior']),
            x1=x1,
            times=spec['times'],
            values=values,
            true_params=true_params,
            defaults=spec.get('defaults') or {},
            data_seed=spec.get('data_seed'),
        )


def simulate_observations(net, obs, x1, c, times, seed):
    """Observations of one exact path started from ``x1`` at ``times[0]``."""
    rng = StreamFactory(seed).generator(DATA)
    path = ssa_grid(net, x1, c, times, rng)
    return obs.sample(path, c, rng)


def build_lotka_volterra(seed=LOTKA_VOLTERRA_SEED):
    """Predator-prey dynamics with 50 unit-spaced Poisson counts of the prey."""
    net = lotka_volterra_network()
    truth = ParamVector([1.0, 0.005, 0.6], net.param_names)
    x1 = SystemState(1.0, np.array([70, 80]))
    times = np.arange(1.0, 51.0)
    obs = ObservationModel.poisson(net.num_species, [0])
    return ExperimentBundle(
        name='lotka-volterra',
        network=net,
        obs=obs,
        prior=JointPrior([LogUniformPrior(-8, 8)] * 3),
        x1=x1,
        times=times,
        values=simulate_observations(net, obs, x1, truth, times, seed),
        true_params=truth,
        defaults={
            'lambda': _scales(0.7, 3.0, 1.0),
            'N': 200,
            'pilot_N': 50,
            'candidates': [50, 100, 150, 200, 250],
            'dt_max': 0.125,
            'd_eff': 3,
        },
        data_seed=seed,
    )


def build_gene_expression(seed=GENE_EXPRESSION_SEED):
    """
    Transcription pulse, translation and decay, with protein levels observed every
    quarter hour for 25 hours under Gaussian noise of unknown size sigma.
    """
    net = gene_expression_network()
    truth = ParamVector([0.44, 0.52, 10.0, 15.0, 0.4, 7.0, 3.0, 10.0], net.param_names)
    x1 = SystemState(0.0, np.array([10, 150]))
    times = 0.25 * np.arange(100)
    obs = ObservationModel.gaussian([[0.0], [1.0]], sd_indices=(7,))
    prior = JointPrior([
        GammaPrior(19.36, 44),
        GammaPrior(27.04, 52),
        ExponentialPrior(0.01),
        ExponentialPrior(0.01),
        ExponentialPrior(1.0),
        ExponentialPrior(0.1),
        ExponentialPrior(0.01),
        ExponentialPrior(0.01),
    ])
    return ExperimentBundle(
        name='gene-expression',
        network=net,
        obs=obs,
        prior=prior,
        x1=x1,
        times=times,
        values=simulate_observations(net, obs, x1, truth, times, seed),
        true_params=truth,
        defaults={
            'lambda': _scales(0.6, 3.0, 0.6),
            'N': 250,
            'pilot_N': 50,
            'candidates': [50, 100, 150, 200, 250],
            'dt_max': 0.05,
            'd_eff': 3,
        },
        data_seed=seed,
    )


def load_removals(path=ABAKALIKI_CSV):
    """Removal days and counts as a (day, removals) table."""
    table = pd.read_csv(path)
    if list(table.columns) != ['day', 'removals']:
        raise DataError(f"{path}: expected columns day, removals, got {list(table.columns)}")
    if (table['day'] < 0).any() or (table['removals'] < 0).any():
        raise DataError(f"{path}: days and removal counts must be non-negative")
    if not table['day'].is_monotonic_increasing or table['day'].duplicated().any():
        raise DataError(f"{path}: days must be strictly increasing")
    return table


def densify_removals(days, removals, last_day=None):
    """
    Daily grid from day 0 to ``last_day`` (default the last removal) with the
    cumulative number of removals through each day. Days without removals keep
    the previous level.
    """
    days = np.asarray(days, dtype=np.int64)
    last_day = int(days.max()) if last_day is None else int(last_day)
    if last_day < days.max():
        raise DataError(f"The grid ends at day {last_day}, before the last removal on day {days.max()}")
    counts = np.zeros(last_day + 1, dtype=np.int64)
    np.add.at(counts, days, np.asarray(removals, dtype=np.int64))
    return np.arange(last_day + 1, dtype=float), np.cumsum(counts)


def build_abakaliki(path=ABAKALIKI_CSV):
    """
    Smallpox outbreak in a closed population of 120, observed without error as the
    daily number of individuals not yet removed.
    """
    table = load_removals(path)
    times, removed = densify_removals(table['day'], table['removals'])
    net = sir_network()
    # one removal on day 0 leaves one infective
    x1 = SystemState(0.0, np.array([ABAKALIKI_POPULATION - 2, 1]))
    return ExperimentBundle(
        name='abakaliki',
        network=net,
        obs=ObservationModel.exact([[1.0], [1.0]]),
        prior=JointPrior([GammaPrior(10, 1e4), GammaPrior(10, 100)]),
        x1=x1,
        times=times,
        values=ABAKALIKI_POPULATION - removed,
        defaults={
            'lambda': _scales(1.1, 1.1, 1.1),
            'N': 2000,
            'pilot_N': 500,
            'candidates': [500, 1000, 1500, 2000, 2500],
            'dt_max': 0.1,
            'd_eff': 3,
        },
    )


BUILDERS = {
    'lotka-volterra': build_lotka_volterra,
    'gene-expression': build_gene_expression,
    'abakaliki': build_abakaliki,
}


@lru_cache(maxsize=None)
def get_bundle(name):
    """Built-in bundle by name. Bundles are immutable, so one instance is shared."""
    if name not in BUILDERS:
        raise ConfigurationError(f"Unknown experiment {name!r}; built-in experiments are {sorted(BUILDERS)}")
    logger.info(f"Building experiment {name}")
    return BUILDERS[name]()
