"""
Bootstrap particle filter over an exact (SSA) or approximate (CLE) forward simulator.

Particles are propagated in fixed blocks of ``settings.PARTICLE_BLOCK`` rows, each
block drawing from its own stream keyed by (purpose, iteration, time index, block),
so the estimate does not depend on how many worker threads run the blocks.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import logging
import math

import numpy as np
from django.conf import settings
from scipy import special, stats

from cle.langevin import cle_propagate
from lna.observations import EXACT, POISSON
from network.reactions import state_vector
from ssa.simulators import ssa_propagate
from stochkin import streams as stream_keys
from stochkin.exceptions import FactorizationError, NonFiniteHazardError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ParticleSet:
    """N particle states, their unnormalised log weights and the running log marginal likelihood."""
    states: np.ndarray
    log_weights: np.ndarray
    log_ml: float = 0.0

    @property
    def size(self):
        return self.states.shape[0]

    @property
    def weights(self):
        finite = np.isfinite(self.log_weights)
        if not finite.any():
            raise ValueError("All particle weights are zero")
        return np.exp(self.log_weights - special.logsumexp(self.log_weights))

    @classmethod
    def start(cls, x1, n_particles, log_ml=0.0):
        x1 = state_vector(x1)
        return cls(np.tile(x1, (n_particles, 1)), np.zeros(n_particles), log_ml)


def obs_log_density(obs, y, x, c):
    """
    log p(y | x, c) for one state, or for each row of an n x u batch of states.
    """
    x = np.asarray(state_vector(x), dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    mean = obs.mean(x)
    if obs.kind == POISSON:
        mean = np.maximum(mean, 0.0)
        log_p = np.sum(special.xlogy(y, mean) - mean - special.gammaln(y + 1), axis=1)
    elif obs.kind == EXACT:
        log_p = np.where(np.all(np.isclose(mean, y, rtol=0.0, atol=1e-9), axis=1), 0.0, -np.inf)
    else:
        noise = stats.multivariate_normal(np.zeros(y.size), obs.covariance(c), allow_singular=False)
        log_p = np.reshape(noise.logpdf(y - mean), -1)
    return float(log_p[0]) if single else log_p


def multinomial_indices(weights, rng):
    return rng.choice(weights.size, size=weights.size, p=weights)


def _inverse_cdf(weights, points):
    cumulative = np.cumsum(weights)
    cumulative /= cumulative[-1]
    return np.searchsorted(cumulative, points, side='right')


def systematic_indices(weights, rng):
    n = weights.size
    return _inverse_cdf(weights, (rng.uniform() + np.arange(n)) / n)


def stratified_indices(weights, rng):
    n = weights.size
    return _inverse_cdf(weights, (rng.uniform(size=n) + np.arange(n)) / n)


RESAMPLERS = {
    'multinomial': multinomial_indices,
    'systematic': systematic_indices,
    'stratified': stratified_indices,
}


def resample(ps, rng, scheme='multinomial'):
    """N equally weighted particles drawn from ``ps`` with the named scheme."""
    indices = RESAMPLERS[scheme](ps.weights, rng)
    return ParticleSet(ps.states[indices], np.zeros(ps.size), ps.log_ml)


def resample_multinomial(ps, rng):
    return resample(ps, rng, 'multinomial')


class SsaPropagator:
    """Exact propagation of particle blocks with the direct method or thinning."""
    name = 'ssa'

    def __init__(self, net):
        self.net = net

    def __call__(self, states, c, t0, t1, rng):
        return ssa_propagate(self.net, states, c, t0, t1, rng)


class ClePropagator:
    """Euler-Maruyama propagation of particle blocks."""
    name = 'cle'

    def __init__(self, net, dt_max):
        if not dt_max > 0:
            raise ValueError(f"dt_max must be positive, got {dt_max}")
        self.net = net
        self.dt_max = dt_max

    def __call__(self, states, c, t0, t1, rng):
        return cle_propagate(self.net, states, c, t0, t1, self.dt_max, rng)


def _propagate(propagator, states, c, t0, t1, streams, purpose, iteration, time_index, pool):
    block = settings.PARTICLE_BLOCK
    chunks = [
        (states[start:start + block], streams.block_generator(purpose, iteration, time_index, k))
        for k, start in enumerate(range(0, states.shape[0], block))
    ]

    def run(chunk):
        return propagator(chunk[0], c, t0, t1, chunk[1])

    results = pool.map(run, chunks) if pool is not None else map(run, chunks)
    return np.concatenate(list(results))


def bootstrap_filter(propagator, obs, times, values, c, x1, n_particles, streams,
                     purpose=stream_keys.EXACT_FILTER, iteration=0, workers=1, resampling='multinomial',
                     pool=None):
    """
    Particle estimate of log p(y | c).

    The state at ``times[0]`` is known to be ``x1``, so the first observation
    contributes the constant log p(y_1 | x_1, c). Each later observation adds
    log of the mean unnormalised weight, and particles are resampled after every
    observation. Returns -inf when every particle is incompatible with some observation.

    Particles whose weight is NaN (a diverged CLE path, say) count as zero weight.
    ``pool`` is an executor to reuse; without one, ``workers > 1`` starts a pool
    for this call only.
    """
    if n_particles < 1:
        raise ValueError(f"At least one particle is required, got {n_particles}")
    if resampling not in RESAMPLERS:
        raise ValueError(f"Unknown resampling scheme {resampling!r}")
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]

    log_ml = obs_log_density(obs, values[0], x1, c)
    if not math.isfinite(log_ml):
        return -math.inf
    ps = ParticleSet.start(x1, n_particles, log_ml)

    own_pool = pool is None and workers > 1
    if own_pool:
        pool = ThreadPoolExecutor(max_workers=workers)
    try:
        for k in range(1, times.size):
            states = _propagate(propagator, ps.states, c, times[k - 1], times[k], streams, purpose, iteration, k, pool)
            log_weights = obs_log_density(obs, values[k], states, c)
            log_weights = np.where(np.isnan(log_weights), -np.inf, log_weights)
            if not np.any(np.isfinite(log_weights)):
                logger.debug(f"All {n_particles} particles have zero weight at t={times[k]}")
                return -math.inf
            increment = special.logsumexp(log_weights) - math.log(n_particles)
            if not math.isfinite(increment):
                logger.debug(f"Non-finite likelihood increment {increment} at t={times[k]}")
                return -math.inf
            ps = ParticleSet(states, log_weights, ps.log_ml + increment)
            if k < times.size - 1:
                ps = resample(ps, streams.resample_generator(purpose, iteration, k), resampling)
    finally:
        if own_pool:
            pool.shutdown()
    return float(ps.log_ml)


class ParticleFilterLikelihood:
    """
    Stochastic log-likelihood ``estimator(params, iteration) -> float`` backed by the
    bootstrap filter. Each call uses streams keyed by ``iteration``, so repeated runs
    with the same master seed give the same chain.

    With ``workers > 1`` one thread pool is kept for the life of the estimator;
    ``close`` (or leaving a ``with`` block) shuts it down.
    """

    def __init__(self, propagator, obs, times, values, x1, n_particles, streams,
                 purpose=stream_keys.EXACT_FILTER, workers=1, resampling='multinomial'):
        self.propagator = propagator
        self.obs = obs
        self.times = np.asarray(times, dtype=float)
        self.values = obs.validate_data(values)
        self.x1 = x1
        self.n_particles = int(n_particles)
        self.streams = streams
        self.purpose = purpose
        self.workers = workers
        self.resampling = resampling
        self.calls = 0
        self._pool = None

    @property
    def pool(self):
        if self._pool is None and self.workers > 1:
            self._pool = ThreadPoolExecutor(max_workers=self.workers, thread_name_prefix=self.propagator.name)
        return self._pool

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()

    def __call__(self, params, iteration=0):
        self.calls += 1
        try:
            return bootstrap_filter(
                self.propagator, self.obs, self.times, self.values, params, self.x1, self.n_particles,
                self.streams, self.purpose, iteration, self.workers, self.resampling, self.pool,
            )
        except (FactorizationError, NonFiniteHazardError, np.linalg.LinAlgError) as e:
            logger.warning(f"{self.propagator.name} filter failed at iteration {iteration}: {e}")
            return -math.inf
