"""
Random-walk particle marginal Metropolis-Hastings and its delayed-acceptance variant.

Likelihood estimators are callables ``estimator(params, iteration) -> float`` that
return a log-likelihood (or -inf) and count their own ``calls``. The estimate at the
current point is cached and never recomputed, so a stochastic estimator gives a
pseudo-marginal chain.
"""
from dataclasses import dataclass, field
from typing import Optional
import logging
import math
import time

import numpy as np
from tqdm import tqdm

from network.reactions import ParamVector
from stochkin.exceptions import ConfigurationError
from stochkin.streams import CHAIN
from .diagnostics import ess_per_param
from .proposals import rw_propose

logger = logging.getLogger(__name__)


def mh_accept_prob(log_num, log_den):
    """
    min(1, exp(log_num - log_den)), with -inf on either side handled exactly.
    A NaN numerator (a failed estimate) is never accepted.
    """
    if math.isnan(log_num):
        return 0.0
    if log_num == -math.inf and log_den == -math.inf:
        raise ValueError("Acceptance probability is undefined when both densities are zero")
    if log_num == -math.inf:
        return 0.0
    if log_den == -math.inf:
        return 1.0
    return math.exp(min(0.0, log_num - log_den))


@dataclass
class ChainState:
    log_c: np.ndarray
    log_prior: float
    log_ml_exact: float = math.nan
    log_ml_surrogate: float = math.nan
    iteration: int = 0

    def params(self, names=()):
        return ParamVector.from_log(self.log_c, names)


@dataclass
class RunReport:
    algorithm: str
    param_names: tuple
    chain: np.ndarray
    trace: np.ndarray
    burn_in: int
    iterations: int
    accepted: int
    stage2_invocations: Optional[int]
    prior_rejections: int
    filter_calls: int
    surrogate_calls: int
    wall_time: float
    ess_per_param: np.ndarray = field(init=False)

    def __post_init__(self):
        samples = self.samples
        if samples.shape[0] >= 10:
            self.ess_per_param = ess_per_param(samples)
        else:
            self.ess_per_param = np.full(samples.shape[1], np.nan)

    @property
    def samples(self):
        """Post burn-in draws of log c, one row per iteration."""
        return self.chain[self.burn_in:]

    @property
    def delayed(self):
        """True for two-stage chains. Single-stage chains have no Stage 2 statistics."""
        return self.stage2_invocations is not None

    @property
    def alpha1(self):
        if not self.delayed:
            return self.acceptance_rate
        return self.stage2_invocations / self.iterations if self.iterations else 0.0

    @property
    def alpha2_given_1(self):
        if not self.delayed:
            return None
        return self.accepted / self.stage2_invocations if self.stage2_invocations else 0.0

    @property
    def acceptance_rate(self):
        return self.accepted / self.iterations if self.iterations else 0.0

    @property
    def ess_min(self):
        return float(np.min(self.ess_per_param))

    @property
    def ess_min_per_second(self):
        return self.ess_min / self.wall_time if self.wall_time > 0 else math.nan

    @property
    def filter_calls_per_accepted(self):
        return self.filter_calls / self.accepted if self.accepted else math.inf

    def summary(self):
        def finite(value):
            return float(value) if np.isfinite(value) else None

        return {
            'algorithm': self.algorithm,
            'parameters': list(self.param_names),
            'iterations': self.iterations,
            'burn_in': self.burn_in,
            'alpha1': self.alpha1,
            'alpha2_given_1': self.alpha2_given_1,
            'acceptance_rate': self.acceptance_rate,
            'accepted': self.accepted,
            'stage2_invocations': self.stage2_invocations,
            'prior_rejections': self.prior_rejections,
            'filter_calls': self.filter_calls,
            'surrogate_calls': self.surrogate_calls,
            'filter_calls_per_accepted': finite(self.filter_calls_per_accepted),
            'ess_per_param': dict(zip(self.param_names, (finite(v) for v in self.ess_per_param))),
            'ess_min': finite(self.ess_min),
            'ess_min_per_second': finite(self.ess_min_per_second),
            'wall_time': self.wall_time,
        }


def _burn_in(iters, fraction):
    if not 0 <= fraction < 1:
        raise ValueError(f"Burn-in fraction must lie in [0, 1), got {fraction}")
    return int(fraction * iters)


def _start(prior, initial, names):
    log_c = np.asarray(initial, dtype=float)
    log_prior = prior.log_density(log_c)
    if log_prior == -math.inf:
        raise ConfigurationError(f"Initial value {log_c} has zero prior density")
    return ChainState(log_c, log_prior)


def _check_initial(value, label):
    if value == -math.inf or math.isnan(value):
        raise ConfigurationError(f"The {label} log-likelihood is not finite at the initial value")


def pmmh_run(prior, estimator, prop, initial, iters, streams, burn_in=0.1, names=(),
             algorithm='pmmh', exact=True, progress=False):
    """
    Random-walk Metropolis-Hastings on log c with one likelihood estimate per
    proposal. With ``exact=False`` the estimator is an approximation and its calls
    are reported as surrogate calls.
    """
    rng = streams.generator(CHAIN)
    state = _start(prior, initial, names)
    d = state.log_c.size
    calls_before = estimator.calls
    log_ml = estimator(state.params(names), 0)
    _check_initial(log_ml, 'initial')

    chain = np.empty((iters, d))
    trace = np.full((iters, 2), np.nan)
    accepted = prior_rejections = 0
    started = time.perf_counter()
    logger.info(f"Starting {algorithm} for {iters} iterations at log c = {state.log_c}")

    for i in tqdm(range(1, iters + 1), desc=algorithm, disable=not progress):
        candidate = rw_propose(state.log_c, prop, rng)
        log_prior = prior.log_density(candidate)
        if log_prior == -math.inf:
            prior_rejections += 1
        else:
            candidate_ml = estimator(ParamVector.from_log(candidate, names), i)
            if rng.uniform() < mh_accept_prob(candidate_ml + log_prior, log_ml + state.log_prior):
                state.log_c, state.log_prior, log_ml = candidate, log_prior, candidate_ml
                accepted += 1
        state.iteration = i
        chain[i - 1] = state.log_c
        trace[i - 1, 0 if exact else 1] = log_ml
        logger.debug(f"{algorithm} iteration {i}: log-likelihood {log_ml:.4f}")

    wall_time = time.perf_counter() - started
    calls = estimator.calls - calls_before
    report = RunReport(
        algorithm=algorithm,
        param_names=tuple(names),
        chain=chain,
        trace=trace,
        burn_in=_burn_in(iters, burn_in),
        iterations=iters,
        accepted=accepted,
        stage2_invocations=None,
        prior_rejections=prior_rejections,
        filter_calls=calls if exact else 0,
        surrogate_calls=0 if exact else calls,
        wall_time=wall_time,
    )
    logger.info(f"Finished {algorithm}: acceptance {report.acceptance_rate:.3f}, {calls} likelihood calls, "
                f"{wall_time:.1f}s")
    return report


def dapmmh_run(prior, exact, surrogate, prop, initial, iters, streams, burn_in=0.1, names=(),
               algorithm='dapmmh', progress=False):
    """
    Delayed-acceptance PMMH.

    Stage 1 screens each proposal with the surrogate log-likelihood. Only proposals
    that pass are given to the exact estimator, and Stage 2 accepts with ratio

        [L(c*) L_a(c)] / [L(c) L_a(c*)]

    which corrects for the surrogate so the chain still targets the exact posterior.
    """
    rng = streams.generator(CHAIN)
    state = _start(prior, initial, names)
    d = state.log_c.size
    exact_before, surrogate_before = exact.calls, surrogate.calls
    params = state.params(names)
    state.log_ml_surrogate = surrogate(params, 0)
    _check_initial(state.log_ml_surrogate, 'initial surrogate')
    state.log_ml_exact = exact(params, 0)
    _check_initial(state.log_ml_exact, 'initial exact')

    chain = np.empty((iters, d))
    trace = np.empty((iters, 2))
    accepted = stage2 = prior_rejections = 0
    started = time.perf_counter()
    logger.info(f"Starting {algorithm} for {iters} iterations at log c = {state.log_c}")

    for i in tqdm(range(1, iters + 1), desc=algorithm, disable=not progress):
        candidate = rw_propose(state.log_c, prop, rng)
        log_prior = prior.log_density(candidate)
        if log_prior == -math.inf:
            prior_rejections += 1
        else:
            candidate_params = ParamVector.from_log(candidate, names)
            candidate_surrogate = surrogate(candidate_params, i)
            alpha_1 = mh_accept_prob(candidate_surrogate + log_prior, state.log_ml_surrogate + state.log_prior)
            if rng.uniform() < alpha_1:
                stage2 += 1
                candidate_exact = exact(candidate_params, i)
                alpha_2 = mh_accept_prob(candidate_exact + state.log_ml_surrogate,
                                         state.log_ml_exact + candidate_surrogate)
                if rng.uniform() < alpha_2:
                    state.log_c, state.log_prior = candidate, log_prior
                    state.log_ml_exact, state.log_ml_surrogate = candidate_exact, candidate_surrogate
                    accepted += 1
        state.iteration = i
        chain[i - 1] = state.log_c
        trace[i - 1] = (state.log_ml_exact, state.log_ml_surrogate)

    wall_time = time.perf_counter() - started
    report = RunReport(
        algorithm=algorithm,
        param_names=tuple(names),
        chain=chain,
        trace=trace,
        burn_in=_burn_in(iters, burn_in),
        iterations=iters,
        accepted=accepted,
        stage2_invocations=stage2,
        prior_rejections=prior_rejections,
        filter_calls=exact.calls - exact_before,
        surrogate_calls=surrogate.calls - surrogate_before,
        wall_time=wall_time,
    )
    logger.info(f"Finished {algorithm}: alpha1 {report.alpha1:.3f}, alpha2|1 {report.alpha2_given_1:.3f}, "
                f"{report.filter_calls} exact filter calls, {wall_time:.1f}s")
    return report
