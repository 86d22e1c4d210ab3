"""
Marginal likelihood under the restarting linear noise approximation.

The filter keeps a Gaussian posterior N(a, C) for the state at each observation
time. Between observations the LNA is restarted from z = a, m = 0, V = C and its
moments give the one-step forecast, which is then conditioned on the data.
"""
import logging
import math

import numpy as np
from django.conf import settings
from scipy import linalg

from stochkin.exceptions import FactorizationError, IntegrationError
from stochkin.linalg import cholesky_with_jitter, symmetrize
from .moments import LnaBelief, integrate_moments

logger = logging.getLogger(__name__)

DEGENERATE_TOL = 1e-12
LADDER = (0.0, 1e-10, 1e-8)


def temper(log_p, tau):
    """log of p^(1/tau)."""
    if not tau >= 1:
        raise ValueError(f"Tempering tau must be at least 1, got {tau}")
    return log_p / tau


def _condition(z, V, obs, y, c):
    """
    Forecast log density of ``y`` and the posterior (a, C) given the prior N(z, V).

    Returns -inf (with the prior unchanged) when the forecast covariance cannot be factorised.
    """
    G = obs.G
    forecast_mean = z @ G
    forecast_cov = symmetrize(G.T @ V @ G + obs.covariance(c, z))
    residual = y - forecast_mean
    if np.all(np.abs(forecast_cov) <= DEGENERATE_TOL):
        # point mass forecast: the observation either matches or is impossible
        consistent = np.allclose(residual, 0.0, atol=1e-9)
        return (0.0 if consistent else -math.inf), z, V
    try:
        factor, _ = cholesky_with_jitter(forecast_cov, LADDER)
    except FactorizationError:
        logger.debug("Forecast covariance is not positive definite")
        return -math.inf, z, V
    whitened = linalg.solve_triangular(factor, residual, lower=True)
    log_density = (
        -0.5 * whitened @ whitened
        - np.log(np.diag(factor)).sum()
        - 0.5 * y.size * math.log(2 * math.pi)
    )
    gain = linalg.cho_solve((factor, True), G.T @ V).T
    a = z + gain @ residual
    C = symmetrize(V - gain @ G.T @ V)
    return float(log_density), a, C


def lna_log_marginal(net, obs, times, values, c, x1, rtol=None, atol=None):
    """
    log p_a(y | c) for observations ``values`` (T x p) at ``times``, with the state
    known to be ``x1`` at ``times[0]``.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    x1 = np.asarray(getattr(x1, 'x', x1), dtype=float)
    u = x1.size

    total, a, C = _condition(x1, np.zeros((u, u)), obs, values[0], c)
    if total == -math.inf:
        return -math.inf
    for k in range(1, times.size):
        belief = LnaBelief.restart(times[k - 1], a, C)
        assert not np.any(belief.m), "Residual mean must be zero after a restart"
        belief = integrate_moments(net, belief, c, times[k], rtol, atol)
        log_density, a, C = _condition(belief.z, belief.V, obs, values[k], c)
        if log_density == -math.inf:
            return -math.inf
        total += log_density
    return float(total)


class LnaLikelihood:
    """
    Deterministic surrogate log-likelihood ``estimator(params, iteration) -> float``
    under the LNA, tempered by ``tau``.
    """

    def __init__(self, net, obs, times, values, x1, tau=1.0, rtol=None, atol=None):
        self.net = net
        self.obs = obs
        self.times = np.asarray(times, dtype=float)
        self.values = obs.validate_data(values)
        self.x1 = x1
        self.tau = tau
        self.rtol = settings.DEFAULT_RTOL if rtol is None else rtol
        self.atol = settings.DEFAULT_ATOL if atol is None else atol
        self.calls = 0
        temper(0.0, tau)

    def log_marginal(self, params):
        try:
            return lna_log_marginal(self.net, self.obs, self.times, self.values, params, self.x1, self.rtol, self.atol)
        except IntegrationError as e:
            logger.warning(f"LNA integration failed at t={e.time}, treating parameters as impossible: {e}")
            return -math.inf

    def __call__(self, params, iteration=0):
        self.calls += 1
        return temper(self.log_marginal(params), self.tau)
