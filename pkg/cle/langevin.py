"""
Euler-Maruyama simulation of the chemical Langevin equation

    dX = S h(X) dt + sqrt(S diag{h(X)} S') dW

Hazards are evaluated at max(x, 0); the state itself is never clamped.
"""
from dataclasses import dataclass
import logging
import math

import numpy as np

from network.reactions import hazards, param_values, state_vector
from stochkin.linalg import check_psd, cholesky_with_jitter

logger = logging.getLogger(__name__)

JITTER_LADDER = (0.0, 1e-10, 1e-8, 1e-6)


@dataclass(frozen=True, eq=False)
class DiffusionState:
    t: float
    x: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        if not np.all(np.isfinite(x)):
            raise ValueError(f"Diffusion state must be finite, got {x}")
        x.setflags(write=False)
        object.__setattr__(self, 't', float(self.t))
        object.__setattr__(self, 'x', x)


def diffusion_matrix(net, x, c, t=0.0):
    """S diag{h(max(x, 0))} S' for a single state (u x u) or a batch (n x u x u)."""
    h = hazards(net, np.maximum(np.asarray(x, dtype=float), 0.0), c, t)
    stoich = net.stoich.astype(float)
    return np.einsum('ij,...j,kj->...ik', stoich, h, stoich)


def diffusion_factor(matrices):
    """
    Lower Cholesky factors of a stack of diffusion matrices.

    All-zero matrices get a zero factor. Matrices that are only semi-definite fall
    back to the jitter ladder one at a time. Raises FactorizationError for a matrix
    that is not symmetric positive semi-definite.
    """
    matrices = check_psd(matrices)
    single = matrices.ndim == 2
    matrices = matrices[None] if single else matrices
    factors = np.zeros_like(matrices)
    live = np.any(matrices != 0, axis=(1, 2))
    if live.any():
        try:
            factors[live] = np.linalg.cholesky(matrices[live])
        except np.linalg.LinAlgError:
            for k in np.flatnonzero(live):
                factors[k], _ = cholesky_with_jitter(matrices[k], JITTER_LADDER)
    return factors[0] if single else factors


def _euler_maruyama(net, x, c, t, dt, noise):
    h = hazards(net, np.maximum(x, 0.0), c, t)
    stoich = net.stoich.astype(float)
    factors = diffusion_factor(np.einsum('ij,nj,kj->nik', stoich, h, stoich))
    return x + dt * (h @ stoich.T) + np.einsum('nij,nj->ni', factors, math.sqrt(dt) * noise)


def em_step(net, s, c, dt, noise):
    """One Euler-Maruyama step of length ``dt`` driven by the standard normal vector ``noise``."""
    if not dt > 0:
        raise ValueError(f"Step size must be positive, got {dt}")
    x = np.asarray(state_vector(s), dtype=float)[None]
    x_next = _euler_maruyama(net, x, param_values(c), s.t, dt, np.asarray(noise, dtype=float)[None])
    return DiffusionState(s.t + dt, x_next[0])


def substeps(t0, t1, dt_max):
    """Number and length of the equal Euler steps covering [t0, t1] with no step above dt_max."""
    if not t1 > t0:
        raise ValueError(f"Simulation interval must be non-empty, got [{t0}, {t1}]")
    if not dt_max > 0:
        raise ValueError(f"dt_max must be positive, got {dt_max}")
    count = max(1, math.ceil((t1 - t0) / dt_max - 1e-9))
    return count, (t1 - t0) / count


def cle_propagate(net, states, c, t0, t1, dt_max, rng):
    """Advance every row of ``states`` (n x u) from ``t0`` to ``t1``; returns a new float array."""
    count, dt = substeps(t0, t1, dt_max)
    x = np.array(states, dtype=float, copy=True)
    values = param_values(c)
    for k in range(count):
        x = _euler_maruyama(net, x, values, t0 + k * dt, dt, rng.standard_normal(x.shape))
    return x


def cle_simulate(net, x0, c, t0, t1, dt_max, rng):
    """Final state of one Euler-Maruyama path on [t0, t1]."""
    x = np.asarray(state_vector(x0), dtype=float)[None]
    return DiffusionState(t1, cle_propagate(net, x, c, t0, t1, dt_max, rng)[0])


def cle_grid(net, x1, c, times, dt_max, rng):
    """Diffusion states at each of ``times`` starting from ``x1`` at ``times[0]``."""
    times = np.asarray(times, dtype=float)
    path = np.empty((times.size, net.num_species))
    path[0] = state_vector(x1)
    for k in range(1, times.size):
        path[k] = cle_propagate(net, path[k - 1][None], c, times[k - 1], times[k], dt_max, rng)[0]
    return path
