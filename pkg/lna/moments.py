"""
Moment equations of the linear noise approximation.

Between observations the deterministic path z, residual mean m and covariance V obey

    dz/dt = S h(z)
    dm/dt = F m
    dV/dt = V F' + S diag{h(z)} S' + F V

with F the Jacobian of S h. After a restart m is zero, so its equation is only
integrated when a belief with non-zero m is supplied.
"""
from dataclasses import dataclass, replace
import logging

import numpy as np
from django.conf import settings
from scipy.integrate import solve_ivp

from network.reactions import hazards, jacobian
from stochkin.exceptions import IntegrationError
from stochkin.linalg import symmetrize

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class LnaBelief:
    """Gaussian filtering state: LNA moments (z, m, V) and the posterior (a, C) they restarted from."""
    t: float
    z: np.ndarray
    m: np.ndarray
    V: np.ndarray
    a: np.ndarray
    C: np.ndarray

    @classmethod
    def restart(cls, t, a, C):
        a = np.array(a, dtype=float)
        C = np.array(C, dtype=float)
        return cls(float(t), a.copy(), np.zeros_like(a), C.copy(), a, C)

    @property
    def num_species(self):
        return self.z.size


def moment_rhs(net, c, with_mean=False):
    """Right-hand side f(t, y) of the moment ODEs on the flat vector y = [z, (m), vec V]."""
    u = net.num_species
    stoich = net.stoich.astype(float)

    def rhs(t, y):
        z = np.maximum(y[:u], 0.0)
        V = y[-u * u:].reshape(u, u)
        h = hazards(net, z, c, t)
        F = jacobian(net, z, c, t)
        dV = V @ F.T + (stoich * h) @ stoich.T + F @ V
        parts = [stoich @ h]
        if with_mean:
            parts.append(F @ y[u:2 * u])
        parts.append(dV.ravel())
        return np.concatenate(parts)

    return rhs


def integrate_moments(net, belief, c, t_end, rtol=None, atol=None):
    """
    Advance (z, m, V) from ``belief.t`` to ``t_end`` with the RK45 embedded pair.

    Raises IntegrationError carrying the time reached when the solver gives up.
    """
    rtol = settings.DEFAULT_RTOL if rtol is None else rtol
    atol = settings.DEFAULT_ATOL if atol is None else atol
    if t_end == belief.t:
        return belief
    u = belief.num_species
    with_mean = bool(np.any(belief.m != 0))
    parts = [belief.z] + ([belief.m] if with_mean else []) + [belief.V.ravel()]
    solution = solve_ivp(
        moment_rhs(net, c, with_mean), (belief.t, t_end), np.concatenate(parts),
        method='RK45', rtol=rtol, atol=atol,
    )
    if not solution.success:
        raise IntegrationError(f"Moment integration failed: {solution.message}", time=float(solution.t[-1]))
    y = solution.y[:, -1]
    if not np.all(np.isfinite(y)):
        raise IntegrationError("Moment integration produced non-finite values", time=float(solution.t[-1]))
    m = y[u:2 * u] if with_mean else np.zeros(u)
    V = symmetrize(y[-u * u:].reshape(u, u))
    return replace(belief, t=float(t_end), z=y[:u], m=m, V=V)
