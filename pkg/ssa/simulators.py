"""
Exact simulation of the Markov jump process.

Time-homogeneous networks use the direct (Gillespie) method. Networks with a
time-dependent hazard use thinning: candidate events arrive at a rate that
bounds the total hazard over the interval and are kept with probability
h0(x, t) / bound.
"""
from dataclasses import dataclass, field
import logging

import numpy as np

from network.reactions import SystemState, check_finite, hazards, param_values, state_vector
from stochkin.exceptions import HazardBoundError

logger = logging.getLogger(__name__)

BOUND_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class JumpPath:
    """A piecewise-constant path on [t0, t1]: its events and the resulting change of state."""
    initial: SystemState
    final_state: SystemState
    event_counts: np.ndarray
    events: list = field(default_factory=list)


def upper_bound_rate(net, x, c, t0, t1):
    """
    Bound on the total hazard over [t0, t1] with the state held fixed.

    Exact for time-homogeneous networks. Accepts a single state or an n x u batch.
    """
    states = np.atleast_2d(np.asarray(state_vector(x), dtype=float))
    values = param_values(c)
    bound = np.zeros(states.shape[0])
    for law in net.laws:
        bound += law.upper_bound(states, values, t0, t1)
    return float(bound[0]) if np.ndim(state_vector(x)) == 1 else bound


def _pick(h, u):
    """Index of the reaction whose cumulative hazard interval contains ``u``."""
    index = np.sum(np.cumsum(h, axis=-1) <= np.asarray(u)[..., None], axis=-1)
    return np.minimum(index, h.shape[-1] - 1)


def ssa_simulate(net, x0, c, t0, t1, rng, record_events=True):
    """
    Draw one exact path of the jump process from state ``x0`` at ``t0`` to ``t1``.

    With ``record_events=False`` only the event counts and final state are kept.
    """
    if not t1 > t0:
        raise ValueError(f"Simulation interval must be non-empty, got [{t0}, {t1}]")
    x = np.array(state_vector(x0), dtype=np.int64)
    initial = SystemState(t0, x.copy())
    values = param_values(c)
    counts = np.zeros(net.num_reactions, dtype=np.int64)
    events = []
    homogeneous = net.is_time_homogeneous
    t = float(t0)

    while True:
        if homogeneous:
            h = check_finite(hazards(net, x, values, t))
            rate = h.sum()
        else:
            rate = check_finite(upper_bound_rate(net, x, values, t, t1))
        if rate <= 0:
            break
        t += rng.exponential(1.0 / rate)
        if t > t1:
            break
        u = rng.uniform() * rate
        if not homogeneous:
            h = check_finite(hazards(net, x, values, t))
            if h.sum() > rate * (1 + BOUND_SLACK):
                raise HazardBoundError(f"Total hazard {h.sum()} exceeds the bound {rate} at t={t}")
            if u >= h.sum():
                continue
        reaction = int(_pick(h, u))
        x += net.stoich[:, reaction]
        counts[reaction] += 1
        if record_events:
            events.append((t, reaction))

    return JumpPath(initial, SystemState(t1, x), counts, events)


def ssa_propagate(net, states, c, t0, t1, rng):
    """
    Advance every row of ``states`` (n x u) independently from ``t0`` to ``t1``.

    Vectorised states-only version of ``ssa_simulate``; returns a new n x u array.
    """
    x = np.array(states, dtype=np.int64, copy=True)
    values = param_values(c)
    times = np.full(x.shape[0], float(t0))
    active = np.arange(x.shape[0])
    homogeneous = net.is_time_homogeneous

    while active.size:
        current = x[active]
        if homogeneous:
            h = check_finite(hazards(net, current, values, t0))
            rate = h.sum(axis=1)
        else:
            rate = check_finite(upper_bound_rate(net, current, values, times[active], t1))
        with np.errstate(divide='ignore'):
            waits = rng.standard_exponential(active.size) / rate
        times[active] += waits
        alive = times[active] <= t1
        active, rate = active[alive], rate[alive]
        if not active.size:
            break
        u = rng.uniform(size=active.size) * rate
        if homogeneous:
            h = h[alive]
        else:
            h = check_finite(hazards(net, x[active], values, times[active]))
            total = h.sum(axis=1)
            if np.any(total > rate * (1 + BOUND_SLACK)):
                raise HazardBoundError("Total hazard exceeds its thinning bound")
            fired = u < total
            active_fired, h, u = active[fired], h[fired], u[fired]
            x[active_fired] += net.stoich.T[_pick(h, u)]
            continue
        x[active] += net.stoich.T[_pick(h, u)]
    return x


def ssa_grid(net, x1, c, times, rng):
    """States at each of ``times`` starting from ``x1`` at ``times[0]``."""
    times = np.asarray(times, dtype=float)
    path = np.empty((times.size, net.num_species), dtype=np.int64)
    path[0] = state_vector(x1)
    for k in range(1, times.size):
        path[k] = ssa_simulate(net, path[k - 1], c, times[k - 1], times[k], rng, record_events=False).final_state.x
    return path
