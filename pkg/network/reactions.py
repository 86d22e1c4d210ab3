"""
Reaction networks, their hazards and Jacobians.

A network is described by its reactant and product coefficient matrices P and Q
(v x u). Every reaction carries a hazard law: mass action by default, or a
registered custom law such as the time-dependent Gaussian pulse used for
transcription in the gene expression model.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional
import logging

import numpy as np
from scipy import special

from stochkin.exceptions import NegativeStateError, NonFiniteHazardError

logger = logging.getLogger(__name__)


def _frozen(array, dtype=float):
    array = np.array(array, dtype=dtype)
    array.setflags(write=False)
    return array


def param_values(c):
    """Natural-scale parameter values from a ParamVector or any array-like."""
    if isinstance(c, ParamVector):
        return c.values
    return np.asarray(c, dtype=float)


@dataclass(frozen=True, eq=False)
class ParamVector:
    """Strictly positive parameter vector, with the log scale used by the chains."""
    values: np.ndarray
    names: tuple = ()

    def __post_init__(self):
        values = _frozen(self.values)
        if values.ndim != 1:
            raise ValueError("Parameter vector must be one-dimensional")
        if not np.all(np.isfinite(values)) or np.any(values <= 0):
            raise ValueError(f"Parameters must be finite and strictly positive, got {values}")
        if self.names and len(self.names) != values.size:
            raise ValueError("Parameter names do not match the number of values")
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 'names', tuple(self.names))

    @classmethod
    def from_log(cls, log_values, names=()):
        log_values = np.asarray(log_values, dtype=float)
        if not np.all(np.isfinite(log_values)):
            raise ValueError(f"Log parameters must be finite, got {log_values}")
        return cls(np.exp(log_values), names)

    @property
    def log_values(self):
        return np.log(self.values)

    def __len__(self):
        return self.values.size

    def __getitem__(self, key):
        if isinstance(key, str):
            return self.values[self.names.index(key)]
        return self.values[key]

    def as_dict(self):
        return dict(zip(self.names, self.values.tolist()))


@dataclass(frozen=True, eq=False)
class SystemState:
    """A system state at time t: integer counts for MJP paths, reals for diffusions."""
    t: float
    x: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 't', float(self.t))
        object.__setattr__(self, 'x', _frozen(self.x, dtype=np.asarray(self.x).dtype))


def state_vector(x):
    """The count (or real) vector of a SystemState, a DiffusionState or a plain array."""
    if hasattr(x, 't') and hasattr(x, 'x'):
        return np.asarray(x.x)
    return np.asarray(x)


class MassActionHazard:
    """h_i = c_k * prod_j binom(x_j, p_ij), time-homogeneous."""
    kind = 'mass-action'
    time_dependent = False

    def __init__(self, rate_index, orders):
        self.rate_index = int(rate_index)
        self.orders = np.asarray(orders, dtype=np.int64)

    def rate(self, states, c, t):
        result = np.full(states.shape[0], c[self.rate_index], dtype=float)
        for j, order in enumerate(self.orders):
            if order == 0:
                continue
            if order == 1:
                result = result * states[:, j]
            else:
                result = result * special.comb(states[:, j], order)
        return result

    def upper_bound(self, states, c, t0, t1):
        return self.rate(states, c, t0)

    def to_spec(self, param_names):
        return {'kind': self.kind, 'rate': param_names[self.rate_index]}


class GaussianPulseHazard:
    """
    Zero-order production with rate b0 * exp(-b1 * (t - b2)^2) + b3.

    The rate never exceeds b0 + b3, which is the thinning bound.
    """
    kind = 'gaussian-pulse'
    time_dependent = True

    def __init__(self, amplitude, width, centre, baseline):
        self.indices = tuple(int(i) for i in (amplitude, width, centre, baseline))

    def rate(self, states, c, t):
        b0, b1, b2, b3 = (c[i] for i in self.indices)
        t = np.broadcast_to(np.asarray(t, dtype=float), (states.shape[0],))
        return b0 * np.exp(-b1 * (t - b2) ** 2) + b3

    def upper_bound(self, states, c, t0, t1):
        b0, _, _, b3 = (c[i] for i in self.indices)
        return np.full(states.shape[0], b0 + b3, dtype=float)

    def to_spec(self, param_names):
        amplitude, width, centre, baseline = (param_names[i] for i in self.indices)
        return {
            'kind': self.kind,
            'amplitude': amplitude,
            'width': width,
            'centre': centre,
            'baseline': baseline,
        }


@dataclass(frozen=True, eq=False)
class ReactionNetwork:
    """
    Immutable reaction network.

    ``reactants`` and ``products`` are the v x u matrices P and Q; the
    stoichiometry matrix is S = (Q - P)'. ``laws`` holds one hazard law per
    reaction. ``analytic_jacobian`` is an optional callable (z, c, t) -> u x u.
    """
    species: tuple
    param_names: tuple
    reactants: np.ndarray
    products: np.ndarray
    laws: tuple
    reaction_names: tuple = ()
    analytic_jacobian: Optional[Callable] = field(default=None)

    def __post_init__(self):
        reactants = np.asarray(self.reactants)
        products = np.asarray(self.products)
        if reactants.shape != products.shape or reactants.ndim != 2:
            raise ValueError("Reactant and product matrices must share a v x u shape")
        for name, matrix in (('reactant', reactants), ('product', products)):
            if not np.all(np.equal(np.mod(matrix, 1), 0)) or np.any(matrix < 0):
                raise ValueError(f"{name} coefficients must be non-negative integers")
        num_reactions, num_species = reactants.shape
        if len(self.species) != num_species:
            raise ValueError("Species names do not match the coefficient matrices")
        if len(self.laws) != num_reactions:
            raise ValueError("Every reaction needs exactly one hazard law")
        for law in self.laws:
            if isinstance(law, MassActionHazard) and law.rate_index >= len(self.param_names):
                raise ValueError(f"Rate index {law.rate_index} is out of range")
        names = tuple(self.reaction_names) or tuple(f"R{i + 1}" for i in range(num_reactions))
        object.__setattr__(self, 'reactants', _frozen(reactants, np.int64))
        object.__setattr__(self, 'products', _frozen(products, np.int64))
        object.__setattr__(self, 'species', tuple(self.species))
        object.__setattr__(self, 'param_names', tuple(self.param_names))
        object.__setattr__(self, 'laws', tuple(self.laws))
        object.__setattr__(self, 'reaction_names', names)
        object.__setattr__(self, 'stoich', _frozen((products - reactants).T, np.int64))

    @property
    def num_species(self):
        return self.reactants.shape[1]

    @property
    def num_reactions(self):
        return self.reactants.shape[0]

    @property
    def is_time_homogeneous(self):
        return not any(law.time_dependent for law in self.laws)

    @classmethod
    def mass_action(cls, species, param_names, reactants, products, rates=None, **kwargs):
        """Network whose reaction i uses mass action with parameter ``rates[i]`` (default i)."""
        reactants = np.asarray(reactants)
        rates = range(reactants.shape[0]) if rates is None else rates
        laws = tuple(MassActionHazard(k, row) for k, row in zip(rates, reactants))
        return cls(species, param_names, reactants, products, laws, **kwargs)

    def to_spec(self):
        reactions = []
        for i, law in enumerate(self.laws):
            reactions.append({
                'name': self.reaction_names[i],
                'reactants': {s: int(n) for s, n in zip(self.species, self.reactants[i]) if n},
                'products': {s: int(n) for s, n in zip(self.species, self.products[i]) if n},
                'hazard': law.to_spec(self.param_names),
            })
        return {
            'species': list(self.species),
            'parameters': list(self.param_names),
            'reactions': reactions,
        }

    @classmethod
    def from_spec(cls, spec):
        species = tuple(spec['species'])
        param_names = tuple(spec['parameters'])
        reactants = np.zeros((len(spec['reactions']), len(species)), dtype=np.int64)
        products = np.zeros_like(reactants)
        laws, names = [], []
        for i, reaction in enumerate(spec['reactions']):
            for name, count in reaction.get('reactants', {}).items():
                reactants[i, species.index(name)] = count
            for name, count in reaction.get('products', {}).items():
                products[i, species.index(name)] = count
            hazard = reaction['hazard']
            if hazard['kind'] == MassActionHazard.kind:
                laws.append(MassActionHazard(param_names.index(hazard['rate']), reactants[i]))
            elif hazard['kind'] == GaussianPulseHazard.kind:
                laws.append(GaussianPulseHazard(*(
                    param_names.index(hazard[key])
                    for key in ('amplitude', 'width', 'centre', 'baseline')
                )))
            else:
                raise ValueError(f"Unknown hazard kind {hazard['kind']!r}")
            names.append(reaction.get('name', f"R{i + 1}"))
        return cls(species, param_names, reactants, products, tuple(laws), tuple(names))


def hazards(net, x, c, t=0.0):
    """
    Hazard vector h(x, c, t). ``x`` may be a single state (length u) or a batch
    (n x u), in which case an n x v matrix is returned.
    """
    states = np.asarray(state_vector(x), dtype=float)
    single = states.ndim == 1
    states = np.atleast_2d(states)
    if np.any(states < 0):
        raise NegativeStateError(f"Hazards evaluated at a negative state: {states[np.any(states < 0, axis=1)][0]}")
    values = param_values(c)
    h = np.empty((states.shape[0], net.num_reactions))
    for i, law in enumerate(net.laws):
        h[:, i] = law.rate(states, values, t)
    return h[0] if single else h


def total_hazard(h):
    return np.sum(h, axis=-1)


def check_finite(h):
    if not np.all(np.isfinite(h)):
        raise NonFiniteHazardError(f"Non-finite hazard encountered: {h}")
    return h


def drift(net, z, c, t=0.0):
    """Deterministic rate S h(max(z, 0), c, t)."""
    z = np.maximum(np.asarray(z, dtype=float), 0.0)
    return hazards(net, z, c, t) @ net.stoich.T


def finite_difference_jacobian(net, z, c, t=0.0):
    """Central differences of S h with step max(1e-6, 1e-6 |z_j|), forward at the boundary."""
    z = np.asarray(z, dtype=float)
    u = z.size
    jac = np.empty((u, u))
    for j in range(u):
        step = max(1e-6, 1e-6 * abs(z[j]))
        upper = z.copy()
        upper[j] += step
        lower = z.copy()
        if z[j] - step >= 0:
            lower[j] -= step
            width = 2 * step
        else:
            width = step
        jac[:, j] = (drift(net, upper, c, t) - drift(net, lower, c, t)) / width
    return jac


def jacobian(net, z, c, t=0.0):
    """Jacobian F_t of S h(z) with respect to z."""
    if net.analytic_jacobian is not None:
        return np.asarray(net.analytic_jacobian(np.asarray(z, dtype=float), param_values(c), t))
    return finite_difference_jacobian(net, z, c, t)


# Built-in networks

def _lotka_volterra_jacobian(z, c, t):
    c1, c2, c3 = c[0], c[1], c[2]
    return np.array([
        [c1 - c2 * z[1], -c2 * z[0]],
        [c2 * z[1], c2 * z[0] - c3],
    ])


def lotka_volterra_network():
    """Prey reproduction, predation and predator death."""
    return ReactionNetwork.mass_action(
        species=('prey', 'predator'),
        param_names=('c1', 'c2', 'c3'),
        reactants=[[1, 0], [1, 1], [0, 1]],
        products=[[2, 0], [0, 2], [0, 0]],
        reaction_names=('prey reproduction', 'predation', 'predator death'),
        analytic_jacobian=_lotka_volterra_jacobian,
    )


def _gene_expression_jacobian(z, c, t):
    gamma_r, gamma_p, kappa_p = c[0], c[1], c[2]
    return np.array([
        [-gamma_r, 0.0],
        [kappa_p, -gamma_p],
    ])


def gene_expression_network():
    """
    mRNA (R) and protein (P) with time-dependent transcription.

    Parameters are (gamma_R, gamma_P, kappa_P, b0, b1, b2, b3, sigma); sigma is
    the observation noise and is never read by the hazards.
    """
    reactants = np.array([[0, 0], [1, 0], [1, 0], [0, 1]])
    products = np.array([[1, 0], [0, 0], [1, 1], [0, 0]])
    laws = (
        GaussianPulseHazard(3, 4, 5, 6),
        MassActionHazard(0, reactants[1]),
        MassActionHazard(2, reactants[2]),
        MassActionHazard(1, reactants[3]),
    )
    return ReactionNetwork(
        species=('mRNA', 'protein'),
        param_names=('gamma_R', 'gamma_P', 'kappa_P', 'b0', 'b1', 'b2', 'b3', 'sigma'),
        reactants=reactants,
        products=products,
        laws=laws,
        reaction_names=('transcription', 'mRNA degradation', 'translation', 'protein degradation'),
        analytic_jacobian=_gene_expression_jacobian,
    )


def _sir_jacobian(z, c, t):
    beta, gamma = c[0], c[1]
    return np.array([
        [-beta * z[1], -beta * z[0]],
        [beta * z[1], beta * z[0] - gamma],
    ])


def sir_network():
    """Susceptible-infective-removed epidemic; removed individuals are not tracked."""
    return ReactionNetwork.mass_action(
        species=('susceptible', 'infective'),
        param_names=('beta', 'gamma'),
        reactants=[[1, 1], [0, 1]],
        products=[[0, 2], [0, 0]],
        reaction_names=('infection', 'removal'),
        analytic_jacobian=_sir_jacobian,
    )


def immigration_death_network():
    """0 -> X at rate kappa, X -> 0 at rate gamma * X."""
    return ReactionNetwork.mass_action(
        species=('X',),
        param_names=('kappa', 'gamma'),
        reactants=[[0], [1]],
        products=[[1], [0]],
        reaction_names=('immigration', 'death'),
        analytic_jacobian=lambda z, c, t: np.array([[-c[1]]]),
    )


def pure_death_network():
    """X -> 0 at rate gamma * X."""
    return ReactionNetwork.mass_action(
        species=('X',),
        param_names=('gamma',),
        reactants=[[1]],
        products=[[0]],
        reaction_names=('death',),
        analytic_jacobian=lambda z, c, t: np.array([[-c[0]]]),
    )
