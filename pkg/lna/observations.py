"""
Observation models Y_t = G'X_t + e_t.

Three kinds are supported:

- ``gaussian``: e_t ~ N(0, Sigma). Sigma is either fixed, or diagonal with standard
  deviations read from the parameter vector (``sd_indices``), so that they can be inferred.
- ``poisson``: Y_t ~ Poisson(G'X_t) where G selects the observed species.
- ``exact``: Sigma = 0, the state is observed through G without error.
"""
from dataclasses import dataclass
from typing import Optional
import logging

import numpy as np

from network.reactions import param_values
from stochkin.exceptions import DataError

logger = logging.getLogger(__name__)

GAUSSIAN = 'gaussian'
POISSON = 'poisson'
EXACT = 'exact'
KINDS = (GAUSSIAN, POISSON, EXACT)

POISSON_VARIANCE_FLOOR = 1e-6


@dataclass(frozen=True, eq=False)
class ObservationModel:
    kind: str
    G: np.ndarray
    Sigma: Optional[np.ndarray] = None
    sd_indices: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"Unknown observation kind {self.kind!r}")
        G = np.array(self.G, dtype=float)
        if G.ndim == 1:
            G = G[:, None]
        num_species, num_observed = G.shape
        if num_observed > num_species or np.linalg.matrix_rank(G) != num_observed:
            raise ValueError(f"G must have full column rank, got shape {G.shape}")
        G.setflags(write=False)
        object.__setattr__(self, 'G', G)
        object.__setattr__(self, 'sd_indices', tuple(int(i) for i in self.sd_indices))
        if self.kind == GAUSSIAN:
            if self.Sigma is None and len(self.sd_indices) != num_observed:
                raise ValueError("A Gaussian observation model needs Sigma or one sd parameter per observed component")
            if self.Sigma is not None:
                Sigma = np.array(self.Sigma, dtype=float).reshape(num_observed, num_observed)
                if not np.allclose(Sigma, Sigma.T) or np.linalg.eigvalsh(Sigma).min() < 0:
                    raise ValueError("Sigma must be symmetric positive semi-definite")
                Sigma.setflags(write=False)
                object.__setattr__(self, 'Sigma', Sigma)
        elif self.Sigma is not None or self.sd_indices:
            raise ValueError(f"The {self.kind} observation model takes no noise covariance")

    @classmethod
    def gaussian(cls, G, Sigma=None, sd_indices=()):
        return cls(GAUSSIAN, G, Sigma, tuple(sd_indices))

    @classmethod
    def poisson(cls, num_species, observed):
        G = np.zeros((num_species, len(observed)))
        G[list(observed), np.arange(len(observed))] = 1.0
        return cls(POISSON, G)

    @classmethod
    def exact(cls, G):
        return cls(EXACT, G)

    @property
    def num_observed(self):
        return self.G.shape[1]

    def mean(self, x):
        """G'x for a single state or for each row of a batch."""
        return np.asarray(x, dtype=float) @ self.G

    def covariance(self, c, z=None):
        """
        Observation noise covariance at parameters ``c``.

        For the Poisson kind this is the Gaussian substitute diag(max(G'z, floor)) used
        by the linear noise approximation, and needs the deterministic path ``z``.
        """
        if self.kind == EXACT:
            return np.zeros((self.num_observed, self.num_observed))
        if self.kind == POISSON:
            if z is None:
                raise ValueError("The Poisson substitute covariance needs the deterministic path z")
            return np.diag(np.maximum(self.mean(z), POISSON_VARIANCE_FLOOR))
        if self.Sigma is not None:
            return self.Sigma
        return np.diag(param_values(c)[list(self.sd_indices)] ** 2)

    def validate_data(self, values):
        """Observation table as a T x p float array, checked against the kind."""
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[1] != self.num_observed:
            raise DataError(f"Expected {self.num_observed} observed component(s), got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DataError("Observations must be finite")
        if self.kind in (POISSON, EXACT) and np.any(values != np.round(values)):
            raise DataError(f"{self.kind} observations must be integers")
        if self.kind == POISSON and np.any(values < 0):
            raise DataError("Poisson observations must be non-negative")
        return values

    def sample(self, x, c, rng):
        """Draw observations for a state (or each row of a batch of states)."""
        mean = self.mean(x)
        if self.kind == EXACT:
            return mean
        if self.kind == POISSON:
            return rng.poisson(np.maximum(mean, 0.0)).astype(float)
        covariance = self.covariance(c)
        if not np.any(covariance):
            return mean
        return mean + rng.standard_normal(mean.shape) @ np.linalg.cholesky(covariance).T

    def to_spec(self, species, param_names):
        spec = {'kind': self.kind}
        if self.kind == POISSON:
            spec['observed'] = [species[i] for i in self.G.argmax(axis=0)]
        else:
            spec['G'] = self.G.tolist()
        if self.kind == GAUSSIAN:
            if self.Sigma is not None:
                spec['Sigma'] = self.Sigma.tolist()
            else:
                spec['sd'] = [param_names[i] for i in self.sd_indices]
        return spec

    @classmethod
    def from_spec(cls, spec, species, param_names):
        kind = spec['kind']
        if kind == POISSON:
            return cls.poisson(len(species), [species.index(name) for name in spec['observed']])
        if kind == EXACT:
            return cls.exact(spec['G'])
        sd = tuple(param_names.index(name) for name in spec.get('sd', ()))
        return cls.gaussian(spec['G'], spec.get('Sigma'), sd)
