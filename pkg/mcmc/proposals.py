from dataclasses import dataclass
from functools import cached_property

import numpy as np

from stochkin.linalg import cholesky_with_jitter

OPTIMAL_SCALE = 2.38


@dataclass(frozen=True, eq=False)
class ProposalSpec:
    """
    Gaussian random walk on log c with innovation covariance
    scale * (2.38^2 / d_eff) * covariance.
    """
    scale: float
    covariance: np.ndarray
    d_eff: float = None

    def __post_init__(self):
        covariance = np.array(self.covariance, dtype=float)
        if covariance.ndim != 2 or covariance.shape[0] != covariance.shape[1]:
            raise ValueError(f"Proposal covariance must be square, got shape {covariance.shape}")
        if not self.scale > 0:
            raise ValueError(f"Proposal scale must be positive, got {self.scale}")
        d_eff = covariance.shape[0] if self.d_eff is None else self.d_eff
        if not d_eff > 0:
            raise ValueError(f"d_eff must be positive, got {d_eff}")
        covariance.setflags(write=False)
        object.__setattr__(self, 'covariance', covariance)
        object.__setattr__(self, 'd_eff', float(d_eff))

    @property
    def dimension(self):
        return self.covariance.shape[0]

    @property
    def innovation_covariance(self):
        return self.scale * OPTIMAL_SCALE ** 2 / self.d_eff * self.covariance

    @cached_property
    def factor(self):
        factor, _ = cholesky_with_jitter(self.innovation_covariance, (0.0, 1e-12, 1e-10, 1e-8))
        return factor


def rw_propose(log_c, prop, rng):
    """log c* = log c + L eta with L L' the innovation covariance and eta standard normal."""
    log_c = np.asarray(log_c, dtype=float)
    return log_c + prop.factor @ rng.standard_normal(prop.dimension)
