"""
Priors, always evaluated on the log scale the chains move in.

Priors stated on c itself (Gamma, Exponential) include the Jacobian c of the
change of variable to log c. The log-uniform prior is stated on log c directly.
"""
import math

import numpy as np
from scipy import special, stats

MAX_LOG_C = 700.0


class LogUniformPrior:
    """log c ~ U(lower, upper)."""
    kind = 'log-uniform'

    def __init__(self, lower, upper):
        if not lower < upper:
            raise ValueError(f"Empty prior support ({lower}, {upper})")
        self.lower = float(lower)
        self.upper = float(upper)

    def log_density(self, log_c):
        if self.lower < log_c < self.upper:
            return -math.log(self.upper - self.lower)
        return -math.inf

    def mean_log(self):
        return 0.5 * (self.lower + self.upper)

    def to_spec(self):
        return {'kind': self.kind, 'lower': self.lower, 'upper': self.upper}


class GammaPrior:
    """c ~ Gamma(shape, rate), mean shape / rate."""
    kind = 'gamma'

    def __init__(self, shape, rate):
        if shape <= 0 or rate <= 0:
            raise ValueError(f"Gamma prior needs positive shape and rate, got ({shape}, {rate})")
        self.shape = float(shape)
        self.rate = float(rate)
        self.distribution = stats.gamma(a=self.shape, scale=1.0 / self.rate)

    def log_density(self, log_c):
        if log_c > MAX_LOG_C:
            return -math.inf
        return float(self.distribution.logpdf(math.exp(log_c))) + log_c

    def mean_log(self):
        return special.digamma(self.shape) - math.log(self.rate)

    def to_spec(self):
        return {'kind': self.kind, 'shape': self.shape, 'rate': self.rate}


class ExponentialPrior:
    """c ~ Exp(rate), mean 1 / rate."""
    kind = 'exponential'

    def __init__(self, rate):
        if rate <= 0:
            raise ValueError(f"Exponential prior needs a positive rate, got {rate}")
        self.rate = float(rate)
        self.distribution = stats.expon(scale=1.0 / self.rate)

    def log_density(self, log_c):
        if log_c > MAX_LOG_C:
            return -math.inf
        return float(self.distribution.logpdf(math.exp(log_c))) + log_c

    def mean_log(self):
        return special.digamma(1.0) - math.log(self.rate)

    def to_spec(self):
        return {'kind': self.kind, 'rate': self.rate}


PRIOR_KINDS = {
    LogUniformPrior.kind: LogUniformPrior,
    GammaPrior.kind: GammaPrior,
    ExponentialPrior.kind: ExponentialPrior,
}


def prior_from_spec(spec):
    spec = dict(spec)
    kind = spec.pop('kind')
    if kind not in PRIOR_KINDS:
        raise ValueError(f"Unknown prior kind {kind!r}")
    return PRIOR_KINDS[kind](**spec)


class JointPrior:
    """Independent priors, one per parameter, in parameter order."""

    def __init__(self, priors):
        self.priors = tuple(priors)

    def __len__(self):
        return len(self.priors)

    def log_density(self, log_c):
        log_c = np.asarray(log_c, dtype=float)
        if log_c.size != len(self.priors):
            raise ValueError(f"Expected {len(self.priors)} parameters, got {log_c.size}")
        total = 0.0
        for prior, value in zip(self.priors, log_c):
            if not np.isfinite(value):
                return -math.inf
            density = prior.log_density(float(value))
            if density == -math.inf:
                return -math.inf
            total += density
        return total

    def mean_log(self):
        return np.array([prior.mean_log() for prior in self.priors])

    def to_spec(self):
        return [prior.to_spec() for prior in self.priors]

    @classmethod
    def from_spec(cls, specs):
        return cls(prior_from_spec(spec) for spec in specs)
