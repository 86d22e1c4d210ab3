"""
Pilot tuning: the particle count that puts the variance of the log-likelihood
estimate in the 1 to 1.5 band, and the posterior summaries a pilot chain hands on
to the main run.
"""
from dataclasses import dataclass
import logging

import numpy as np

logger = logging.getLogger(__name__)

VARIANCE_BAND = (1.0, 1.5)


@dataclass
class TuningResult:
    candidates: list
    variances: list
    chosen: int
    in_band: bool

    def to_dict(self):
        return {
            'candidates': [int(n) for n in self.candidates],
            'variances': [float(v) for v in self.variances],
            'chosen': int(self.chosen),
            'in_band': self.in_band,
            'band': list(VARIANCE_BAND),
        }


def choose_particles(candidates, variances):
    """
    Smallest N whose variance lies in the band; otherwise the smallest N already below
    the band's upper end; otherwise the largest candidate. Returns (N, in_band).
    """
    low, high = VARIANCE_BAND
    for n, variance in zip(candidates, variances):
        if low <= variance <= high:
            return n, True
    for n, variance in zip(candidates, variances):
        if variance <= high:
            logger.warning(f"No particle count gives a variance in [{low}, {high}]; "
                           f"using N={n} with variance {variance:.3f}")
            return n, False
    logger.warning(f"Even N={candidates[-1]} leaves the variance above {high}; using it anyway")
    return candidates[-1], False


def pilot_tune_particles(make_estimator, c_hat, candidates, reps=100):
    """
    Variance of the log-likelihood estimate at ``c_hat`` over ``reps`` independent
    runs for each candidate particle count. ``make_estimator(N)`` builds the estimator.
    """
    candidates = sorted(int(n) for n in candidates)
    if not candidates or candidates[0] < 1:
        raise ValueError(f"Candidate particle counts must be positive, got {candidates}")
    if reps < 2:
        raise ValueError(f"At least two repetitions are needed for a variance, got {reps}")
    variances = []
    for index, n in enumerate(candidates):
        estimator = make_estimator(n)
        try:
            estimates = np.array([estimator(c_hat, index * reps + rep) for rep in range(reps)])
        finally:
            if hasattr(estimator, 'close'):
                estimator.close()
        finite = estimates[np.isfinite(estimates)]
        variance = float(np.var(finite, ddof=1)) if finite.size > 1 else np.inf
        if finite.size < estimates.size:
            logger.warning(f"{estimates.size - finite.size} of {reps} estimates at N={n} were -inf")
        variances.append(variance)
        logger.info(f"N={n}: variance of log-likelihood estimate {variance:.3f}")
    chosen, in_band = choose_particles(candidates, variances)
    logger.info(f"Chose N={chosen}")
    return TuningResult(candidates, variances, chosen, in_band)


@dataclass
class PilotSummary:
    param_names: tuple
    c_hat: np.ndarray
    covariance: np.ndarray
    acceptance_rate: float

    @property
    def log_c_hat(self):
        return np.log(self.c_hat)

    def to_dict(self):
        return {
            'parameters': list(self.param_names),
            'c_hat': self.c_hat.tolist(),
            'log_c_hat': self.log_c_hat.tolist(),
            'covariance': self.covariance.tolist(),
            'acceptance_rate': self.acceptance_rate,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            tuple(data['parameters']),
            np.asarray(data['c_hat'], dtype=float),
            np.asarray(data['covariance'], dtype=float),
            float(data.get('acceptance_rate', np.nan)),
        )


def pilot_summary(report):
    """Posterior mean of c and covariance of log c from a pilot chain."""
    samples = report.samples
    covariance = np.atleast_2d(np.cov(samples, rowvar=False))
    return PilotSummary(report.param_names, np.exp(samples).mean(axis=0), covariance, report.acceptance_rate)
