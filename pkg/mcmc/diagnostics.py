"""
Chain diagnostics: autocorrelation, effective sample size and marginal density grids.
"""
import logging

import numpy as np
import pandas as pd
from scipy import stats

logger = logging.getLogger(__name__)

MIN_CHAIN_LENGTH = 10


def autocorrelation(x):
    """Normalised sample autocorrelation at every lag, computed with the FFT."""
    x = np.asarray(x, dtype=float)
    n = x.size
    centred = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    spectrum = np.fft.rfft(centred, size)
    acov = np.fft.irfft(spectrum * np.conjugate(spectrum), size)[:n] / n
    return acov / acov[0]


def ess(x):
    """
    Effective sample size n / (1 + 2 sum rho_k), truncating the sum with Geyer's
    initial positive sequence. A constant chain has ESS 1.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < MIN_CHAIN_LENGTH:
        raise ValueError(f"ESS needs at least {MIN_CHAIN_LENGTH} draws, got {n}")
    if np.ptp(x) == 0:
        return 1.0
    rho = autocorrelation(x)
    pairs = rho[:n - n % 2].reshape(-1, 2).sum(axis=1)
    negative = np.flatnonzero(pairs <= 0)
    stop = negative[0] if negative.size else pairs.size
    tau = -1.0 + 2.0 * pairs[:stop].sum()
    return float(n / max(tau, 1.0 / n))


def ess_per_param(samples):
    samples = np.asarray(samples, dtype=float)
    return np.array([ess(samples[:, j]) for j in range(samples.shape[1])])


def acceptance_rate(samples):
    """Fraction of consecutive draws that moved, for chains read back from disk."""
    samples = np.asarray(samples, dtype=float)
    if samples.shape[0] < 2:
        return 0.0
    return float(np.any(np.diff(samples, axis=0) != 0, axis=1).mean())


def density_grid(samples, names, points=200):
    """
    Kernel density estimate of each marginal on a regular grid of ``points`` values,
    as a long table with columns parameter, log_value, density.
    """
    frames = []
    samples = np.asarray(samples, dtype=float)
    for j, name in enumerate(names):
        column = samples[:, j]
        if np.ptp(column) == 0:
            logger.warning(f"Chain for {name} never moved, skipping its density")
            continue
        grid = np.linspace(column.min(), column.max(), points)
        try:
            density = stats.gaussian_kde(column)(grid)
        except np.linalg.LinAlgError:
            logger.warning(f"Kernel density for {name} is degenerate, skipping it")
            continue
        frames.append(pd.DataFrame({'parameter': name, 'log_value': grid, 'density': density}))
    if not frames:
        return pd.DataFrame(columns=['parameter', 'log_value', 'density'])
    return pd.concat(frames, ignore_index=True)
