import logging

import numpy as np
from scipy import linalg

from .exceptions import FactorizationError

logger = logging.getLogger(__name__)


def cholesky_with_jitter(matrix, ladder=(0.0, 1e-10, 1e-8)):
    """
    Lower Cholesky factor of a symmetric matrix, adding eps * I for each eps in
    ``ladder`` until the factorisation succeeds.

    Returns ``(factor, eps)``. Raises FactorizationError when the whole ladder fails.
    """
    matrix = np.asarray(matrix, dtype=float)
    identity = np.eye(matrix.shape[0])
    for eps in ladder:
        try:
            factor = linalg.cholesky(matrix + eps * identity, lower=True)
        except linalg.LinAlgError:
            continue
        if eps > 0:
            logger.debug(f"Cholesky needed jitter {eps:g}")
        return factor, eps
    raise FactorizationError(f"Cholesky failed after jitter ladder {tuple(ladder)}")


def symmetrize(matrix):
    return 0.5 * (matrix + np.swapaxes(matrix, -1, -2))


def check_psd(matrices, tol=1e-8):
    """
    Raise FactorizationError unless every matrix in ``matrices`` (one, or a stack)
    is finite and symmetric with no eigenvalue below ``-tol`` times its largest entry.
    """
    matrices = np.asarray(matrices, dtype=float)
    if not np.all(np.isfinite(matrices)):
        raise FactorizationError("Matrix has non-finite entries")
    scale = np.maximum(1.0, np.abs(matrices).max(axis=(-2, -1)))
    asymmetry = np.abs(matrices - np.swapaxes(matrices, -1, -2)).max(axis=(-2, -1))
    if np.any(asymmetry > tol * scale):
        raise FactorizationError(f"Matrix is not symmetric (largest difference {asymmetry.max():g})")
    smallest = np.linalg.eigvalsh(matrices).min(axis=-1)
    if np.any(smallest < -tol * scale):
        raise FactorizationError(f"Matrix is not positive semi-definite (eigenvalue {smallest.min():g})")
    return matrices
