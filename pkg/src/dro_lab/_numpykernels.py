"""Pure-numpy implementations of the hot kernels (fallback backend)."""

import numpy as np


def gaussian_gram(X: np.ndarray, Y: np.ndarray, inv_sigma_sq: float) -> np.ndarray:
    """Gram block K[i, j] = exp(-||x_i - y_j||^2 * inv_sigma_sq)."""
    X = np.ascontiguousarray(X, dtype=float)
    Y = np.ascontiguousarray(Y, dtype=float)
    # squared distances via the expanded form; clip tiny negative round-off
    sq = (
        np.sum(X * X, axis=1)[:, None]
        - 2.0 * (X @ Y.T)
        + np.sum(Y * Y, axis=1)[None, :]
    )
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-sq * inv_sigma_sq)


def pairwise_dists_condensed(X: np.ndarray) -> np.ndarray:
    """Euclidean distances ||x_i - x_j|| for i < j, in row-major pair order."""
    X = np.ascontiguousarray(X, dtype=float)
    n = X.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    diff = X[iu] - X[ju]
    return np.sqrt(np.sum(diff * diff, axis=1))
