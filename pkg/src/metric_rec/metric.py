"""Weighted squared-distance kernel shared by all models.

The distance between x and y under a learned diagonal weight vector b is
``sum_t (b_t * (x_t - y_t))**2`` -- the squared form of a per-dimension
weighted Euclidean distance. All-ones b reduces it to plain squared
Euclidean distance.
"""

import numpy as np


def _check_lengths(b, x, y):
    if x.shape != y.shape:
        raise ValueError(
            f"dimension mismatch: x has length {x.shape[-1]}, y has length {y.shape[-1]}"
        )
    if b.shape[-1] != x.shape[-1]:
        raise ValueError(
            f"dimension mismatch: b has length {b.shape[-1]}, vectors have length {x.shape[-1]}"
        )


def mahalanobis_sq(b, x, y):
    """Squared weighted distance between vectors x and y.

    Symmetric in x and y, nonnegative, and zero when x == y.
    """
    b = np.asarray(b, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_lengths(b, x, y)
    diff = x - y
    return float(np.sum((b * diff) ** 2))


def grad_mahalanobis_sq(b, x, y):
    """Analytic gradients of ``mahalanobis_sq`` w.r.t. (b, x, y).

    Returns (db, dx, dy) with dy = -dx.
    """
    b = np.asarray(b, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_lengths(b, x, y)
    diff = x - y
    dx = 2.0 * b * b * diff
    db = 2.0 * b * diff * diff
    return db, dx, -dx
