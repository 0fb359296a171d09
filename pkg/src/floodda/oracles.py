"""Independent reference solutions used to validate the numerical kernels.

These deliberately avoid the code paths they check: the normal-depth
oracle solves the Strickler uniform-flow relation by bisection, and the
Kalman oracle evaluates the textbook closed-form posterior with explicit
matrix inverses.
"""

from __future__ import annotations

import numpy as np


def strickler_normal_depth(q_total, ks, slope, width, tol=1e-10):
    """Uniform-flow depth in a rectangular channel, solved by bisection.

    Finds h with ``q_total = ks * A * R**(2/3) * sqrt(slope)`` where
    ``A = width*h`` and ``R = A / (width + 2h)``.
    """
    if q_total <= 0 or ks <= 0 or slope <= 0 or width <= 0:
        raise ValueError("all arguments must be positive")

    def conveyance(h):
        area = width * h
        radius = area / (width + 2.0 * h)
        return ks * area * radius ** (2.0 / 3.0) * slope ** 0.5

    lo, hi = 1e-8, 1.0
    while conveyance(hi) < q_total:
        hi *= 2.0
        if hi > 1e6:
            raise RuntimeError("normal depth bisection failed to bracket")
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if conveyance(mid) < q_total:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def kalman_posterior(prior_mean, prior_cov, obs_op, obs, obs_cov):
    """Closed-form linear-Gaussian posterior mean and covariance.

    ``obs_op`` is the m x d observation matrix H; uses the explicit
    gain K = P H^T (H P H^T + R)^-1.
    """
    mu = np.asarray(prior_mean, dtype=float)
    p = np.asarray(prior_cov, dtype=float)
    h = np.atleast_2d(np.asarray(obs_op, dtype=float))
    y = np.atleast_1d(np.asarray(obs, dtype=float))
    r = np.atleast_2d(np.asarray(obs_cov, dtype=float))
    s = h @ p @ h.T + r
    gain = p @ h.T @ np.linalg.inv(s)
    mean = mu + gain @ (y - h @ mu)
    cov = (np.eye(len(mu)) - gain @ h) @ p
    return mean, cov


def explicit_gain(x_members, y_members, obs_var):
    """Brute-force EnKF gain via explicit inversion of (Cyy + R).

    ``x_members`` is N x d, ``y_members`` N x m, ``obs_var`` the diagonal
    of R. Kept free of any shared code with the production solver.
    """
    x = np.asarray(x_members, dtype=float)
    y = np.asarray(y_members, dtype=float)
    n = x.shape[0]
    xa = x - x.mean(axis=0)
    ya = y - y.mean(axis=0)
    cxy = xa.T @ ya / (n - 1)
    cyy = ya.T @ ya / (n - 1)
    return cxy @ np.linalg.inv(cyy + np.diag(np.asarray(obs_var, dtype=float)))
