"""Minimum-norm point of the convex hull of a finite point set.

Wolfe's algorithm: major cycles add the vertex minimizing ``<x, p>``;
minor cycles move to the affine minimizer of the current corral, dropping
vertices whose barycentric weight would turn negative. The corral is kept
affinely independent, so the linear systems stay small and the result is
exact up to round-off.
"""

from __future__ import annotations

import numpy as np


def _affine_minimizer(Q):
    k = Q.shape[0]
    K = np.zeros((k + 1, k + 1))
    K[:k, :k] = Q @ Q.T
    K[:k, k] = 1.0
    K[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    return sol[:k]


def min_norm_point(points, tol=1e-12, max_iter=1000):
    """Return ``(x, weights)`` with ``x = weights @ points`` of least norm.

    ``weights`` is a full-length vector on the unit simplex.
    """
    P = np.atleast_2d(np.asarray(points, dtype=float))
    k_pts = P.shape[0]
    if k_pts == 0:
        raise ValueError("need at least one point")
    scale = max(float(np.max(np.sum(P * P, axis=1))), 1e-300)

    first = int(np.argmin(np.sum(P * P, axis=1)))
    S = [first]
    lam = np.array([1.0])
    x = P[first].copy()
    for _ in range(max_iter):
        if x @ x <= (tol**2) * scale:
            break
        j = int(np.argmin(P @ x))
        if x @ x - x @ P[j] <= tol * scale or j in S:
            break
        S.append(j)
        lam = np.append(lam, 0.0)
        while True:
            alpha = _affine_minimizer(P[S])
            if np.all(alpha > tol):
                lam = alpha
                break
            mask = alpha <= tol
            ratios = lam[mask] / (lam[mask] - alpha[mask])
            theta = float(np.min(ratios[np.isfinite(ratios)], initial=1.0))
            theta = min(max(theta, 0.0), 1.0)
            lam = theta * alpha + (1.0 - theta) * lam
            keep = lam > tol
            if not keep.any():
                keep[int(np.argmax(lam))] = True
            S = [s for s, kp in zip(S, keep) if kp]
            lam = lam[keep]
            lam = lam / lam.sum()
        x = lam @ P[S]

    weights = np.zeros(k_pts)
    weights[S] = lam
    return weights @ P, weights
