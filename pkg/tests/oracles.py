"""Brute-force reference implementations, written independently of the package."""
import itertools
import math

import numpy as np


def sparsemax_by_enumeration(z, beta=1.0):
    """Euclidean projection of ``beta * z`` onto the simplex by trying every support set."""
    v = beta * np.asarray(z, dtype=float)
    n = v.shape[0]
    best, best_dist = None, math.inf
    for size in range(1, n + 1):
        for support in itertools.combinations(range(n), size):
            idx = list(support)
            tau = (v[idx].sum() - 1.0) / size
            p = np.zeros(n)
            p[idx] = v[idx] - tau
            if np.any(p[idx] < -1e-12):
                continue
            outside = [j for j in range(n) if j not in support]
            if outside and np.max(v[outside]) > tau + 1e-12:
                continue
            dist = np.sum((p - v) ** 2)
            if dist < best_dist:
                best, best_dist = p, dist
    return best


def entmax_by_bisection(z, alpha, beta=1.0, iters=400):
    """Threshold bisection in long double precision, normalised at the end."""
    v = (alpha - 1.0) * beta * np.asarray(z, dtype=np.longdouble)
    expo = np.longdouble(1.0) / np.longdouble(alpha - 1.0)
    lo, hi = v.max() - 1, v.max()
    for _ in range(iters):
        mid = (lo + hi) / 2
        if np.sum(np.clip(v - mid, 0, None) ** expo) >= 1:
            lo = mid
        else:
            hi = mid
    p = np.clip(v - lo, 0, None) ** expo
    return np.asarray(p / p.sum(), dtype=float)


def tsallis_by_loop(p, alpha):
    if alpha == 1.0:
        return -sum(q * math.log(q) for q in p if q > 0)
    return sum(q - q**alpha for q in p) / (alpha * (alpha - 1.0))


def separation_by_loop(x, columns, mu):
    scores = [float(np.dot(columns[:, nu], x)) for nu in range(columns.shape[1])]
    others = [s for nu, s in enumerate(scores) if nu != mu]
    return scores[mu] - max(others)


def random_simplex_point(rng, n):
    p = rng.exponential(size=n)
    if rng.random() < 0.3:
        p[rng.random(n) < 0.4] = 0.0
        if p.sum() == 0:
            p[0] = 1.0
    return p / p.sum()
