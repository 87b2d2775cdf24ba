"""Probability maps from scores onto the simplex: softmax and the alpha-entmax family.

Every map takes raw scores ``z`` and an inverse temperature ``beta`` and
computes ``entmax_alpha(beta * z)``. The thresholded form used throughout is

    p_i = [(alpha - 1) * beta * z_i - tau]_+ ** (1 / (alpha - 1))

with ``tau`` chosen so that ``p`` sums to one.
"""
from dataclasses import dataclass

import numpy as np

from ._validation import check_alpha, check_positive, check_vector
from .errors import BisectionError, InvalidInputError

MAX_BISECTION_ITER = 200
DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class ThresholdReport:
    """Threshold ``tau`` and support size ``kappa`` of an entmax output.

    For ``alpha == 1`` there is no finite threshold; ``tau`` is then the
    log-partition ``log sum exp(beta z)`` so that ``p = exp(beta z - tau)``.
    """

    tau: float
    kappa: int


def softmax(z, beta=1.0):
    z = check_vector(z, "z")
    beta = check_positive(beta, "beta")
    s = beta * z
    e = np.exp(s - s.max())
    return e / e.sum()


def logsumexp(z, beta=1.0):
    """``(1/beta) log sum exp(beta z)``, computed stably."""
    z = check_vector(z, "z")
    beta = check_positive(beta, "beta")
    s = beta * z
    top = s.max()
    return float((top + np.log(np.exp(s - top).sum())) / beta)


def _sparsemax_tau(v):
    # v already holds (alpha - 1) * beta * z with alpha = 2
    u = np.sort(v)[::-1]
    cssv = np.cumsum(u) - 1.0
    k = np.arange(1, v.shape[0] + 1)
    support = np.count_nonzero(u - cssv / k > 0)
    return cssv[support - 1] / support


def _entmax15_tau(v):
    # Sorted-segment method: for each prefix of the sorted scores solve the
    # quadratic sum_{i<=k} (v_i - tau)^2 = 1 and keep the first self-consistent tau.
    u = np.sort(v)[::-1]
    n = u.shape[0]
    k = np.arange(1, n + 1)
    mean = np.cumsum(u) / k
    mean_sq = np.cumsum(u * u) / k
    ss = k * (mean_sq - mean * mean)
    delta = np.clip((1.0 - ss) / k, 0.0, None)
    tau = mean - np.sqrt(delta)
    support = np.count_nonzero(tau <= u)
    return tau[support - 1]


def _bisect_tau(v, alpha, tol):
    exponent = 1.0 / (alpha - 1.0)
    hi = v.max()
    lo = hi - 1.0
    width = hi - lo
    for _ in range(MAX_BISECTION_ITER):
        if width <= tol:
            return 0.5 * (lo + hi)
        mid = 0.5 * (lo + hi)
        mass = np.sum(np.clip(v - mid, 0.0, None) ** exponent)
        if mass >= 1.0:
            lo = mid
        else:
            hi = mid
        width = hi - lo
    if width <= tol:
        return 0.5 * (lo + hi)
    raise BisectionError("entmax threshold bisection did not converge", width)


def _threshold(z, alpha, beta, tol, method):
    v = (alpha - 1.0) * beta * z
    if method == "bisect":
        return v, _bisect_tau(v, alpha, tol)
    if method != "auto":
        raise InvalidInputError(f"unknown entmax method {method!r}")
    if alpha == 2.0:
        return v, _sparsemax_tau(v)
    if alpha == 1.5:
        return v, _entmax15_tau(v)
    return v, _bisect_tau(v, alpha, tol)


def _validate(z, alpha, beta, tol):
    return (
        check_vector(z, "z"),
        check_alpha(alpha),
        check_positive(beta, "beta"),
        check_positive(tol, "tol"),
    )


def alpha_entmax(z, alpha=1.5, beta=1.0, tol=DEFAULT_TOL, method="auto"):
    """Map scores ``z`` to ``alpha``-entmax of ``beta * z``.

    ``alpha == 1`` is softmax, ``alpha == 2`` is sparsemax (exact, sort based),
    ``alpha == 1.5`` uses the exact sorted-segment solution and any other
    alpha bisects on the threshold down to ``tol``. ``method="bisect"`` forces
    bisection for every ``alpha > 1``.

    Raises
    ------
    DomainError
        If ``alpha`` is outside ``[1, 2]``.
    BisectionError
        If bisection does not reach ``tol`` within 200 halvings.
    """
    z, alpha, beta, tol = _validate(z, alpha, beta, tol)
    if alpha == 1.0:
        return softmax(z, beta)
    v, tau = _threshold(z, alpha, beta, tol, method)
    p = np.clip(v - tau, 0.0, None) ** (1.0 / (alpha - 1.0))
    return p / p.sum()


def sparsemax(z, beta=1.0):
    return alpha_entmax(z, 2.0, beta)


def entmax15(z, beta=1.0):
    return alpha_entmax(z, 1.5, beta)


def threshold_and_support(z, alpha=1.5, beta=1.0, tol=DEFAULT_TOL):
    z, alpha, beta, tol = _validate(z, alpha, beta, tol)
    if alpha == 1.0:
        p = softmax(z, beta)
        return ThresholdReport(tau=beta * logsumexp(z, beta), kappa=int(np.count_nonzero(p > 0)))
    v, tau = _threshold(z, alpha, beta, tol, "auto")
    kappa = int(np.count_nonzero(v - tau > 0))
    return ThresholdReport(tau=float(tau), kappa=kappa)


def tsallis_entropy(p, alpha):
    """Tsallis entropy ``sum(p_i - p_i**alpha) / (alpha (alpha - 1))``.

    At ``alpha == 1`` the Shannon entropy ``-sum p_i log p_i`` is returned,
    which is the continuous limit of the general branch.
    """
    p = check_vector(p, "p")
    alpha = check_alpha(alpha)
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise InvalidInputError("p must lie on the probability simplex")
    if alpha == 1.0:
        nz = p[p > 0]
        return float(-np.sum(nz * np.log(nz)))
    return float(np.sum(p - p**alpha) / (alpha * (alpha - 1.0)))


def tsallis_conjugate(z, alpha=1.5, beta=1.0, tol=DEFAULT_TOL):
    """Temperature-scaled convex conjugate ``max_p <p, z> + H_alpha(p) / beta``.

    The maximiser is ``alpha_entmax(z, alpha, beta)``. For ``alpha == 1`` this
    is exactly ``logsumexp(z, beta)``.
    """
    z, alpha, beta, tol = _validate(z, alpha, beta, tol)
    if alpha == 1.0:
        return logsumexp(z, beta)
    p = alpha_entmax(z, alpha, beta, tol)
    return float(p @ z + tsallis_entropy(p, alpha) / beta)
