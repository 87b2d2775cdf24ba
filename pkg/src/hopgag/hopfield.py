"""Dense and sparse Hopfield retrieval: energies, one-step dynamics and error bounds."""
import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_alpha, check_matrix, check_positive, check_vector, validate_estimator_input
from .errors import InvalidInputError
from .probability import alpha_entmax, logsumexp, threshold_and_support, tsallis_conjugate


class PatternMatrix:
    """Immutable ``d x M`` matrix whose columns are the stored patterns.

    Parameters
    ----------
    columns : array-like of shape (d, M)
    """

    def __init__(self, columns):
        arr = check_matrix(columns, "patterns").copy()
        arr.setflags(write=False)
        self._xi = arr
        self._max_norm = float(np.linalg.norm(arr, axis=0).max())

    @classmethod
    def from_rows(cls, rows):
        """Build from an ``M x d`` array holding one pattern per row."""
        return cls(check_matrix(rows, "patterns").T)

    @property
    def array(self):
        return self._xi

    @property
    def d(self):
        return self._xi.shape[0]

    @property
    def n_patterns(self):
        return self._xi.shape[1]

    @property
    def max_norm(self):
        """``m = max_nu ||xi_nu||``."""
        return self._max_norm

    def column(self, mu):
        return self._xi[:, mu]

    def __repr__(self):
        return f"PatternMatrix(d={self.d}, M={self.n_patterns})"


def as_patterns(xi):
    return xi if isinstance(xi, PatternMatrix) else PatternMatrix(xi)


@dataclass(frozen=True)
class HopfieldConfig:
    """Sparsity ``alpha`` and inverse temperature ``beta``.

    ``beta=None`` means ``1/sqrt(d)`` for the pattern dimension in use.
    """

    alpha: float = 1.0
    beta: float | None = None

    def __post_init__(self):
        check_alpha(self.alpha)
        if self.beta is not None:
            check_positive(self.beta, "beta")

    def beta_for(self, d):
        return 1.0 / math.sqrt(d) if self.beta is None else float(self.beta)


@dataclass(frozen=True)
class ErrorBoundReport:
    bound: float
    measured_error: float
    kappa: int
    separation: float

    @property
    def holds(self):
        return self.measured_error <= self.bound + 1e-9


def _prepare(x, xi, cfg):
    xi = as_patterns(xi)
    x = check_vector(x, "x")
    if x.shape[0] != xi.d:
        raise InvalidInputError(f"query has dimension {x.shape[0]} but patterns have d={xi.d}")
    cfg = cfg if cfg is not None else HopfieldConfig()
    return x, xi, cfg, cfg.beta_for(xi.d)


def retrieval_weights(x, xi, cfg=None):
    x, xi, cfg, beta = _prepare(x, xi, cfg)
    return alpha_entmax(xi.array.T @ x, cfg.alpha, beta)


def retrieve(x, xi, cfg=None):
    """One retrieval step ``Xi @ alpha_entmax(beta * Xi^T x)``."""
    x, xi, cfg, beta = _prepare(x, xi, cfg)
    return xi.array @ alpha_entmax(xi.array.T @ x, cfg.alpha, beta)


def energy(x, xi, cfg=None):
    """Hopfield energy ``-conj(beta, Xi^T x) + ||x||^2 / 2``.

    The conjugate is log-sum-exp for ``alpha == 1`` and the Tsallis conjugate
    otherwise; retrieval never increases this quantity.
    """
    x, xi, cfg, beta = _prepare(x, xi, cfg)
    z = xi.array.T @ x
    if cfg.alpha == 1.0:
        smooth_max = logsumexp(z, beta)
    else:
        smooth_max = tsallis_conjugate(z, cfg.alpha, beta)
    return float(-smooth_max + 0.5 * (x @ x))


def pattern_separation(x, xi, mu):
    """Gap ``<xi_mu, x> - max_{nu != mu} <xi_nu, x>``; ``+inf`` when M == 1."""
    xi = as_patterns(xi)
    x = check_vector(x, "x")
    if x.shape[0] != xi.d:
        raise InvalidInputError(f"query has dimension {x.shape[0]} but patterns have d={xi.d}")
    if not 0 <= mu < xi.n_patterns:
        raise InvalidInputError(f"pattern index {mu} out of range for M={xi.n_patterns}")
    if xi.n_patterns == 1:
        return math.inf
    z = xi.array.T @ x
    return float(z[mu] - np.max(np.delete(z, mu)))


def retrieval_error_bound(x, xi, mu, cfg=None):
    """Evaluate the retrieval-error bound for ``xi_mu`` alongside the measured error.

    Three regimes are distinguished: dense (``alpha == 1``), the general
    sparse case ``1 < alpha < 2`` and sparsemax (``alpha == 2``). The formulas
    are used exactly as stated, including the loose additive ``m`` terms.
    For ``kappa == M`` the missing ``(M+1)``-th order statistic is taken as
    ``z_(M) - M**(1 - alpha) / (alpha - 1)``.
    """
    x, xi, cfg, beta = _prepare(x, xi, cfg)
    alpha = cfg.alpha
    m = xi.max_norm
    n = xi.n_patterns
    z = xi.array.T @ x
    sep = pattern_separation(x, xi, mu)
    measured = float(np.linalg.norm(retrieve(x, xi, cfg) - xi.column(mu)))
    kappa = threshold_and_support(z, alpha, beta).kappa

    if alpha == 1.0:
        with np.errstate(over="ignore"):
            bound = 0.0 if n == 1 else 2.0 * m * (n - 1) * math.exp(min(-beta * sep, 700.0))
    else:
        z_sorted = np.sort(z)[::-1]
        top = z_sorted[0]
        if alpha == 2.0:
            bound = m + m * beta * (kappa * (top - z_sorted[kappa - 1]) + 1.0 / beta)
        else:
            if kappa < n:
                next_score = z_sorted[kappa]
            else:
                next_score = z_sorted[n - 1] - n ** (1.0 - alpha) / (alpha - 1.0)
            gap = max((alpha - 1.0) * beta * (top - next_score), 0.0)
            bound = m + m * kappa * gap ** (1.0 / (alpha - 1.0))
    return ErrorBoundReport(bound=float(bound), measured_error=measured, kappa=kappa, separation=sep)


class HopfieldRetriever(TransformerMixin, BaseEstimator):
    """Associative memory exposing Hopfield retrieval through the estimator API.

    ``fit`` stores the rows of ``X`` as patterns; ``transform`` maps each query
    row through ``n_iter`` retrieval steps.

    Parameters
    ----------
    alpha : float, default=1.0
        Entmax sparsity, 1 for dense (softmax) retrieval, 2 for sparsemax.
    beta : float or None, default=None
        Inverse temperature; ``None`` uses ``1/sqrt(n_features)``.
    n_iter : int, default=1
        Number of retrieval updates applied by ``transform``.
    """

    def __init__(self, alpha=1.0, beta=None, n_iter=1):
        self.alpha = alpha
        self.beta = beta
        self.n_iter = n_iter

    def fit(self, X, y=None):
        X = validate_estimator_input(self, X, reset=True)
        self.patterns_ = PatternMatrix.from_rows(X)
        self.config_ = HopfieldConfig(alpha=self.alpha, beta=self.beta)
        self.beta_ = self.config_.beta_for(self.patterns_.d)
        return self

    def _queries(self, X):
        check_is_fitted(self, "patterns_")
        return validate_estimator_input(self, X, reset=False)

    def transform(self, X):
        X = self._queries(X)
        if self.n_iter < 1:
            raise InvalidInputError("n_iter must be >= 1")
        out = np.empty_like(X)
        for i, row in enumerate(X):
            for _ in range(self.n_iter):
                row = retrieve(row, self.patterns_, self.config_)
            out[i] = row
        return out

    def predict(self, X):
        """Index of the pattern with the largest retrieval weight per query."""
        X = self._queries(X)
        return np.array([np.argmax(retrieval_weights(row, self.patterns_, self.config_)) for row in X])

    def energy(self, X):
        X = self._queries(X)
        return np.array([energy(row, self.patterns_, self.config_) for row in X])

    def score(self, X, y=None):
        """Negative mean energy of the queries (higher is closer to a memory)."""
        return float(-np.mean(self.energy(X)))
