"""Batched attention kernels: dense, sparse, extrapolated and geometry-aware guided.

Each query row is an independent Hopfield state, keys play the role of the
stored patterns and scores are scaled by ``1/sqrt(d)`` with ``d`` the key
dimension.
"""
import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_alpha, check_matrix, validate_estimator_input
from .errors import InvalidInputError
from .fixed_point import GuidanceParams, gag_update
from .probability import alpha_entmax


@dataclass(frozen=True)
class AttentionBatch:
    """Queries ``Q`` (N x d), keys ``K`` (M x d) and values ``V`` (M x d_v)."""

    Q: np.ndarray
    K: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        Q = check_matrix(self.Q, "Q")
        K = check_matrix(self.K, "K")
        V = check_matrix(self.V, "V")
        if Q.shape[1] != K.shape[1]:
            raise InvalidInputError(f"Q has inner dimension {Q.shape[1]}, K has {K.shape[1]}")
        if K.shape[0] != V.shape[0]:
            raise InvalidInputError(f"K has {K.shape[0]} rows but V has {V.shape[0]}")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "V", V)

    @property
    def scale(self):
        return 1.0 / math.sqrt(self.K.shape[1])

    def scores(self):
        # row by row so each row is bitwise independent of the rest of the batch
        return np.stack([(self.K @ q) * self.scale for q in self.Q])


@dataclass
class AttentionOutput:
    rows: np.ndarray
    weights: np.ndarray | None = None


def _as_batch(batch):
    return batch if isinstance(batch, AttentionBatch) else AttentionBatch(*batch)


def attention_weights(batch, alpha=1.0):
    batch = _as_batch(batch)
    alpha = check_alpha(alpha)
    return np.stack([alpha_entmax(s, alpha) for s in batch.scores()])


def attention(batch, alpha=1.0):
    """Row-wise ``alpha_entmax(Q K^T / sqrt(d)) V``; ``alpha=1`` is softmax attention."""
    batch = _as_batch(batch)
    weights = attention_weights(batch, alpha)
    rows = np.stack([w @ batch.V for w in weights])
    return AttentionOutput(rows=rows, weights=weights)


def pladis_extrapolate(batch, alpha=1.5, lam=1.0):
    """Sparse attention pushed away from dense attention by ``lam``."""
    batch = _as_batch(batch)
    sparse = attention(batch, alpha).rows
    dense = attention(batch, 1.0).rows
    return AttentionOutput(rows=sparse + lam * (sparse - dense))


def gag_attention(batch, params=None):
    """Geometry-aware guided attention, one query row at a time.

    Each row's sparse-minus-dense residual is decomposed against that row's
    sparse output, filtered by ``zeta``, capped at norm ``eta`` and scaled
    by ``lam``; there is no interaction between rows.
    """
    batch = _as_batch(batch)
    params = params if params is not None else GuidanceParams()
    sparse = attention(batch, params.alpha).rows
    dense = attention(batch, 1.0).rows
    rows = np.stack([gag_update(s, d, params) for s, d in zip(sparse, dense)])
    return AttentionOutput(rows=rows)


class GuidedAttention(TransformerMixin, BaseEstimator):
    """Key/value memory whose ``transform`` applies guided attention to query rows.

    ``fit(K)`` stores the key rows, which also serve as values unless
    ``values=`` is passed. ``mode`` selects ``"sparse"``, ``"dense"``,
    ``"pladis"`` or ``"gag"``.
    """

    def __init__(self, alpha=1.5, lam=10.0, zeta=0.0, eta=15.0, mode="gag"):
        self.alpha = alpha
        self.lam = lam
        self.zeta = zeta
        self.eta = eta
        self.mode = mode

    def fit(self, X, y=None, values=None):
        self.keys_ = validate_estimator_input(self, X, reset=True)
        self.values_ = self.keys_ if values is None else check_matrix(values, "V")
        if self.values_.shape[0] != self.keys_.shape[0]:
            raise InvalidInputError("keys and values must have the same number of rows")
        return self

    def transform(self, X):
        check_is_fitted(self, "keys_")
        X = validate_estimator_input(self, X, reset=False)
        batch = AttentionBatch(X, self.keys_, self.values_)
        if self.mode == "sparse":
            return attention(batch, self.alpha).rows
        if self.mode == "dense":
            return attention(batch, 1.0).rows
        if self.mode == "pladis":
            return pladis_extrapolate(batch, self.alpha, self.lam).rows
        if self.mode == "gag":
            params = GuidanceParams(lam=self.lam, zeta=self.zeta, eta=self.eta, alpha=self.alpha)
            return gag_attention(batch, params).rows
        raise InvalidInputError(f"unknown mode {self.mode!r}")
