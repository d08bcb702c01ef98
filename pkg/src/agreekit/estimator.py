"""scikit-learn wrapper: distributed projection of agent-state vectors."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .design import DesignProblem, design
from .graph import Digraph
from .linalg import build_projection, matrix_exponential


class AgreementProjector(TransformerMixin, BaseEstimator):
    """Project each sample onto a subspace by running an agreement protocol.

    Each row of ``X`` is one joint state of ``n`` agents.  :meth:`fit`
    designs a graph-consistent ``A`` whose dynamics converge to the
    projection onto ``Im(basis)`` (along ``Im(ray_basis)^perp`` when given);
    :meth:`transform` returns ``exp(A T) x`` for each row, with ``T`` the
    certificate's limit horizon.

    Parameters
    ----------
    basis : array of shape (n, k)
        Columns span the agreement subspace.
    ray_basis : array of shape (n, k), optional
        Columns span the orthogonal complement of the projection direction;
        defaults to ``basis`` (orthogonal projection).
    graph : Digraph, optional
        Communication graph; the complete graph when omitted.
    objective : {"feasible", "spectral", "numerical"}
    seed : int
    """

    def __init__(self, basis=None, ray_basis=None, graph=None, objective="numerical", seed=0):
        self.basis = basis
        self.ray_basis = ray_basis
        self.graph = graph
        self.objective = objective
        self.seed = seed

    def fit(self, X=None, y=None):
        if self.basis is None:
            raise ValueError("basis is required")
        basis = np.asarray(self.basis, dtype=float)
        if basis.ndim == 1:
            basis = basis.reshape(-1, 1)
        ray = basis if self.ray_basis is None else np.asarray(self.ray_basis, dtype=float)
        weights = build_projection(basis, ray)
        n = weights.n
        if X is not None:
            X = check_array(X)
            if X.shape[1] != n:
                raise ValueError(f"X has {X.shape[1]} features, basis has {n} rows")
        self.graph_ = self.graph if self.graph is not None else Digraph.complete(n)
        self.weights_ = weights
        self.certificate_ = design(DesignProblem(self.graph_, weights, self.objective, seed=self.seed))
        self.A_ = self.certificate_.A
        self.n_features_in_ = n
        return self

    def transform(self, X):
        check_is_fitted(self, "A_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        horizon = self.certificate_.limit_horizon
        if not np.isfinite(horizon):
            return X.copy()
        return X @ matrix_exponential(self.A_, horizon).T
