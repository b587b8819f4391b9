"""Estimator-style front end.

:class:`OptimalTrader` follows the scikit-learn conventions: hyperparameters
are stored verbatim by ``__init__``, ``fit`` assembles and factorizes the
operator once, and ``predict`` maps observed signal paths to strategies.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._exceptions import InvalidParameters, PathMismatch
from .discretization import Grid, MarketParams, assemble_D
from .admissibility import require_admissible
from .kernels import PropagatorSpec
from .signals import SignalModel, SignalPath
from .solver import (TrailingFactors, solve_deterministic, solve_stochastic_path,
                     solve_stochastic_resolvent)

METHODS = ("trailing", "resolvent")


class OptimalTrader(BaseEstimator):
    """Optimal trading strategy under transient cross-impact.

    Parameters
    ----------
    kernel : PropagatorSpec, optional
        Propagator; defaults to no transient impact.
    Lambda : (N, N) array_like
        Temporary impact.
    X0 : (N,) array_like
        Initial inventory.
    T : float
        Horizon.
    Sigma, gamma, varrho, Pi
        Risk and terminal penalty parameters, see
        :class:`~crossimpact.discretization.MarketParams`.
    n : int
        Number of grid cells.
    signal : SignalModel, optional
        Drift model; defaults to zero drift.
    symmetrize : bool
        Symmetrize the transient part of the operator.
    force_inadmissible : bool
        Solve even when the kernel fails the admissibility audit.
    method : {"trailing", "resolvent"}
        Path-wise algorithm used by :meth:`predict`.

    Attributes
    ----------
    market_, grid_, system_ : fitted model objects
    admissibility_ : AdmissibilityReport
    expected_report_ : SolveReport
        Solution for the expected signal path.
    """

    def __init__(self, kernel=None, Lambda=None, X0=None, T=1.0, Sigma=None, gamma=0.0,
                 varrho=0.0, Pi=None, n=100, signal=None, symmetrize=True,
                 force_inadmissible=False, method="trailing"):
        self.kernel = kernel
        self.Lambda = Lambda
        self.X0 = X0
        self.T = T
        self.Sigma = Sigma
        self.gamma = gamma
        self.varrho = varrho
        self.Pi = Pi
        self.n = n
        self.signal = signal
        self.symmetrize = symmetrize
        self.force_inadmissible = force_inadmissible
        self.method = method

    def fit(self, X=None, y=None):
        """Assemble the operator and solve for the expected signal path.

        ``X`` and ``y`` are accepted for API compatibility and ignored.
        """
        if self.method not in METHODS:
            raise InvalidParameters(f"method must be one of {METHODS}, got {self.method!r}")
        if self.Lambda is None or self.X0 is None:
            raise InvalidParameters("Lambda and X0 are required")
        market = MarketParams(Lambda=self.Lambda, X0=self.X0, T=self.T, Sigma=self.Sigma,
                              gamma=self.gamma, varrho=self.varrho, Pi=self.Pi)
        kernel = PropagatorSpec.zero(market.N) if self.kernel is None else self.kernel
        signal = SignalModel.zero(market.N) if self.signal is None else self.signal
        grid = Grid(self.n, self.T)
        self.admissibility_ = require_admissible(kernel, grid, self.force_inadmissible)
        self.market_, self.kernel_, self.signal_, self.grid_ = market, kernel, signal, grid
        self.system_ = assemble_D(market, kernel, grid, symmetrize=self.symmetrize)
        self._factors = TrailingFactors(self.system_)
        self.expected_report_ = solve_deterministic(market, kernel, grid, model=signal,
                                                    system=self.system_, check=False)
        self.n_features_in_ = market.N
        return self

    def _paths(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 2:
            X = X[None]
        shape = (self.grid_.n + 1, self.market_.N)
        if X.ndim != 3 or X.shape[1:] != shape:
            raise PathMismatch(f"signal paths must have shape (n_paths, {shape[0]}, {shape[1]})")
        return X

    def solve_path(self, path):
        """Full :class:`~crossimpact.solver.SolveReport` for one observed path."""
        check_is_fitted(self, "system_")
        kw = dict(system=self.system_, check=False)
        if self.method == "trailing":
            return solve_stochastic_path(self.market_, self.kernel_, self.signal_,
                                         SignalPath(path), self.grid_, factors=self._factors,
                                         **kw)
        return solve_stochastic_resolvent(self.market_, self.kernel_, self.signal_,
                                          SignalPath(path), self.grid_, **kw)

    def predict(self, X=None):
        """Strategies for observed signal paths.

        Parameters
        ----------
        X : array_like of shape (n_paths, n + 1, N), optional
            Signal values ``I(t_k)``. ``None`` returns the strategy for the
            expected path.

        Returns
        -------
        ndarray of shape (n_paths, n + 1, N) or (n + 1, N)
        """
        check_is_fitted(self, "system_")
        if X is None:
            return self.expected_report_.u.copy()
        return np.stack([self.solve_path(p).u for p in self._paths(X)])

    def transform(self, X=None):
        """Inventory paths matching :meth:`predict`."""
        check_is_fitted(self, "system_")
        if X is None:
            return self.expected_report_.inventory.copy()
        return np.stack([self.solve_path(p).inventory for p in self._paths(X)])

    def score(self, X=None, y=None):
        """Mean realized objective over the supplied paths."""
        check_is_fitted(self, "system_")
        if X is None:
            return self.expected_report_.objective.total
        return float(np.mean([self.solve_path(p).objective.total for p in self._paths(X)]))
