"""Discrete revenue-risk functional and reference portfolios.

The functional uses the same cell integrals as the operator assembly, so its
gradient on the trading cells is exactly ``dt * (g - D u)``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ._exceptions import GridMismatch, SingularSigma, ZeroGamma
from ._validation import check_matrix, check_vector
from .admissibility import transient_cost
from .discretization import assemble_D
from .signals import SignalKind, _decay_integral, drift_to_go


@dataclass(frozen=True)
class ObjectiveBreakdown:
    """Parts of the objective; costs and penalties are reported as positive
    magnitudes and enter ``total`` with a minus sign."""

    execution_cost: float
    transient_cost: float
    temporary_cost: float
    terminal_book_value: float
    risk_penalty: float
    terminal_penalty: float
    total: float

    def to_dict(self):
        return asdict(self)


def _check_u(u, grid, N):
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.n + 1, N):
        raise GridMismatch(f"u has shape {u.shape}, grid needs {(grid.n + 1, N)}")
    return u


def realized_drift_to_go(path, grid):
    """``A_T - A_{t_k}`` along a sampled signal path (left-point rule,
    matching the Euler scheme that generated it)."""
    I = path.values
    togo = np.zeros_like(I)
    togo[:-1] = np.cumsum(I[:-1][::-1], axis=0)[::-1] * grid.dt
    return togo


def expected_drift_to_go(model, grid):
    """``E_0[A_T - A_{t_k}]`` at every node."""
    if model.kind is SignalKind.OU:
        t = grid.nodes[:, None]
        return np.exp(-model.beta * t) * _decay_integral(model.beta, grid.T - t) * model.I0
    return drift_to_go(model, grid)


def evaluate_objective(market, spec, u, grid, model=None, path=None, P0=None):
    """Discrete objective of the strategy ``u``.

    Parameters
    ----------
    market : MarketParams
    spec : PropagatorSpec
    u : (n + 1, N) array_like
        Trading speeds; ``u[k]`` is held on ``[t_k, t_{k+1})`` and the last row
        does not trade.
    grid : Grid
    model : SignalModel, optional
        Drift model. Without ``path`` its expected drift is used.
    path : SignalPath, optional
        Realized signal; takes precedence over ``model``.
    P0 : (N,) array_like, optional
        Initial unaffected price; shifts the execution cost and the book
        value by the same amount. Defaults to zero.

    Returns
    -------
    ObjectiveBreakdown
    """
    N, n, dt = market.N, grid.n, grid.dt
    u = _check_u(u, grid, N)
    P0 = np.zeros(N) if P0 is None else check_vector(P0, "P0", N)
    if path is not None:
        togo = realized_drift_to_go(path.check(grid, N), grid)
    elif model is not None:
        togo = expected_drift_to_go(model, grid)
    else:
        togo = np.zeros((n + 1, N))
    A = togo[0] - togo  # A_{t_k} - A_0
    uc = u[:n]
    X = market.X0 + np.vstack([np.zeros(N), np.cumsum(uc * dt, axis=0)])
    execution = dt * float(np.sum(uc * (P0 + A[:n])))
    transient = transient_cost(spec, u, grid)
    temporary = 0.5 * dt * float(np.einsum("ki,ij,kj->", uc, market.Lambda, uc))
    book = float(X[-1] @ (P0 + A[-1]))
    risk = 0.5 * market.gamma * dt * float(np.einsum("ki,ij,kj->", X[1:], market.Sigma, X[1:]))
    terminal = 0.5 * market.varrho * float(X[-1] @ market.Pi @ X[-1])
    total = -execution - transient - temporary + book - risk - terminal
    return ObjectiveBreakdown(execution, transient, temporary, book, risk, terminal, total)


def foc_residual(market, spec, u, g, grid, system=None):
    """``max |D u - g|`` over all nodes and assets.

    ``g`` is the stacked right-hand side of shape ``(n + 1, N)`` or
    ``(N (n + 1),)``.
    """
    N = market.N
    u = _check_u(u, grid, N)
    g = np.asarray(g, dtype=float).reshape(-1)
    if g.shape[0] != N * (grid.n + 1):
        raise GridMismatch(f"g has {g.shape[0]} entries, grid needs {N * (grid.n + 1)}")
    if system is None:
        system = assemble_D(market, spec, grid)
    return float(np.max(np.abs(system.D @ u.ravel() - g)))


def markowitz(Sigma, gamma, I_t):
    """Frictionless mean-variance position ``Sigma^{-1} I_t / gamma``."""
    if gamma <= 0:
        raise ZeroGamma(f"gamma must be positive, got {gamma}")
    I_t = check_vector(I_t, "I_t")
    Sigma = check_matrix(Sigma, "Sigma", I_t.shape[0])
    if np.linalg.cond(Sigma) > 1 / np.finfo(float).eps:
        raise SingularSigma("Sigma is singular")
    return np.linalg.solve(Sigma, I_t) / gamma


def twap(market, grid):
    """Constant-speed liquidation of ``X0`` over the horizon."""
    u = np.tile(-market.X0 / grid.T, (grid.n + 1, 1))
    u[-1] = 0.0
    return u
