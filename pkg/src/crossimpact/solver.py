"""Optimal strategies from the discretized first-order condition.

The deterministic problem is a single dense solve ``D u = g``. With a
stochastic signal the strategy is computed path by path: at each node ``t_k``
the conditional expectations of the remaining right-hand side are formed
from the observed signal, the effect of the trades already executed is
subtracted, and the trailing system over ``t_k..t_n`` is solved for the plan
``m``, of which only the current speed ``m(t_k)`` is executed.
"""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from ._exceptions import GridMismatch, SingularSystem
from .admissibility import require_admissible
from .discretization import assemble_D
from .objective import evaluate_objective
from .signals import SignalKind, SignalModel, SignalPath, expected_path, g_profile


@dataclass(frozen=True, eq=False)
class Strategy:
    """Trading speeds ``u[k]`` held on ``[t_k, t_{k+1})``, shape ``(n + 1, N)``."""

    u: np.ndarray
    grid: object

    def __post_init__(self):
        if self.u.shape[0] != self.grid.n + 1 or not np.all(np.isfinite(self.u)):
            raise GridMismatch("strategy must hold n + 1 finite rows")


@dataclass(frozen=True, eq=False)
class SolveReport:
    strategy: Strategy
    inventory: np.ndarray
    distortion: np.ndarray
    foc_residual: float
    objective: object
    wall_time: float
    g: np.ndarray
    signal: np.ndarray | None = None
    method: str = "deterministic"
    admissibility: object = None

    @property
    def u(self):
        return self.strategy.u


def _lu(M):
    with warnings.catch_warnings():
        warnings.simplefilter("error", linalg.LinAlgWarning)
        try:
            lu = linalg.lu_factor(M, check_finite=False)
        except (linalg.LinAlgWarning, ValueError, np.linalg.LinAlgError) as exc:
            raise SingularSystem(f"factorization failed: {exc}") from None
    piv = np.abs(np.diag(lu[0]))
    if piv.min() <= np.finfo(float).eps * piv.max() * M.shape[0]:
        raise SingularSystem("operator matrix is numerically singular")
    return lu


class TrailingFactors:
    """Lazily computed LU factors of the trailing blocks of an assembled system."""

    def __init__(self, system):
        self.system = system
        self._lu = {}

    def solve(self, k, rhs):
        if k not in self._lu:
            self._lu[k] = _lu(self.system.trailing(k))
        return linalg.lu_solve(self._lu[k], rhs, check_finite=False)


def inventory_and_distortion(spec, X0, u, grid, blocks=None):
    """Inventory ``X(t_k)`` and price distortion ``D(t_k)`` along ``u``.

    The distortion at ``t_k`` is ``sum_{j<k} L_{kj} u_j`` with the lower
    kernel blocks of the assembly.
    """
    from .discretization import build_kernel_blocks

    u = np.asarray(u, dtype=float)
    n = grid.n
    X = X0 + np.vstack([np.zeros(len(X0)), np.cumsum(u[:n] * grid.dt, axis=0)])
    L = build_kernel_blocks(spec, grid)[0] if blocks is None else blocks
    if L.ndim == 2:
        dist = (L @ u) @ spec.C.T
    else:
        dist = np.einsum("kjab,jb->ka", L, u)
    return X, dist


def _report(market, spec, system, u, g, residual, t0, model=None, path=None, method="",
            admissibility=None):
    grid = system.grid
    X, dist = inventory_and_distortion(spec, market.X0, u, grid, system.kernel_lower)
    obj = evaluate_objective(market, spec, u, grid, model=model, path=path)
    signal = None
    if path is not None:
        signal = path.values
    elif model is not None:
        signal = expected_path(model, grid).values
    return SolveReport(strategy=Strategy(u, grid), inventory=X, distortion=dist,
                       foc_residual=residual, objective=obj,
                       wall_time=time.perf_counter() - t0, g=g, signal=signal,
                       method=method, admissibility=admissibility)


def _prepare(market, spec, grid, force, symmetrize, system, check):
    report = require_admissible(spec, grid, force) if check else None
    if system is None:
        system = assemble_D(market, spec, grid, symmetrize=symmetrize)
    return system, report


def solve_deterministic(market, spec, grid, g=None, model=None, *, force=False,
                        symmetrize=True, system=None, check=True):
    """Solve ``D_n u = g_n`` for a deterministic right-hand side.

    Parameters
    ----------
    market : MarketParams
    spec : PropagatorSpec
    grid : Grid
    g : array_like, optional
        Right-hand side of shape ``(n + 1, N)``. By default it is built from
        ``model`` (zero drift when ``model`` is None).
    model : SignalModel, optional
        Drift model. An OU model contributes its expected drift.
    force : bool
        Solve even if the kernel fails the admissibility audit.
    symmetrize : bool
        Passed to :func:`~crossimpact.discretization.assemble_D`.
    system : DiscreteSystem, optional
        Pre-assembled operator.
    check : bool
        Run the admissibility audit.

    Returns
    -------
    SolveReport
    """
    t0 = time.perf_counter()
    system, adm = _prepare(market, spec, grid, force, symmetrize, system, check)
    N = market.N
    if g is None:
        model = SignalModel.zero(N) if model is None else model
        g = g_profile(market, model, grid, 0.0)
    g = np.asarray(g, dtype=float).reshape(-1)
    if g.shape[0] != N * (grid.n + 1) or not np.all(np.isfinite(g)):
        raise GridMismatch(f"g must hold {N * (grid.n + 1)} finite entries")
    u = linalg.lu_solve(_lu(system.D), g, check_finite=False)
    residual = float(np.max(np.abs(system.D @ u - g)))
    return _report(market, spec, system, u.reshape(-1, N), g.reshape(-1, N), residual, t0,
                   model=model, method="deterministic", admissibility=adm)


def _stochastic_inputs(market, model, path, grid):
    if path is None:
        if model.kind is SignalKind.OU:
            path = expected_path(model, grid)
    else:
        path = path if isinstance(path, SignalPath) else SignalPath(path)
        path.check(grid, market.N)
    return path


def _ghat(market, model, path, grid, k):
    state = None if path is None or model.kind is not SignalKind.OU else path.values[k]
    return g_profile(market, model, grid, grid.nodes[k], state).ravel()


def solve_stochastic_path(market, spec, model, path, grid, *, force=False, symmetrize=True,
                          system=None, check=True, factors=None):
    """Path-wise optimal strategy by forward recursion over trailing systems.

    At node ``k`` the plan ``m`` solves
    ``D[k:, k:] m = E_k[g][k:] - D[k:, :k] u[:k]`` and ``u_k = m_0``. The
    reported FOC residual is the largest residual of these trailing solves.

    Parameters
    ----------
    path : SignalPath or array_like, optional
        Observed signal ``I(t_k)``. For an OU model ``None`` means the
        expected path.
    factors : TrailingFactors, optional
        Cache of trailing factorizations to reuse across paths.
    """
    t0 = time.perf_counter()
    system, adm = _prepare(market, spec, grid, force, symmetrize, system, check)
    path = _stochastic_inputs(market, model, path, grid)
    factors = TrailingFactors(system) if factors is None else factors
    N, n, D = market.N, grid.n, system.D
    u = np.zeros((n + 1) * N)
    residual = 0.0
    for k in range(n + 1):
        rhs = _ghat(market, model, path, grid, k) - D[k * N:, :k * N] @ u[:k * N]
        m = factors.solve(k, rhs)
        residual = max(residual, float(np.max(np.abs(system.trailing(k) @ m - rhs))))
        u[k * N:(k + 1) * N] = m[:N]
    g0 = _ghat(market, model, path, grid, 0)
    return _report(market, spec, system, u.reshape(-1, N), g0.reshape(-1, N), residual, t0,
                   model=model, path=path, method="trailing", admissibility=adm)


def solve_stochastic_resolvent(market, spec, model, path, grid, *, force=False,
                               symmetrize=True, system=None, check=True):
    """Path-wise optimal strategy from the explicit ``(I + B) u = a`` form.

    With ``K*_k`` the first block row of the trailing system without its
    temporary-impact diagonal,

    * ``a_k = Lbar^{-1} (g_k - K*_k D_k^{-1} g_k)`` and
    * ``B_kj = Lbar^{-1} (D[k, j] - K*_k D_k^{-1} D[k:, j])`` for ``j < k``,

    and ``B`` vanishes for ``j >= k``, so the system is solved by forward
    block substitution.
    """
    t0 = time.perf_counter()
    system, adm = _prepare(market, spec, grid, force, symmetrize, system, check)
    path = _stochastic_inputs(market, model, path, grid)
    N, n, D = market.N, grid.n, system.D
    Lbar = market.Lambda_bar
    lbar_lu = linalg.lu_factor(Lbar)
    u = np.zeros((n + 1, N))
    residual = 0.0
    for k in range(n + 1):
        Dk = system.trailing(k)
        Kstar = Dk[:N].copy()
        Kstar[:, :N] -= Lbar
        gk = _ghat(market, model, path, grid, k)
        past = D[k * N:, :k * N]
        sol = linalg.lu_solve(_lu(Dk), np.column_stack([gk, past]), check_finite=False)
        a_k = linalg.lu_solve(lbar_lu, gk[:N] - Kstar @ sol[:, 0])
        u_past = u[:k].ravel()
        if k:
            B_k = linalg.lu_solve(lbar_lu, D[k * N:(k + 1) * N, :k * N] - Kstar @ sol[:, 1:])
            u[k] = a_k - B_k @ u_past
        else:
            u[k] = a_k
        # the plan implied by a and B must solve the trailing system
        m = sol[:, 0] - sol[:, 1:] @ u_past
        residual = max(residual, float(np.max(np.abs(Dk @ m - (gk - past @ u_past)))))
    g0 = _ghat(market, model, path, grid, 0)
    return _report(market, spec, system, u, g0.reshape(-1, N), residual, t0, model=model,
                   path=path, method="resolvent", admissibility=adm)
