"""Nystrom discretization of the optimality operator.

The control is piecewise constant on the cells ``[t_j, t_{j+1})`` of a uniform
grid and the operator rows are collocated at the nodes ``t_k``. Vectors are
stacked time-major: the first ``N`` entries hold all assets at ``t_0``, the
next ``N`` all assets at ``t_1``, and so on.

Column ``n`` of every integral block is zero because no cell starts at
``t_n``, so the last node only carries the collocation row that fixes the
terminal trading speed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._exceptions import DimensionMismatch, IndexOutOfRange, InvalidParameters
from ._validation import (check_matrix, check_positive_definite, check_psd,
                          check_scalar, check_vector)
from .kernels import (KernelKind, bond_lower_coefficient, bond_upper_coefficient,
                      convolution_cells)

TIME_MAJOR = "time-major"


@dataclass(frozen=True)
class Grid:
    """Uniform grid ``t_k = k T / n`` for ``k = 0..n``."""

    n: int
    T: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise InvalidParameters(f"grid needs an integer n >= 2, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "T", check_scalar(self.T, "T", low=0, low_open=True))

    @property
    def dt(self):
        return self.T / self.n

    @property
    def nodes(self):
        return np.arange(self.n + 1) * self.dt

    def index_of(self, t):
        """Grid index of the node ``t`` (rounded to the nearest node)."""
        k = int(round(t / self.dt))
        if not 0 <= k <= self.n:
            raise IndexOutOfRange(f"t={t} lies outside [0, {self.T}]")
        return k


@dataclass(frozen=True, eq=False)
class MarketParams:
    """Objective parameters.

    Parameters
    ----------
    Lambda : (N, N) array_like
        Temporary impact. Its symmetric part must be positive definite.
    X0 : (N,) array_like
        Initial inventory.
    T : float
        Trading horizon.
    Sigma : (N, N) array_like, optional
        Covariance of the martingale price part. Defaults to zero.
    gamma : float
        Risk aversion.
    varrho : float
        Weight of the terminal inventory penalty.
    Pi : (N, N) array_like, optional
        Terminal penalty matrix. Defaults to the identity.
    """

    Lambda: np.ndarray
    X0: np.ndarray
    T: float
    Sigma: np.ndarray | None = None
    gamma: float = 0.0
    varrho: float = 0.0
    Pi: np.ndarray | None = None

    def __post_init__(self):
        X0 = check_vector(self.X0, "X0")
        N = X0.shape[0]
        Lam = check_matrix(self.Lambda, "Lambda", N)
        Sigma = np.zeros((N, N)) if self.Sigma is None else self.Sigma
        Pi = np.eye(N) if self.Pi is None else self.Pi
        Sigma = check_matrix(Sigma, "Sigma", N)
        Pi = check_matrix(Pi, "Pi", N)
        check_positive_definite(Lam, "Lambda")
        check_psd(Sigma, "Sigma")
        check_psd(Pi, "Pi")
        for name, value in (("X0", X0), ("Lambda", Lam), ("Sigma", Sigma), ("Pi", Pi)):
            object.__setattr__(self, name, value)
        object.__setattr__(self, "T", check_scalar(self.T, "T", low=0, low_open=True))
        object.__setattr__(self, "gamma", check_scalar(self.gamma, "gamma", low=0))
        object.__setattr__(self, "varrho", check_scalar(self.varrho, "varrho", low=0))

    @property
    def N(self):
        return self.X0.shape[0]

    @property
    def Lambda_bar(self):
        return 0.5 * (self.Lambda + self.Lambda.T)

    def to_dict(self):
        return {"Lambda": self.Lambda.tolist(), "X0": self.X0.tolist(), "T": self.T,
                "Sigma": self.Sigma.tolist(), "gamma": self.gamma,
                "varrho": self.varrho, "Pi": self.Pi.tolist()}


@dataclass(frozen=True, eq=False)
class DiscreteSystem:
    """Assembled operator ``D`` together with the blocks it was built from.

    ``kernel_lower``/``kernel_upper`` are ``(n+1, n+1)`` scalar matrices for
    kernels of the form ``scalar(t, s) * C`` and ``(n+1, n+1, N, N)`` block
    arrays otherwise.
    """

    D: np.ndarray
    kernel_lower: np.ndarray
    kernel_upper: np.ndarray
    F1_lower: np.ndarray
    F1_upper: np.ndarray
    F2_lower: np.ndarray
    F2_upper: np.ndarray
    grid: Grid
    N: int
    symmetrized: bool = True
    block_layout: str = field(default=TIME_MAJOR)

    def block(self, k, j):
        N = self.N
        return self.D[k * N:(k + 1) * N, j * N:(j + 1) * N]

    def trailing(self, k):
        if not 0 <= k <= self.grid.n:
            raise IndexOutOfRange(f"trailing index must lie in [0, {self.grid.n}], got {k}")
        return self.D[k * self.N:, k * self.N:]


def _index_masks(n):
    K, J = np.indices((n + 1, n + 1))
    lower = J < K
    upper = (K <= J) & (J <= n - 1)
    return K, J, lower, upper


def build_kernel_blocks(spec, grid):
    """Subinterval integrals of the kernel.

    Returns ``(L, U)`` with ``L[k, j] = int_{t_j}^{t_{j+1}} G(t_k, s) ds`` for
    ``j <= k - 1`` and ``U[k, j] = int_{t_j}^{t_{j+1}} G(s, t_k) ds`` for
    ``k <= j <= n - 1``; all other entries are zero. The adjoint (transpose)
    of the upper blocks is taken at assembly time.
    """
    n, dt = grid.n, grid.dt
    K, J, lower, upper = _index_masks(n)
    if spec.kind is KernelKind.BOND:
        L = np.zeros((n + 1, n + 1))
        U = np.zeros((n + 1, n + 1))
        for k, j in zip(*np.nonzero(lower)):
            L[k, j] = bond_lower_coefficient(spec, k, j, dt)
        for k, j in zip(*np.nonzero(upper)):
            U[k, j] = bond_upper_coefficient(spec, k, j, dt)
        return L, U
    # convolution kernels: entries depend on the offset only
    lower_vals = convolution_cells(spec, np.arange(n), dt, "lower")
    upper_vals = convolution_cells(spec, np.arange(n), dt, "upper")
    shape = (n + 1, n + 1) + lower_vals.shape[1:]
    L = np.zeros(shape)
    U = np.zeros(shape)
    L[lower] = lower_vals[(K - J - 1)[lower]]
    U[upper] = upper_vals[(J - K)[upper]]
    return L, U


def build_F_blocks(grid, exact_U1=False):
    """Blocks of ``F1(t, s) = 1{t > s} (T - t)`` and ``F2(t, s) = 1{t > s}``.

    ``U1`` follows the right-endpoint rule ``(T - t_j) dt`` unless
    ``exact_U1`` is set, in which case the exact cell integral
    ``(T - t_j - dt / 2) dt`` is used.
    """
    n, dt, T = grid.n, grid.dt, grid.T
    t = grid.nodes
    K, J, lower, upper = _index_masks(n)
    L1 = np.where(lower, (T - t[K]) * dt, 0.0)
    shift = 0.5 * dt if exact_U1 else 0.0
    U1 = np.where(upper, (T - t[J] - shift) * dt, 0.0)
    L2 = np.where(lower, dt, 0.0)
    U2 = np.where(upper, dt, 0.0)
    return L1, U1, L2, U2


def kernel_matrix(spec, grid, blocks=None):
    """The transient part ``K + K*`` of the operator as an ``N(n+1)`` square
    matrix, before any symmetrization."""
    L, U = build_kernel_blocks(spec, grid) if blocks is None else blocks
    if L.ndim == 2:
        return np.kron(L, spec.C) + np.kron(U, spec.C.T)
    n1, N = L.shape[0], L.shape[2]
    M = L + np.swapaxes(U, 2, 3)
    return M.transpose(0, 2, 1, 3).reshape(n1 * N, n1 * N)


def symmetrize_cells(M, n, N):
    """Replace the leading ``nN x nN`` block of ``M`` by its symmetric part."""
    M = M.copy()
    m = n * N
    M[:m, :m] = 0.5 * (M[:m, :m] + M[:m, :m].T)
    return M


def assemble_D(market, spec, grid, symmetrize=True, exact_U1=False):
    """Assemble the discrete operator ``D_n``.

    Parameters
    ----------
    market : MarketParams
    spec : PropagatorSpec
    grid : Grid
    symmetrize : bool, default True
        Replace the transient part on the ``n`` trading cells by its symmetric
        part. The row-collocated blocks are not exact transposes of each
        other, so without this step ``D_n`` is not the Hessian of any discrete
        objective. The quadratic form on the trading cells is unchanged.
    exact_U1 : bool, default False
        Use exact cell integrals for the upper risk blocks.

    Returns
    -------
    DiscreteSystem
    """
    N = market.N
    if spec.N != N:
        raise DimensionMismatch(f"kernel has N={spec.N}, market has N={N}")
    if abs(grid.T - market.T) > 1e-12 * market.T:
        raise InvalidParameters(f"grid horizon {grid.T} differs from market T={market.T}")
    L, U = build_kernel_blocks(spec, grid)
    L1, U1, L2, U2 = build_F_blocks(grid, exact_U1)
    D = (kernel_matrix(spec, grid, (L, U))
         + market.gamma * np.kron(L1 + U1, market.Sigma)
         + market.varrho * np.kron(L2 + U2, market.Pi))
    if symmetrize:
        D = symmetrize_cells(D, grid.n, N)
    D += np.kron(np.eye(grid.n + 1), market.Lambda_bar)
    D.setflags(write=False)
    return DiscreteSystem(D=D, kernel_lower=L, kernel_upper=U, F1_lower=L1, F1_upper=U1,
                          F2_lower=L2, F2_upper=U2, grid=grid, N=N,
                          symmetrized=symmetrize)


def assemble_trailing(market, spec, grid, k, symmetrize=True, system=None):
    """Trailing principal block of ``D_n`` over grid indices ``k..n``.

    Passing an already assembled ``system`` avoids re-assembly.
    """
    if not 0 <= k <= grid.n:
        raise IndexOutOfRange(f"trailing index must lie in [0, {grid.n}], got {k}")
    if system is None:
        system = assemble_D(market, spec, grid, symmetrize=symmetrize)
    return system.trailing(k)
