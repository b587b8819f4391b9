"""Drift of the unaffected price and its conditional expectations.

The unaffected price is ``P_t = P_0 + A_t + M_t`` with a martingale ``M`` and
drift ``A_t = int_0^t I_s ds``. Only the drift enters the optimal strategy,
through ``E_t[P_T - P_r] = E_t[A_T - A_r]``.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from ._exceptions import (GridMismatch, InvalidParameters, PathMismatch, TimeOrder,
                          WrongKind)
from ._validation import check_matrix, check_vector

SIMPSON_TOL = 1e-10


class SignalKind(str, Enum):
    DETERMINISTIC = "deterministic"
    OU = "ou"


@dataclass(frozen=True, eq=False)
class SignalModel:
    """Deterministic drift or Ornstein-Uhlenbeck predictor.

    Build instances with :meth:`zero`, :meth:`deterministic`,
    :meth:`from_table` or :meth:`ou`.
    """

    kind: SignalKind
    N: int
    drift_fn: Callable | None = None
    table_times: np.ndarray | None = None
    table_values: np.ndarray | None = None
    beta: np.ndarray | None = None
    I0: np.ndarray | None = None
    noise_scale: np.ndarray | None = None

    @classmethod
    def zero(cls, N):
        return cls.from_table([0.0, 1.0], np.zeros((2, N)))

    @classmethod
    def deterministic(cls, drift_fn, N):
        """Drift given by a callable ``t -> N-vector``."""
        if not callable(drift_fn):
            raise InvalidParameters("drift_fn must be callable")
        return cls(SignalKind.DETERMINISTIC, int(N), drift_fn=drift_fn)

    @classmethod
    def from_table(cls, times, values):
        """Piecewise-linear drift through ``(times[i], values[i])``; constant
        beyond the last time."""
        times = check_vector(times, "times", error=InvalidParameters)
        values = np.array(values, dtype=float)
        if values.ndim != 2 or values.shape[0] != times.shape[0] or times.size < 2:
            raise InvalidParameters("drift table needs values of shape (len(times), N)")
        if times[0] != 0.0 or np.any(np.diff(times) <= 0):
            raise InvalidParameters("drift table times must start at 0 and increase")
        if not np.all(np.isfinite(values)):
            raise InvalidParameters("drift table has non-finite values")
        values.setflags(write=False)
        return cls(SignalKind.DETERMINISTIC, values.shape[1], table_times=times,
                   table_values=values)

    @classmethod
    def ou(cls, beta, I0, noise_scale=None):
        """OU predictor ``dI = -beta I dt + noise_scale dW`` with diagonal ``beta``.

        ``beta`` may be given as the vector of diagonal entries or as a
        diagonal matrix.
        """
        I0 = check_vector(I0, "I0", error=InvalidParameters)
        N = I0.shape[0]
        beta = np.asarray(beta, dtype=float)
        if beta.ndim == 2:
            beta = check_matrix(beta, "beta", N, error=InvalidParameters)
            if np.any(beta - np.diag(np.diag(beta))):
                raise InvalidParameters("only diagonal beta is supported")
            beta = np.diag(beta)
        beta = check_vector(beta, "beta", N, error=InvalidParameters)
        if np.any(beta < 0):
            raise InvalidParameters("beta entries must be nonnegative")
        noise = np.zeros((N, N)) if noise_scale is None else noise_scale
        noise = check_matrix(noise, "noise_scale", N, error=InvalidParameters)
        return cls(SignalKind.OU, N, beta=beta, I0=I0, noise_scale=noise)

    def drift(self, t):
        """Deterministic drift ``I_t`` (deterministic kind only)."""
        self._require(SignalKind.DETERMINISTIC)
        if self.drift_fn is not None:
            return check_vector(self.drift_fn(t), "drift_fn(t)", self.N,
                                error=InvalidParameters)
        return np.array([np.interp(t, self.table_times, self.table_values[:, i])
                         for i in range(self.N)])

    def expected_drift(self, t):
        """``E_0[I_t]`` for either kind."""
        if self.kind is SignalKind.OU:
            return np.exp(-self.beta * t) * self.I0
        return self.drift(t)

    def _require(self, kind):
        if self.kind is not kind:
            raise WrongKind(f"operation needs a {kind.value} signal, got {self.kind.value}")

    def to_dict(self):
        if self.kind is SignalKind.OU:
            return {"kind": "ou", "beta": self.beta.tolist(), "I0": self.I0.tolist(),
                    "noise_scale": self.noise_scale.tolist()}
        if self.drift_fn is not None:
            raise InvalidParameters("callable drifts cannot be serialized; use a table")
        return {"kind": "deterministic", "times": self.table_times.tolist(),
                "values": self.table_values.tolist()}

    @classmethod
    def from_dict(cls, d):
        kind = d.get("kind")
        if kind == "ou":
            return cls.ou(d["beta"], d["I0"], d.get("noise_scale"))
        if kind == "deterministic":
            return cls.from_table(d["times"], d["values"])
        raise InvalidParameters(f"unknown signal kind {kind!r}")


@dataclass(frozen=True, eq=False)
class SignalPath:
    """Signal values ``I(t_k)`` on a grid, shape ``(n + 1, N)``."""

    values: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2:
            raise PathMismatch(f"signal path must be 2-d, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise PathMismatch("signal path has non-finite entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def check(self, grid, N):
        if self.values.shape != (grid.n + 1, N):
            raise PathMismatch(f"path has shape {self.values.shape}, "
                               f"grid needs {(grid.n + 1, N)}")
        return self


def simulate_ou_path(model, grid, seed=None):
    """Euler-Maruyama path ``I_{k+1} = I_k - beta I_k dt + noise sqrt(dt) xi_k``."""
    model._require(SignalKind.OU)
    rng = np.random.default_rng(seed)
    dt = grid.dt
    xi = rng.standard_normal((grid.n, model.N))
    noise = xi @ model.noise_scale.T * np.sqrt(dt)
    I = np.empty((grid.n + 1, model.N))
    I[0] = model.I0
    for k in range(grid.n):
        I[k + 1] = I[k] - model.beta * I[k] * dt + noise[k]
    return SignalPath(I, seed)


def expected_path(model, grid):
    """Signal path of expected values ``E_0[I_{t_k}]`` (the noise-free path for
    deterministic models)."""
    return SignalPath(np.array([model.expected_drift(t) for t in grid.nodes]))


def conditional_future_drift(model, I_t, t, r):
    """``E_t[I_r] = exp(-beta (r - t)) I_t`` for the OU predictor."""
    model._require(SignalKind.OU)
    if r < t:
        raise TimeOrder(f"need t <= r, got t={t}, r={r}")
    I_t = check_vector(I_t, "I_t", model.N)
    return np.exp(-model.beta * (r - t)) * I_t


def _decay_integral(beta, tau):
    """``(1 - exp(-beta tau)) / beta`` with the limit ``tau`` at ``beta = 0``."""
    beta = np.asarray(beta, dtype=float)
    safe = np.where(beta > 0, beta, 1.0)
    return np.where(beta > 0, -np.expm1(-safe * tau) / safe, tau)


def _table_antiderivative(times, values, t):
    """Exact ``int_0^t`` of a piecewise-linear table, constant past the end."""
    seg = np.diff(times)[:, None] * 0.5 * (values[1:] + values[:-1])
    cum = np.vstack([np.zeros(values.shape[1]), np.cumsum(seg, axis=0)])
    t = np.atleast_1d(t)
    out = np.empty((t.size, values.shape[1]))
    for i, x in enumerate(t):
        m = min(np.searchsorted(times, x, side="right") - 1, len(times) - 1)
        v_end = np.array([np.interp(x, times, values[:, c]) for c in range(values.shape[1])])
        out[i] = cum[m] + 0.5 * (x - times[m]) * (values[m] + v_end)
    return out


def _simpson_cell(f, a, b, tol=SIMPSON_TOL):
    """Composite Simpson on ``[a, b]`` starting from 4 subintervals and doubling
    until successive estimates agree to ``tol``."""
    m = 4
    prev = None
    while True:
        x = np.linspace(a, b, m + 1)
        y = np.array([f(xi) for xi in x])
        w = np.ones(m + 1)
        w[1:-1:2], w[2:-1:2] = 4.0, 2.0
        est = (b - a) / (3 * m) * (w @ y)
        if prev is not None and np.max(np.abs(est - prev)) <= tol * max(1.0, np.max(np.abs(est))):
            return est
        if m >= 4096:
            return est
        prev, m = est, 2 * m


def drift_to_go(model, grid):
    """``A_T - A_{t_k}`` for every node of the grid (deterministic kind)."""
    model._require(SignalKind.DETERMINISTIC)
    t = grid.nodes
    if model.drift_fn is None:
        A = _table_antiderivative(model.table_times, model.table_values, t)
        return A[-1] - A
    cells = np.array([_simpson_cell(model.drift, t[j], t[j + 1]) for j in range(grid.n)])
    togo = np.zeros((grid.n + 1, model.N))
    togo[:-1] = np.cumsum(cells[::-1], axis=0)[::-1]
    return togo


def g_profile(market, model, grid, t, state=None):
    """Conditional expectations ``E_t[g_r]`` at the nodes ``r >= t``.

    Parameters
    ----------
    market : MarketParams
    model : SignalModel
    grid : Grid
    t : float
        Decision time; must be a grid node.
    state : array_like, optional
        Observed ``I_t`` for an OU model. Defaults to ``E_0[I_t]``. Ignored for
        deterministic models.

    Returns
    -------
    ndarray of shape (n + 1 - k, N)
        Rows for the nodes ``t_k = t, ..., t_n``.
    """
    if model.N != market.N:
        raise GridMismatch(f"signal has N={model.N}, market has N={market.N}")
    k = grid.index_of(t)
    if abs(k * grid.dt - t) > 1e-9 * grid.dt:
        raise GridMismatch(f"t={t} is not a grid node")
    r = grid.nodes[k:]
    T = grid.T
    if model.kind is SignalKind.OU:
        I_t = model.expected_drift(t) if state is None else check_vector(state, "state", model.N)
        decay = np.exp(-np.outer(r - r[0], model.beta))
        togo = decay * _decay_integral(model.beta, (T - r)[:, None]) * I_t
    else:
        togo = drift_to_go(model, grid)[k:]
    penalty = (market.gamma * (T - r)[:, None, None] * market.Sigma
               + market.varrho * market.Pi) @ market.X0
    return togo - penalty
