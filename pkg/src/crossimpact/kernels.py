"""Matrix-valued Volterra propagators.

A propagator ``G(t, s)`` maps the trading speed at time ``s`` to the price
distortion at time ``t``. Convolution kernels factorize as ``C * phi(t - s)``
with a scalar decay ``phi``; the scalar part is modelled by :class:`Decay` so
that its subinterval integrals can be computed in closed form.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np
from scipy import integrate

from ._exceptions import InvalidSpec, QuadratureFailure, SingularityAtDiagonal
from ._validation import check_matrix, check_scalar

QUAD_RTOL = 1e-10


class DecayKind(str, Enum):
    ZERO = "zero"
    EXP = "exp"
    FRACTIONAL = "fractional"
    POWER_LAW = "power_law"
    CONSTANT = "constant"
    TABLE = "table"
    CALLABLE = "callable"


def quad(f, a, b, **kwargs):
    """``scipy.integrate.quad`` at relative tolerance 1e-10, failing loudly."""
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, err = integrate.quad(f, a, b, epsrel=QUAD_RTOL, epsabs=1e-14,
                                        limit=200, **kwargs)
        except integrate.IntegrationWarning as exc:
            raise QuadratureFailure(f"quadrature on [{a}, {b}] failed: {exc}") from None
    if not np.isfinite(value):
        raise QuadratureFailure(f"quadrature on [{a}, {b}] returned {value}")
    return value


@dataclass(frozen=True, eq=False)
class Decay:
    """Scalar decay function ``phi: [0, T] -> R`` of a convolution kernel.

    Use the constructors (:meth:`exponential`, :meth:`fractional`, ...) rather
    than instantiating directly.
    """

    kind: DecayKind
    rho: float | None = None
    alpha: float | None = None
    beta: float | None = None
    t0: float | None = None
    times: tuple | None = None
    values: tuple | None = None
    fn: Callable | None = field(default=None, repr=False)

    @classmethod
    def zero(cls):
        return cls(DecayKind.ZERO)

    @classmethod
    def constant(cls):
        return cls(DecayKind.CONSTANT)

    @classmethod
    def exponential(cls, rho):
        return cls(DecayKind.EXP, rho=check_scalar(rho, "rho", low=0, low_open=True,
                                                  error=InvalidSpec))

    @classmethod
    def fractional(cls, alpha):
        # square integrability of t**-alpha on [0, T]^2 needs alpha < 1/2
        alpha = check_scalar(alpha, "alpha", low=0, high=0.5, low_open=True,
                             high_open=True, error=InvalidSpec)
        return cls(DecayKind.FRACTIONAL, alpha=alpha)

    @classmethod
    def power_law(cls, beta, t0):
        beta = check_scalar(beta, "beta", low=0, high=1, low_open=True, high_open=True,
                            error=InvalidSpec)
        t0 = check_scalar(t0, "t0", low=0, low_open=True, error=InvalidSpec)
        return cls(DecayKind.POWER_LAW, beta=beta, t0=t0)

    @classmethod
    def table(cls, times, values):
        """Piecewise-linear decay through ``(times[i], values[i])``."""
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if times.ndim != 1 or times.shape != values.shape or times.size < 2:
            raise InvalidSpec("table decay needs matching 1-d times/values, length >= 2")
        if np.any(np.diff(times) <= 0) or times[0] != 0.0:
            raise InvalidSpec("table times must start at 0 and increase strictly")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(values))):
            raise InvalidSpec("table decay has non-finite entries")
        return cls(DecayKind.TABLE, times=tuple(times), values=tuple(values))

    @classmethod
    def from_callable(cls, fn):
        if not callable(fn):
            raise InvalidSpec("fn must be callable")
        return cls(DecayKind.CALLABLE, fn=fn)

    @property
    def is_singular(self):
        return self.kind is DecayKind.FRACTIONAL

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=float)
        k = self.kind
        if k is DecayKind.ZERO:
            return np.zeros_like(tau)
        if k is DecayKind.CONSTANT:
            return np.ones_like(tau)
        if k is DecayKind.EXP:
            return np.exp(-self.rho * tau)
        if k is DecayKind.FRACTIONAL:
            with np.errstate(divide="ignore"):
                return np.where(tau > 0, np.abs(tau) ** -self.alpha, np.inf)
        if k is DecayKind.POWER_LAW:
            return (1.0 + tau / self.t0) ** -self.beta
        if k is DecayKind.TABLE:
            return np.interp(tau, self.times, self.values)
        return np.vectorize(lambda x: float(self.fn(x)), otypes=[float])(tau)

    def integral(self, a, b):
        """``int_a^b phi(tau) dtau`` for ``0 <= a <= b``."""
        k = self.kind
        if k is DecayKind.ZERO:
            return 0.0
        if k is DecayKind.CONSTANT:
            return b - a
        if k is DecayKind.EXP:
            return (math.exp(-self.rho * a) - math.exp(-self.rho * b)) / self.rho
        if k is DecayKind.FRACTIONAL:
            p = 1.0 - self.alpha
            return (b**p - a**p) / p
        if k is DecayKind.POWER_LAW:
            p = 1.0 - self.beta
            return self.t0 / p * ((1 + b / self.t0) ** p - (1 + a / self.t0) ** p)
        if k is DecayKind.TABLE:
            pts = [x for x in self.times if a < x < b]
            return quad(lambda x: float(self(x)), a, b, points=pts or None)
        return quad(lambda x: float(self.fn(x)), a, b)

    def first_moment(self, a, b):
        """``int_a^b tau * phi(tau) dtau`` for ``0 <= a <= b``."""
        k = self.kind
        if k is DecayKind.ZERO:
            return 0.0
        if k is DecayKind.CONSTANT:
            return 0.5 * (b * b - a * a)
        if k is DecayKind.EXP:
            r = self.rho
            prim = lambda x: -math.exp(-r * x) * (x / r + 1.0 / r**2)
            return prim(b) - prim(a)
        if k is DecayKind.FRACTIONAL:
            p = 2.0 - self.alpha
            return (b**p - a**p) / p
        pts = [x for x in (self.times or ()) if a < x < b]
        return quad(lambda x: x * float(self(x)), a, b, points=pts or None)

    def cell_integrals(self, m, dt, side="upper"):
        """Integrals of ``phi`` over the cells ``[m dt, (m+1) dt]``.

        ``side="lower"`` evaluates the lower-triangular entries, where the
        offset ``k - j = m + 1``; ``side="upper"`` the upper ones with offset
        ``j - k = m``. Exponential and fractional decays use the closed forms
        of the Nystrom tables, the remaining kinds :meth:`integral`.
        """
        m = np.asarray(m, dtype=float)
        k = self.kind
        if k is DecayKind.EXP:
            r = self.rho
            if side == "lower":
                return np.expm1(r * dt) / r * np.exp(-r * (m + 1) * dt)
            return -np.expm1(-r * dt) / r * np.exp(-r * m * dt)
        if k is DecayKind.FRACTIONAL:
            p = 1.0 - self.alpha
            return dt**p / p * ((m + 1) ** p - m**p)
        return np.array([self.integral(x * dt, (x + 1) * dt) for x in m.ravel()]
                        ).reshape(m.shape)

    def certify(self, T):
        """Check nonnegative, nonincreasing and convex on ``(0, T)``.

        Returns ``(ok, reason)``. Parametric kinds are certified analytically;
        table and callable decays are screened by finite differences on a
        1000-point grid.
        """
        k = self.kind
        if k in (DecayKind.ZERO, DecayKind.CONSTANT, DecayKind.EXP,
                 DecayKind.FRACTIONAL, DecayKind.POWER_LAW):
            return True, f"{k.value} decay is nonnegative, nonincreasing and convex"
        if T is None:
            return False, "horizon T required to screen a sampled decay"
        tau = np.linspace(0.0, T, 1002)[1:-1]
        y = self(tau)
        tol = 1e-9 * max(1.0, float(np.max(np.abs(y))))
        if np.max(np.diff(y)) > tol:
            return False, "decay is not nonincreasing on (0, T)"
        if np.min(y) < -tol:
            return False, "decay takes negative values on (0, T)"
        if np.min(np.diff(y, 2)) < -tol:
            return False, "decay is not convex on (0, T)"
        return True, "sampled decay is nonnegative, nonincreasing and convex"

    def to_dict(self):
        k = self.kind
        if k is DecayKind.CALLABLE:
            raise InvalidSpec("callable decays cannot be serialized; use a table")
        d = {"kind": k.value}
        if k is DecayKind.EXP:
            d["rho"] = self.rho
        elif k is DecayKind.FRACTIONAL:
            d["alpha"] = self.alpha
        elif k is DecayKind.POWER_LAW:
            d.update(beta=self.beta, t0=self.t0)
        elif k is DecayKind.TABLE:
            d.update(times=list(self.times), values=list(self.values))
        return d

    @classmethod
    def from_dict(cls, d):
        try:
            kind = DecayKind(d["kind"])
        except (KeyError, ValueError):
            raise InvalidSpec(f"unknown decay record {d!r}") from None
        if kind is DecayKind.ZERO:
            return cls.zero()
        if kind is DecayKind.CONSTANT:
            return cls.constant()
        if kind is DecayKind.EXP:
            return cls.exponential(d["rho"])
        if kind is DecayKind.FRACTIONAL:
            return cls.fractional(d["alpha"])
        if kind is DecayKind.POWER_LAW:
            return cls.power_law(d["beta"], d["t0"])
        if kind is DecayKind.TABLE:
            return cls.table(d["times"], d["values"])
        raise InvalidSpec("callable decays cannot be deserialized")


class KernelKind(str, Enum):
    ZERO = "zero"
    FACTORIZED_EXP = "factorized_exp"
    FACTORIZED_FRACTIONAL = "factorized_fractional"
    FACTORIZED_POWER_LAW = "factorized_power_law"
    FACTORIZED = "factorized"
    PERMANENT = "permanent"
    MATRIX_EXP = "matrix_exp"
    CONSTRUCTED = "constructed"
    BOND = "bond"


FACTORIZED_KINDS = frozenset({
    KernelKind.ZERO, KernelKind.FACTORIZED_EXP, KernelKind.FACTORIZED_FRACTIONAL,
    KernelKind.FACTORIZED_POWER_LAW, KernelKind.FACTORIZED, KernelKind.PERMANENT,
})


@dataclass(frozen=True, eq=False)
class PropagatorSpec:
    """Declarative description of a propagator matrix ``G(t, s)``.

    Factorized kinds (including zero and permanent) carry an impact matrix
    ``C`` and a scalar decay ``phi`` with ``G(t, s) = C phi(t - s)`` for
    ``t >= s``. Non-factorized kinds are

    * ``matrix_exp``: ``exp(-(t - s) Cmat)``,
    * ``constructed``: ``Q^T diag(g_1(t - s), ..., g_N(t - s)) Q``,
    * ``bond``: ``alpha_bond (maturity - t) H_inner(t - s) C`` for ``t > s``.

    Symmetry and definiteness of ``C`` are *not* enforced here; they are
    certified by :func:`crossimpact.admissibility.check_structural`.
    """

    kind: KernelKind
    C: np.ndarray | None = None
    phi: Decay | None = None
    Cmat: np.ndarray | None = None
    Q: np.ndarray | None = None
    g_list: tuple = ()
    alpha_bond: float | None = None
    H_inner: Decay | None = None
    maturity: float | None = None

    def __post_init__(self):
        if self.kind is KernelKind.MATRIX_EXP:
            w, V = np.linalg.eigh(self.Cmat)
            object.__setattr__(self, "_eig", (w, V))

    # constructors ---------------------------------------------------------
    @classmethod
    def zero(cls, N):
        return cls(KernelKind.ZERO, C=check_matrix(np.zeros((N, N)), "C"), phi=Decay.zero())

    @classmethod
    def exponential(cls, C, rho):
        return cls(KernelKind.FACTORIZED_EXP, C=_impact_matrix(C), phi=Decay.exponential(rho))

    @classmethod
    def fractional(cls, C, alpha):
        return cls(KernelKind.FACTORIZED_FRACTIONAL, C=_impact_matrix(C),
                   phi=Decay.fractional(alpha))

    @classmethod
    def power_law(cls, C, beta, t0):
        return cls(KernelKind.FACTORIZED_POWER_LAW, C=_impact_matrix(C),
                   phi=Decay.power_law(beta, t0))

    @classmethod
    def permanent(cls, C):
        return cls(KernelKind.PERMANENT, C=_impact_matrix(C), phi=Decay.constant())

    @classmethod
    def factorized(cls, C, phi):
        """Factorized kernel with an arbitrary :class:`Decay` (or callable)."""
        if not isinstance(phi, Decay):
            phi = Decay.from_callable(phi)
        return cls(KernelKind.FACTORIZED, C=_impact_matrix(C), phi=phi)

    @classmethod
    def matrix_exp(cls, Cmat):
        Cmat = _impact_matrix(Cmat, "Cmat")
        if np.linalg.norm(Cmat - Cmat.T) > 1e-12 * max(np.linalg.norm(Cmat), 1.0):
            raise InvalidSpec("Cmat must be symmetric")
        return cls(KernelKind.MATRIX_EXP, Cmat=Cmat)

    @classmethod
    def constructed(cls, Q, g_list):
        Q = _impact_matrix(Q, "Q")
        if len(g_list) != Q.shape[0]:
            raise InvalidSpec(f"need {Q.shape[0]} decay functions, got {len(g_list)}")
        if np.linalg.matrix_rank(Q) < Q.shape[0]:
            raise InvalidSpec("Q must be invertible")
        g = tuple(x if isinstance(x, Decay) else Decay.from_callable(x) for x in g_list)
        if any(x.is_singular for x in g):
            raise InvalidSpec("constructed kernels take non-singular decays only")
        return cls(KernelKind.CONSTRUCTED, Q=Q, g_list=g)

    @classmethod
    def bond(cls, C, alpha, H, maturity):
        alpha = check_scalar(alpha, "alpha_bond", low=0, low_open=True, error=InvalidSpec)
        maturity = check_scalar(maturity, "maturity", low=0, low_open=True,
                                error=InvalidSpec)
        if not isinstance(H, Decay):
            H = Decay.from_callable(H)
        return cls(KernelKind.BOND, C=_impact_matrix(C), alpha_bond=alpha, H_inner=H,
                   maturity=maturity)

    # properties -----------------------------------------------------------
    @property
    def N(self):
        for M in (self.C, self.Cmat, self.Q):
            if M is not None:
                return M.shape[0]
        raise InvalidSpec("spec carries no matrix")

    @property
    def is_factorized(self):
        return self.kind in FACTORIZED_KINDS

    @property
    def is_singular(self):
        if self.kind is KernelKind.BOND:
            return self.H_inner.is_singular
        return self.phi is not None and self.phi.is_singular

    @property
    def strict(self):
        """Whether the Volterra indicator is ``1{t > s}`` rather than ``1{t >= s}``."""
        return self.kind is KernelKind.BOND or self.is_singular

    def __repr__(self):
        return f"PropagatorSpec({self.to_dict()!r})"

    # serialization --------------------------------------------------------
    def to_dict(self):
        k = self.kind
        d = {"kind": k.value}
        if k is KernelKind.ZERO:
            d["N"] = self.N
        elif k is KernelKind.FACTORIZED_EXP:
            d.update(C=self.C.tolist(), rho_decay=self.phi.rho)
        elif k is KernelKind.FACTORIZED_FRACTIONAL:
            d.update(C=self.C.tolist(), alpha=self.phi.alpha)
        elif k is KernelKind.FACTORIZED_POWER_LAW:
            d.update(C=self.C.tolist(), beta_pl=self.phi.beta, t0=self.phi.t0)
        elif k is KernelKind.PERMANENT:
            d["C"] = self.C.tolist()
        elif k is KernelKind.FACTORIZED:
            d.update(C=self.C.tolist(), phi=self.phi.to_dict())
        elif k is KernelKind.MATRIX_EXP:
            d["Cmat"] = self.Cmat.tolist()
        elif k is KernelKind.CONSTRUCTED:
            d.update(Q=self.Q.tolist(), g_list=[g.to_dict() for g in self.g_list])
        else:
            d.update(C=self.C.tolist(), alpha_bond=self.alpha_bond,
                     H_inner=self.H_inner.to_dict(), maturity=self.maturity)
        return d

    @classmethod
    def from_dict(cls, d):
        try:
            kind = KernelKind(d["kind"])
        except (KeyError, ValueError, TypeError):
            raise InvalidSpec(f"unknown kernel record {d!r}") from None
        try:
            if kind is KernelKind.ZERO:
                return cls.zero(int(d["N"]))
            if kind is KernelKind.FACTORIZED_EXP:
                return cls.exponential(d["C"], d["rho_decay"])
            if kind is KernelKind.FACTORIZED_FRACTIONAL:
                return cls.fractional(d["C"], d["alpha"])
            if kind is KernelKind.FACTORIZED_POWER_LAW:
                return cls.power_law(d["C"], d["beta_pl"], d["t0"])
            if kind is KernelKind.PERMANENT:
                return cls.permanent(d["C"])
            if kind is KernelKind.FACTORIZED:
                return cls.factorized(d["C"], Decay.from_dict(d["phi"]))
            if kind is KernelKind.MATRIX_EXP:
                return cls.matrix_exp(d["Cmat"])
            if kind is KernelKind.CONSTRUCTED:
                return cls.constructed(d["Q"], [Decay.from_dict(g) for g in d["g_list"]])
            return cls.bond(d["C"], d["alpha_bond"], Decay.from_dict(d["H_inner"]),
                            d["maturity"])
        except KeyError as exc:
            raise InvalidSpec(f"kernel record {kind.value!r} misses field {exc}") from None


def _impact_matrix(C, name="C"):
    return check_matrix(C, name, error=InvalidSpec)


def _matrix_exp_cells(spec, m, dt, side):
    w, V = spec._eig
    vals = np.empty((len(m), len(w)))
    for i, lam in enumerate(w):
        if abs(lam) * dt < 1e-14:
            vals[:, i] = dt
        else:
            vals[:, i] = Decay(DecayKind.EXP, rho=lam).cell_integrals(m, dt, side)
    return np.einsum("ij,mj,kj->mik", V, vals, V)


def _constructed_cells(spec, m, dt, side):
    vals = np.stack([g.cell_integrals(m, dt, side) for g in spec.g_list], axis=-1)
    return np.einsum("ji,mj,jk->mik", spec.Q, vals, spec.Q)


def convolution_cells(spec, m, dt, side):
    """Cell integrals ``int_{m dt}^{(m+1) dt} H(tau) dtau`` of a convolution kernel.

    Returns shape ``(len(m),)`` for factorized kinds (scalar decay only) and
    ``(len(m), N, N)`` for the matrix exponential and constructed kinds.
    """
    m = np.atleast_1d(np.asarray(m, dtype=float))
    if spec.is_factorized:
        return spec.phi.cell_integrals(m, dt, side)
    if spec.kind is KernelKind.MATRIX_EXP:
        return _matrix_exp_cells(spec, m, dt, side)
    if spec.kind is KernelKind.CONSTRUCTED:
        return _constructed_cells(spec, m, dt, side)
    raise InvalidSpec(f"{spec.kind.value} is not a convolution kernel")


def _convolution_value(spec, tau):
    """``H(tau)`` for ``tau >= 0`` as an ``N x N`` matrix."""
    if spec.is_factorized:
        return spec.C * float(spec.phi(tau))
    if spec.kind is KernelKind.MATRIX_EXP:
        w, V = spec._eig
        return (V * np.exp(-tau * w)) @ V.T
    g = np.array([float(gi(tau)) for gi in spec.g_list])
    return spec.Q.T @ (g[:, None] * spec.Q)


def eval_propagator(spec, t, s):
    """Evaluate ``G(t, s)`` as an ``N x N`` matrix.

    Raises
    ------
    SingularityAtDiagonal
        If a singular kernel is evaluated at ``t == s``.
    """
    N = spec.N
    if t < s:
        return np.zeros((N, N))
    if t == s:
        if spec.is_singular:
            raise SingularityAtDiagonal(f"{spec.kind.value} kernel is singular at t == s")
        if spec.strict:
            return np.zeros((N, N))
    if spec.kind is KernelKind.BOND:
        return spec.alpha_bond * (spec.maturity - t) * float(spec.H_inner(t - s)) * spec.C
    return _convolution_value(spec, t - s)


def mirrored_eval(spec, t, s):
    """Mirrored kernel: ``G(t, s)`` below, ``G(s, t)^T`` above the diagonal and
    the symmetric part of ``G(t, t)`` on it."""
    if t > s:
        return eval_propagator(spec, t, s)
    if t < s:
        return eval_propagator(spec, s, t).T
    G = eval_propagator(spec, t, t)
    return 0.5 * (G + G.T)


def bond_upper_coefficient(spec, k, j, dt):
    """Scalar factor of ``int_{t_j}^{t_{j+1}} G(s, t_k) ds`` for the bond kernel."""
    # substitute tau = s - t_k: alpha * int (maturity - t_k - tau) H(tau) dtau
    c = spec.maturity - k * dt
    a, b = (j - k) * dt, (j - k + 1) * dt
    H = spec.H_inner
    return spec.alpha_bond * (c * H.integral(a, b) - H.first_moment(a, b))


def bond_lower_coefficient(spec, k, j, dt):
    """Scalar factor of ``int_{t_j}^{t_{j+1}} G(t_k, s) ds`` for the bond kernel."""
    h = spec.H_inner.cell_integrals([k - j - 1], dt, "lower")[0]
    return spec.alpha_bond * (spec.maturity - k * dt) * h


def integrate_phi_block(spec, k, j, dt, side):
    """Exact subinterval integral of the kernel for grid indices ``(k, j)``.

    ``side="lower"`` (``0 <= j <= k - 1``) returns
    ``int_{t_j}^{t_{j+1}} G(t_k, s) ds`` and ``side="upper"``
    (``k <= j``) returns ``int_{t_j}^{t_{j+1}} G(s, t_k) ds``. For factorized
    kinds the result is the scalar integral of ``phi``; otherwise an
    ``N x N`` matrix.
    """
    from ._exceptions import IndexOutOfRange

    side = getattr(side, "value", side)
    if side == "lower":
        if not 0 <= j <= k - 1:
            raise IndexOutOfRange(f"lower block needs 0 <= j <= k-1, got k={k}, j={j}")
        m = k - j - 1
    elif side == "upper":
        if not 0 <= k <= j:
            raise IndexOutOfRange(f"upper block needs k <= j, got k={k}, j={j}")
        m = j - k
    else:
        raise ValueError(f"side must be 'lower' or 'upper', got {side!r}")
    if spec.kind is KernelKind.BOND:
        if side == "lower":
            return bond_lower_coefficient(spec, k, j, dt) * spec.C
        return bond_upper_coefficient(spec, k, j, dt) * spec.C
    return convolution_cells(spec, [m], dt, side)[0]
