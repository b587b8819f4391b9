"""Certification that a propagator admits no profitable round trips.

Two complementary checks are offered. :func:`check_structural` matches the
kernel against families with known sufficient conditions (symmetric
nonnegative definite impact matrix, decay that is nonnegative, nonincreasing
and convex). :func:`check_grid_psd` samples the mirrored kernel on a grid and
inspects the spectrum, returning a cost-lowering witness strategy when the
sampled matrix is indefinite.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import linalg

from ._exceptions import EigenFailure, GridMismatch, InadmissibleKernel, InvalidSpec
from ._validation import is_psd, is_symmetric, min_eigenvalue
from .discretization import Grid, kernel_matrix
from .kernels import KernelKind, PropagatorSpec, eval_propagator

DEFAULT_TOL = 1e-10


class PriceManipulationWarning(UserWarning):
    """A solve proceeds with a kernel that may allow profitable round trips."""


class StructuralVerdict(str, Enum):
    ADMISSIBLE = "Admissible"
    NOT_APPLICABLE = "NotApplicable"
    REJECTED = "Rejected"


class GridVerdict(str, Enum):
    PASSED_PSD = "PassedPSD"
    FAILED_PSD = "FailedPSD"


@dataclass(frozen=True)
class StructuralResult:
    verdict: StructuralVerdict
    reason: str


@dataclass(frozen=True, eq=False)
class Witness:
    """Strategy on the grid, shape ``(n + 1, N)``, with negative transient cost."""

    u: np.ndarray
    cost: float
    round_trip: bool

    def to_dict(self):
        return {"u": self.u.tolist(), "transient_cost": self.cost,
                "round_trip": self.round_trip}


@dataclass(frozen=True, eq=False)
class GridResult:
    verdict: GridVerdict
    min_eigenvalue: float
    max_eigenvalue: float
    n: int
    T: float
    point_min_eigenvalue: float | None = None
    witness: Witness | None = None

    @property
    def passed(self):
        return self.verdict is GridVerdict.PASSED_PSD


@dataclass(frozen=True, eq=False)
class AdmissibilityReport:
    structural: StructuralResult
    grid: GridResult

    @property
    def structural_verdict(self):
        return self.structural.verdict

    @property
    def grid_verdict(self):
        return self.grid.verdict

    @property
    def witness(self):
        return self.grid.witness

    @property
    def passed(self):
        """Not rejected, and either certified structurally or by the grid check."""
        v = self.structural.verdict
        if v is StructuralVerdict.REJECTED:
            return False
        return v is StructuralVerdict.ADMISSIBLE or self.grid.passed

    def to_dict(self):
        g = self.grid
        return {
            "passed": self.passed,
            "structural_verdict": self.structural.verdict.value,
            "structural_reason": self.structural.reason,
            "grid_verdict": g.verdict.value,
            "min_eigenvalue": g.min_eigenvalue,
            "max_eigenvalue": g.max_eigenvalue,
            "point_min_eigenvalue": g.point_min_eigenvalue,
            "n": g.n,
            "T": g.T,
            "witness": None if g.witness is None else g.witness.to_dict(),
        }


def _check_impact_matrix(C, name="C"):
    if not is_symmetric(C):
        return StructuralResult(StructuralVerdict.REJECTED, f"symmetry: {name} is not symmetric")
    if not is_psd(C):
        return StructuralResult(
            StructuralVerdict.REJECTED,
            f"{name} is not nonnegative definite (min eigenvalue {min_eigenvalue(C):.3e})")
    return None


def check_structural(spec, T=None):
    """Match ``spec`` against the certified admissible families.

    Parameters
    ----------
    spec : PropagatorSpec
    T : float, optional
        Horizon. Needed to screen sampled decay functions and the bond
        maturity; without it such specs are reported as not applicable.

    Returns
    -------
    StructuralResult
    """
    if not isinstance(spec, PropagatorSpec):
        raise InvalidSpec(f"expected a PropagatorSpec, got {type(spec).__name__}")
    kind = spec.kind
    ok = StructuralVerdict.ADMISSIBLE
    if kind is KernelKind.ZERO:
        return StructuralResult(ok, "zero kernel")
    if kind is KernelKind.MATRIX_EXP:
        bad = _check_impact_matrix(spec.Cmat, "Cmat")
        return bad or StructuralResult(ok, "matrix exponential of a nonnegative definite matrix")
    if kind is KernelKind.CONSTRUCTED:
        for i, g in enumerate(spec.g_list):
            if g.kind.value in ("table", "callable") and T is None:
                return StructuralResult(StructuralVerdict.NOT_APPLICABLE,
                                        "horizon T needed to screen sampled decays")
            good, why = g.certify(T)
            if not good:
                return StructuralResult(StructuralVerdict.NOT_APPLICABLE, f"g_{i + 1}: {why}")
        return StructuralResult(ok, "constructed kernel with admissible decays")
    bad = _check_impact_matrix(spec.C)
    if bad:
        return bad
    if kind is KernelKind.BOND:
        if T is None:
            return StructuralResult(StructuralVerdict.NOT_APPLICABLE,
                                    "horizon T needed to compare with the maturity")
        if spec.maturity < T:
            return StructuralResult(StructuralVerdict.REJECTED,
                                    f"maturity {spec.maturity} precedes the horizon {T}")
        good, why = spec.H_inner.certify(T)
        if not good:
            return StructuralResult(StructuralVerdict.NOT_APPLICABLE, f"inner decay: {why}")
        return StructuralResult(ok, "bond kernel with admissible inner decay")
    if spec.phi.kind.value in ("table", "callable") and T is None:
        return StructuralResult(StructuralVerdict.NOT_APPLICABLE,
                                "horizon T needed to screen a sampled decay")
    good, why = spec.phi.certify(T)
    if not good:
        return StructuralResult(StructuralVerdict.REJECTED, why)
    return StructuralResult(ok, f"nonnegative definite C and {why}")


def _cell_matrix(spec, grid):
    n, N = grid.n, spec.N
    return kernel_matrix(spec, grid)[:n * N, :n * N]


def _point_matrix(spec, grid):
    n1, N = grid.n + 1, spec.N
    t = grid.nodes
    blocks = np.empty((n1, n1, N, N))
    if spec.kind is KernelKind.BOND:
        for k in range(n1):
            for l in range(k):
                blocks[k, l] = eval_propagator(spec, t[k], t[l])
                blocks[l, k] = blocks[k, l].T
            # the diagonal takes the right limit G(t, t+), not the strict value 0
            G = spec.alpha_bond * (spec.maturity - t[k]) * float(spec.H_inner(0.0)) * spec.C
            blocks[k, k] = 0.5 * (G + G.T)
    else:
        V = np.array([eval_propagator(spec, d * grid.dt, 0.0) for d in range(n1)])
        for k in range(n1):
            for l in range(n1):
                if k > l:
                    blocks[k, l] = V[k - l]
                elif k < l:
                    blocks[k, l] = V[l - k].T
                else:
                    blocks[k, k] = 0.5 * (V[0] + V[0].T)
    return blocks.transpose(0, 2, 1, 3).reshape(n1 * N, n1 * N)


def _eigh(M):
    try:
        return np.linalg.eigh(M)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(str(exc)) from None


def _passes(w, tol):
    return w[0] >= -tol * max(abs(w[-1]), np.finfo(float).tiny)


def _witness(spec, grid, M, w_full, tol):
    n, N = grid.n, spec.N
    # prefer a round trip: restrict the quadratic form to zero net trading
    P = linalg.null_space(np.kron(np.ones((1, n)), np.eye(N)))
    w, V = _eigh(P.T @ M @ P)
    round_trip = bool(w[0] < -tol * abs(w_full[-1]))
    if round_trip:
        v = P @ V[:, 0]
    else:
        v = _eigh(M)[1][:, 0]
    u = np.zeros((n + 1, N))
    u[:n] = v.reshape(n, N)
    u /= np.max(np.abs(u))
    cost = transient_cost(spec, u, grid)
    if cost >= 0:
        return None
    return Witness(u=u, cost=cost, round_trip=bool(round_trip))


def check_grid_psd(spec, n, tol=DEFAULT_TOL, T=1.0):
    """Spectral check of the mirrored kernel sampled on a uniform grid.

    Non-singular kernels are tested both by point evaluation at the ``n + 1``
    nodes and through the cell-integrated matrix ``(S + S^T) / dt**2``
    (``S`` the integrated kernel blocks on the ``n`` trading cells). Singular
    kernels only use the integrated form. The grid passes when every tested
    matrix satisfies ``lambda_min >= -tol * lambda_max``.

    Parameters
    ----------
    spec : PropagatorSpec
    n : int
        Number of grid cells, at least 2.
    tol : float, default 1e-10
    T : float, default 1.0
        Horizon of the grid.

    Returns
    -------
    GridResult
        The reported eigenvalues are those of the integrated matrix. A
        witness strategy is attached when that matrix is indefinite.
    """
    grid = Grid(n, T)
    S = _cell_matrix(spec, grid)
    M = (S + S.T) / grid.dt**2
    w = _eigh(M)[0]
    passed = _passes(w, tol)
    point_min = None
    if not spec.is_singular:
        wp = _eigh(_point_matrix(spec, grid))[0]
        point_min = float(wp[0])
        passed = passed and _passes(wp, tol)
    witness = None if _passes(w, tol) else _witness(spec, grid, M, w, tol)
    verdict = GridVerdict.PASSED_PSD if passed else GridVerdict.FAILED_PSD
    return GridResult(verdict=verdict, min_eigenvalue=float(w[0]),
                      max_eigenvalue=float(w[-1]), n=grid.n, T=grid.T,
                      point_min_eigenvalue=point_min, witness=witness)


def transient_cost(spec, u, grid):
    """Discrete transient cost ``1/2 dt sum_{k,j<n} u_k^T (L + U^*)_{kj} u_j``.

    This is the quadrature of the double integral of ``u(t)^T G(t, s) u(s)``
    built from the same cell blocks as the solver.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.n + 1, spec.N):
        raise GridMismatch(f"u has shape {u.shape}, grid needs {(grid.n + 1, spec.N)}")
    v = u[:grid.n].ravel()
    return 0.5 * grid.dt * float(v @ _cell_matrix(spec, grid) @ v)


def audit(spec, n, T, tol=DEFAULT_TOL):
    """Run both checks and combine them into an :class:`AdmissibilityReport`."""
    return AdmissibilityReport(structural=check_structural(spec, T),
                               grid=check_grid_psd(spec, n, tol, T))


def require_admissible(spec, grid, force=False, tol=DEFAULT_TOL):
    """Audit ``spec`` on ``grid`` and refuse inadmissible kernels.

    Raises
    ------
    InadmissibleKernel
        If the audit fails and ``force`` is false. With ``force`` a
        :class:`PriceManipulationWarning` is issued instead.
    """
    report = audit(spec, grid.n, grid.T, tol)
    if not report.passed:
        msg = (f"kernel not certified ({report.structural.verdict.value}: "
               f"{report.structural.reason}; grid {report.grid.verdict.value})")
        if not force:
            raise InadmissibleKernel(msg)
        warnings.warn(msg + "; the kernel may admit price manipulation, so the first-order "
                      "condition need not identify a maximizer", PriceManipulationWarning,
                      stacklevel=3)
    return report
