import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crossimpact import (Grid, MarketParams, PropagatorSpec, SignalModel, SignalPath,
                         assemble_D, evaluate_objective, inventory_and_distortion,
                         simulate_ou_path, solve_deterministic, solve_stochastic_path,
                         solve_stochastic_resolvent)
from crossimpact._exceptions import GridMismatch, InadmissibleKernel, PathMismatch
from crossimpact.admissibility import PriceManipulationWarning
from crossimpact.solver import TrailingFactors

from conftest import A_DIAG, A_FULL, LAMBDA


def frictionless_market(X0=(0.0, 0.0), T=10.0):
    return MarketParams(Lambda=LAMBDA, X0=list(X0), T=T)


class TestDeterministic:
    def test_zero_kernel_constant_liquidation(self, liquidation_market):
        # with G = 0 and no risk the first-order condition is solved by a constant speed:
        # (Lambda + varrho T Pi) u = -varrho Pi X0
        grid = Grid(50, 10.0)
        rep = solve_deterministic(liquidation_market, PropagatorSpec.zero(2), grid)
        expected = -40.0 / (0.03 + 40.0)
        np.testing.assert_allclose(rep.u[:, 0], expected, rtol=1e-12)
        np.testing.assert_allclose(rep.u[:, 1], 0.0, atol=1e-14)
        assert expected == pytest.approx(-0.99925056, abs=1e-8)
        assert rep.inventory[-1, 0] == pytest.approx(10.0 + 10.0 * expected, rel=1e-10)

    def test_pure_signal_tracks_drift(self):
        # no transient impact, no risk: u_k = Lambda^{-1} g_k
        model = SignalModel.ou([0.9, 0.3], [0.5, -0.5])
        grid = Grid(40, 10.0)
        rep = solve_deterministic(frictionless_market(), PropagatorSpec.zero(2), grid, model=model)
        np.testing.assert_allclose(rep.u, rep.g / 0.03, rtol=1e-12)
        np.testing.assert_allclose(rep.g[-1], 0.0, atol=1e-15)

    def test_explicit_g(self, liquidation_market, exp_full, grid50):
        g = np.random.default_rng(0).standard_normal((51, 2))
        rep = solve_deterministic(liquidation_market, exp_full, grid50, g=g)
        D = assemble_D(liquidation_market, exp_full, grid50).D
        np.testing.assert_allclose(D @ rep.u.ravel(), g.ravel(), atol=1e-10)

    def test_bad_g(self, liquidation_market, exp_full, grid50):
        with pytest.raises(GridMismatch):
            solve_deterministic(liquidation_market, exp_full, grid50, g=np.zeros((50, 2)))

    def test_diagonal_impact_leaves_second_asset_idle(self, liquidation_market):
        grid = Grid(100, 10.0)
        rep = solve_deterministic(liquidation_market, PropagatorSpec.exponential(A_DIAG, 0.5), grid)
        assert np.max(np.abs(rep.inventory[:, 1])) <= 1e-12

    def test_cross_impact_sign_pattern(self, liquidation_market):
        grid = Grid(100, 10.0)
        rep = solve_deterministic(liquidation_market, PropagatorSpec.exponential(A_FULL, 0.5), grid)
        X2 = rep.inventory[:, 1]
        assert X2.min() < -0.1 and X2.max() > 0.1
        assert np.argmin(X2) < np.argmax(X2)

    def test_decoupling(self):
        Sigma = np.diag([0.04, 0.05])
        m2 = MarketParams(Lambda=np.diag([0.03, 0.02]), X0=[5.0, -3.0], T=10.0, Sigma=Sigma,
                          gamma=2.0, varrho=1.0, Pi=np.diag([1.0, 3.0]))
        spec2 = PropagatorSpec.fractional(np.diag([0.06, 0.04]), 0.25)
        model2 = SignalModel.ou([0.9, 0.3], [0.5, 0.2])
        grid = Grid(60, 10.0)
        joint = solve_deterministic(m2, spec2, grid, model=model2).u
        for i, (lam, x0, s, pi, c, b, i0) in enumerate(zip(
                [0.03, 0.02], [5.0, -3.0], [0.04, 0.05], [1.0, 3.0], [0.06, 0.04], [0.9, 0.3],
                [0.5, 0.2])):
            m1 = MarketParams(Lambda=[[lam]], X0=[x0], T=10.0, Sigma=[[s]], gamma=2.0,
                              varrho=1.0, Pi=[[pi]])
            single = solve_deterministic(m1, PropagatorSpec.fractional([[c]], 0.25), grid,
                                         model=SignalModel.ou([b], [i0])).u
            np.testing.assert_allclose(joint[:, i], single[:, 0], rtol=1e-10, atol=1e-12)

    @given(st.floats(-5, 5), st.floats(-5, 5))
    @settings(max_examples=20)
    def test_linearity_in_inventory_and_signal(self, a, b):
        grid = Grid(30, 10.0)
        spec = PropagatorSpec.exponential(A_FULL, 0.5)

        def solve(X0, I0):
            m = MarketParams(Lambda=LAMBDA, X0=X0, T=10.0, Sigma=np.eye(2) * 0.04, gamma=1.0,
                             varrho=2.0)
            return solve_deterministic(m, spec, grid, model=SignalModel.ou([0.5, 0.5], I0),
                                       check=False).u

        u1 = solve([1.0, 0.0], [0.0, 0.0])
        u2 = solve([0.0, 0.0], [0.1, -0.1])
        np.testing.assert_allclose(solve([a, 0.0], [0.1 * b, -0.1 * b]), a * u1 + b * u2,
                                   atol=1e-9 * (1 + abs(a) + abs(b)))

    @pytest.mark.parametrize("eps", [1e-3, 1e-2, 1.0])
    def test_perturbation_does_not_improve(self, liquidation_market, exp_full, grid50, eps):
        model = SignalModel.ou([0.5, 0.2], [0.3, -0.1])
        rep = solve_deterministic(liquidation_market, exp_full, grid50, model=model)
        J = lambda u: evaluate_objective(liquidation_market, exp_full, u, grid50,
                                         model=model).total
        j0 = J(rep.u)
        rng = np.random.default_rng(1)
        for _ in range(20):
            v = np.zeros_like(rep.u)
            v[:-1] = rng.standard_normal((50, 2))
            assert J(rep.u + eps * v) - j0 <= 1e-12

    def test_literal_scheme_solves(self, liquidation_market, exp_full, grid50):
        rep = solve_deterministic(liquidation_market, exp_full, grid50, symmetrize=False)
        assert rep.foc_residual <= 1e-10 * np.max(np.abs(rep.g))
        sym = solve_deterministic(liquidation_market, exp_full, grid50)
        # both discretize the same equation; they agree to discretization error
        assert np.max(np.abs(rep.inventory - sym.inventory)) < 0.2


class TestAdmissibilityGate:
    def test_refuses(self, liquidation_market, grid50):
        with pytest.raises(InadmissibleKernel):
            solve_deterministic(liquidation_market, PropagatorSpec.permanent(-np.eye(2)), grid50)

    def test_force(self, liquidation_market, grid50):
        with pytest.warns(PriceManipulationWarning):
            rep = solve_deterministic(liquidation_market, PropagatorSpec.permanent(-0.001 *
                                                                                   np.eye(2)),
                                      grid50, force=True)
        assert not rep.admissibility.passed

    def test_stochastic_refuses(self, liquidation_market, grid50):
        model = SignalModel.ou([0.5, 0.5], [0.1, 0.1])
        with pytest.raises(InadmissibleKernel):
            solve_stochastic_path(liquidation_market, PropagatorSpec.permanent(-np.eye(2)),
                                  model, None, grid50)


class TestInventoryDistortion:
    def test_permanent_linear_growth(self):
        grid = Grid(10, 5.0)
        u = np.ones((11, 1))
        X, dist = inventory_and_distortion(PropagatorSpec.permanent([[2.0]]), np.array([1.0]),
                                           u, grid)
        np.testing.assert_allclose(X[:, 0], 1.0 + grid.nodes)
        np.testing.assert_allclose(dist[:, 0], 2.0 * grid.nodes, atol=1e-14)

    def test_exponential_impulse_decay(self):
        rho, grid = 0.5, Grid(20, 10.0)
        dt = grid.dt
        u = np.zeros((21, 2))
        u[0] = [1.0 / dt, 0.0]
        X, dist = inventory_and_distortion(PropagatorSpec.exponential(A_FULL, rho),
                                           np.zeros(2), u, grid)
        k = np.arange(1, 21)
        w = (np.exp(-rho * (k - 1) * dt) - np.exp(-rho * k * dt)) / rho / dt
        np.testing.assert_allclose(dist[1:], np.outer(w, A_FULL[:, 0]), rtol=1e-12)
        assert not dist[0].any()
        np.testing.assert_allclose(X[1:], np.tile([1.0, 0.0], (20, 1)))

    @pytest.mark.parametrize("spec", [PropagatorSpec.matrix_exp([[0.5, 0.1], [0.1, 0.3]]),
                                      PropagatorSpec.exponential(A_FULL, 0.5)])
    def test_dense_blocks_agree(self, spec):
        grid = Grid(15, 3.0)
        u = np.random.default_rng(0).standard_normal((16, 2))
        X, dist = inventory_and_distortion(spec, np.zeros(2), u, grid)
        from crossimpact import build_kernel_blocks
        L = build_kernel_blocks(spec, grid)[0]
        for k in range(16):
            ref = sum((L[k, j] if L.ndim == 4 else L[k, j] * A_FULL) @ u[j] for j in range(k))
            np.testing.assert_allclose(dist[k], ref, atol=1e-13)


class TestStochastic:
    def setup_method(self):
        self.market = MarketParams(Lambda=LAMBDA, X0=[10.0, 0.0], T=10.0, varrho=4.0,
                                   Sigma=np.diag([0.04, 0.05]), gamma=0.5)
        self.spec = PropagatorSpec.fractional(A_FULL, 0.25)
        self.grid = Grid(40, 10.0)

    def test_expected_path_matches_deterministic(self):
        model = SignalModel.ou([0.9, 0.3], [0.5, 0.5])
        det = solve_deterministic(self.market, self.spec, self.grid, model=model)
        sto = solve_stochastic_path(self.market, self.spec, model, None, self.grid)
        np.testing.assert_allclose(sto.u, det.u, rtol=1e-9, atol=1e-9)

    def test_deterministic_signal_matches(self):
        model = SignalModel.from_table([0.0, 10.0], [[0.1, -0.2], [0.0, 0.1]])
        det = solve_deterministic(self.market, self.spec, self.grid, model=model)
        sto = solve_stochastic_path(self.market, self.spec, model, None, self.grid)
        np.testing.assert_allclose(sto.u, det.u, rtol=1e-9, atol=1e-9)

    def test_zero_signal_path(self):
        model = SignalModel.ou([0.5, 0.5], [0.0, 0.0], 0.1 * np.eye(2))
        path = SignalPath(np.zeros((41, 2)))
        det = solve_deterministic(self.market, self.spec, self.grid, model=model)
        sto = solve_stochastic_path(self.market, self.spec, model, path, self.grid)
        np.testing.assert_allclose(sto.u, det.u, rtol=1e-9, atol=1e-9)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_resolvent_agrees_with_trailing(self, seed):
        model = SignalModel.ou([0.9, 0.3], [0.5, 0.5], 0.2 * np.eye(2))
        path = simulate_ou_path(model, self.grid, seed)
        a = solve_stochastic_path(self.market, self.spec, model, path, self.grid)
        b = solve_stochastic_resolvent(self.market, self.spec, model, path, self.grid)
        np.testing.assert_allclose(a.u, b.u, rtol=1e-9, atol=1e-9)
        assert a.foc_residual < 1e-9 and b.foc_residual < 1e-9
        assert a.method == "trailing" and b.method == "resolvent"

    def test_resolvent_without_feedback(self):
        # no transient impact, no risk or penalty: B = 0 and u_k = Lambda^{-1} g_k(t_k)
        market = frictionless_market()
        model = SignalModel.ou([0.9, 0.3], [0.5, 0.5], 0.2 * np.eye(2))
        path = simulate_ou_path(model, self.grid, 4)
        rep = solve_stochastic_resolvent(market, PropagatorSpec.zero(2), model, path, self.grid)
        tau = 10.0 - self.grid.nodes[:, None]
        beta = np.array([0.9, 0.3])
        togo = path.values * (-np.expm1(-beta * tau)) / beta
        np.testing.assert_allclose(rep.u, togo / 0.03, rtol=1e-12, atol=1e-14)

    def test_nonanticipative(self):
        model = SignalModel.ou([0.9, 0.3], [0.5, 0.5], 0.2 * np.eye(2))
        p1 = simulate_ou_path(model, self.grid, 1).values
        p2 = p1.copy()
        p2[25:] += 1.0
        u1 = solve_stochastic_path(self.market, self.spec, model, p1, self.grid).u
        u2 = solve_stochastic_path(self.market, self.spec, model, p2, self.grid).u
        np.testing.assert_array_equal(u1[:25], u2[:25])
        assert not np.allclose(u1[25:], u2[25:])

    def test_factor_cache_reuse(self):
        model = SignalModel.ou([0.9, 0.3], [0.5, 0.5], 0.2 * np.eye(2))
        system = assemble_D(self.market, self.spec, self.grid)
        factors = TrailingFactors(system)
        for seed in range(3):
            path = simulate_ou_path(model, self.grid, seed)
            a = solve_stochastic_path(self.market, self.spec, model, path, self.grid,
                                      system=system, factors=factors, check=False)
            b = solve_stochastic_path(self.market, self.spec, model, path, self.grid)
            np.testing.assert_allclose(a.u, b.u, rtol=1e-12, atol=1e-12)
        assert len(factors._lu) == 41

    def test_path_mismatch(self):
        model = SignalModel.ou([0.9, 0.3], [0.5, 0.5])
        with pytest.raises(PathMismatch):
            solve_stochastic_path(self.market, self.spec, model, np.zeros((10, 2)), self.grid)
        with pytest.raises(PathMismatch):
            solve_stochastic_resolvent(self.market, self.spec, model, np.zeros((41, 3)),
                                       self.grid)
