"""Optimal trading under transient cross-impact with matrix-valued propagators."""
from ._exceptions import *  # noqa: F401,F403
from .admissibility import (AdmissibilityReport, audit, check_grid_psd, check_structural,
                            transient_cost)
from .discretization import (DiscreteSystem, Grid, MarketParams, assemble_D,
                             assemble_trailing, build_F_blocks, build_kernel_blocks)
from .estimator import OptimalTrader
from .kernels import (Decay, KernelKind, PropagatorSpec, eval_propagator,
                      integrate_phi_block, mirrored_eval)
from .objective import (ObjectiveBreakdown, evaluate_objective, foc_residual, markowitz,
                        twap)
from .signals import (SignalModel, SignalPath, conditional_future_drift, g_profile,
                      simulate_ou_path)
from .solver import (SolveReport, Strategy, inventory_and_distortion, solve_deterministic,
                     solve_stochastic_path, solve_stochastic_resolvent)

__version__ = "0.1.0"
