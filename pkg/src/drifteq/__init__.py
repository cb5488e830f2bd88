"""Equilibrium solvers for stochastic control with non-exponential
discounting: a regression Monte Carlo route, a finite-difference route, and a
discrete lattice route, plus simulation-based consistency checks."""

__version__ = "1.0.0"

from .errors import (ConfigurationError, DomainError, SimulationError,
                     SolverError, UnsupportedProblemError, VerificationError)
from .problems import (AnalyticPolicy, ConstantPolicy, ConstantVol,
                       ConsumptionAdjustedDrift, DiscountFunction,
                       FeedbackPolicy, IsoelasticConsumptionReward,
                       IsoelasticWealthTerminal, LinearVol, PolyDrift,
                       PolyReward, PolyTerminal, ProblemSpec,
                       ProportionalConsumptionDrift,
                       ProportionalConsumptionReward, TabulatedKernelReward,
                       hamiltonian, hamiltonian_sup, maximizer)
from .simulate import (PathEnsemble, TimeGrid, adjusted_reward,
                       estimate_reward, estimate_type_derivative,
                       reward_batch, simulate_paths, sub_rng,
                       type_derivative_batch, write_ensemble_csv)
from .lattice import (Lattice, LatticeEquilibrium, default_state_domain,
                      export_policy, solve_classical, solve_equilibrium)
from .pde import PdeSolution, pde_residual, solve_pde
from .bsde import BsdeSolution, solve_bsde
from .verify import (OffsetPolicy, SpikeResult, WindowPolicy,
                     adjusted_reward_consistency, dpp_residual,
                     reduction_check, spike_test)
from .crra import (ConsumptionCurve, consumption_coefficient_curve,
                   log_consumption_coefficient)
from .library import (BUILTIN_PROBLEMS, build_problem, constant_vol_diffusion,
                      crra_consumption, exponential_lq, hyperbolic_lq,
                      lq_problem, proportional_consumption_policy)
