"""Mean-variance portfolio selection with different borrowing and saving rates.

The optimal policy is computed through a dual (Legendre) transform: a
semi-linear PDE is solved in log-dual space, mapped back to the value
function and feedback policy, and checked by Monte Carlo simulation.
"""

from .dual_transform import (DualSurface, ValueSurface, dual_surface, feedback_policy,
                             legendre_V, value_bounds, value_surface)
from .errors import (CacheCorrupt, GapfolioError, NumericalError, OutOfRange,
                     ValidationError)
from .free_boundary import extract_z_boundaries, map_to_wealth
from .frontier import efficient_frontier, value_sensitivity
from .market import BASELINE, EQUAL_RATES, MarketParams, check_c1_conditions, validate_params
from .pde_core import Grid, SolverOptions, check_w_bounds, solve, solve_w
from .simulate import OptimalPolicy, SimConfig, simulate_policy, verify_value

__version__ = "0.1.0"
