"""Minimal-action lazy lattice paths in a signed random potential.

The library computes exact minimal actions by dynamic programming, and on
top of that estimates the shape function, the statistics of small
discrepancies and their Poisson limit, free-endpoint optimizer scaling, and
the loop decomposition of point-to-point minimizers.  The cli module exposes
each result area as a subcommand.
"""

from .env import (EnvParams, Environment, SiteField, EnvError,
                  sample_environment, sample_signs, replica_seed,
                  density_pdf, cdf, inverse_cdf, mean_abs_F)
from .paths import LazyPath, eta_path, eta_action, eta_action_bounds
from .dp import (ActionTable, Budget, BudgetExceeded, OptimalPathResult,
                 build_table, min_action_point, min_action_free, point_rows,
                 two_point_action, optimal_path, backtrack, brute_force_oracle)
from .discrepancy import (p_kappa, zeta, discrepancy_field,
                          modified_discrepancy, small_discrepancy_cdf_check,
                          rescale_cloud, poisson_compare, record_edges)
from .shape import (estimate_shape, check_corner, check_nonlinearity,
                    detect_flat_edge, check_bounds_chain, estimate_s)
from .freepath import (free_path_stats, run_free_ensemble, scaling_regression,
                       compute_h, limit_law_test, g_argmin)
from .loopdecomp import decompose, minimizer_decomposition, validate

__version__ = "0.1.0"
