"""Delta-convex regularization of Lipschitz functions on finite-dimensional
l_p spaces, with dyadic-tree adversaries certifying approximation limits."""

from .spaces import (NormedSpace, SampleBudget, ModulusEstimate,
                     PowerTypeConstant, DimensionMismatchError,
                     analytic_modulus_lower, modulus_of_convexity,
                     power_type_constant)
from .functions import (LipschitzFunction, PointSet, LipschitzReport,
                        CORPUS_LABELS, distance_function, make_corpus,
                        corpus_function, verify_lipschitz)
from .regularize import (ParameterError, SolverError, SolverConfig,
                         RegularizationResult, ConvexPair, search_radius,
                         analytic_power_constant, regularize_power,
                         regularize_power_grid, regularize_quadratic,
                         inf_convolve, inf_convolve_grid, inner_minimize,
                         decompose, ball_grid, sup_distance, rate_bound)
from .trees import (DyadicTree, TreeFamily, TreeValidation, WalkLevel,
                    WalkReport, build_sign_tree, build_tree_family,
                    validate_tree, counterexample_function,
                    adversarial_branch_walk, error_lower_bound, save_tree,
                    load_tree)
from .experiments import (ConfigError, ExperimentConfig, ResultRow,
                          ExperimentResult, run_converge, run_hilbert_equiv,
                          run_sandwich, run_adversary, run_modulus,
                          convex_pair_catalog)

__version__ = "0.1.0"
