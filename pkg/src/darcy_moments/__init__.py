"""Expected value of the lognormal Darcy solution via recursive first-moment
equations: finite elements in the physical variable, Smolyak sparse
interpolation in the correlation variables, with Monte Carlo and brute-force
oracles built in for validation."""

from .config import (CapsConfig, ForcingConfig, KernelConfig, McConfig,
                     MeshConfig, RecursionConfig, ReferenceConfig,
                     SparseConfig, StudyConfig, SweepConfig, config_from_dict,
                     config_to_dict, default_config, dump_config, load_config)
from .errors import CapacityError, FactorizationError
from .fem import (FactorizedLaplacian, FeFunction, FeSpace, Mesh,
                  assemble_laplacian, build_mesh, evaluate, evaluate_gradient,
                  fe_error, fe_norm, fe_project, gradient_load_vector,
                  load_vector, solve_dirichlet, stiffness_matrix)
from .moment_recursion import (Correlation, CorrectionTable, TaylorMean,
                               projected_solve_count, run_recursion,
                               seed_correlation, solve_correlation,
                               taylor_mean, trace_rhs)
from .oracles import (CoefficientInputs, McEstimate, full_tensor_interpolant,
                      full_tensor_oracle, full_tensor_recursion,
                      holder_norm_1d, lambda_coeffs, lognormal_solve, mc_mean,
                      mc_corrections_mean, mixed_holder_norm,
                      mixed_holder_seminorm, per_sample_corrections,
                      theta_coeffs)
from .problem import Problem, forcing_callable, setup_problem
from .random_field import (CovarianceKernel, GaussianSampler, MomentEvaluator,
                           SyntheticKlSampler, build_sampler,
                           covariance_matrix, cov_eval, moment_eval,
                           sample_field, stream_for)
from .sparse_grid import (LevelFamily, SparseInterpolant, combination_terms,
                          grid_points, interp_1d, level_nodes, multi_indices,
                          smolyak_build, smolyak_eval, smolyak_eval_many,
                          tensor_build)
from .storage import (load_table, read_csv, save_fe_function,
                      save_mc_estimate, save_table, write_csv)

__version__ = "0.1.0"
