"""Rough differential equations with unbounded drift: flows, drift decomposition and bound checks."""

from .controls import (GreedyPartition, greedy_partition, holder_norm, n_delta, pvar_control, pvar_distance,
                       pvar_norm, tilde_control)
from .drift_decomposition import (DriftField, DriftFlow, FlowResult, LinearGrowth, OneSidedGrowth, chi_solve,
                                  drift_preset, estimate_growth_constants, flow_phi, select_delta, solve_direct,
                                  solve_direct_batch)
from .drivers import (GaussianDriverSpec, SampledRoughPath, dilate, fbm_path, lift_piecewise_linear, sample_fbm,
                      sample_fbm_batch)
from .errors import ConfigurationError, DomainError, ExplosionError, SingularJacobianError, StiffnessError
from .rde_flow import (SolverOptions, VectorFields, flow_psi, inverse_jacobian, jacobian_bound_check, jacobian_flow,
                       sigma_preset, solve_rde)
from .tensor_core import GroupElement, chen_mul, distance, homogeneous_norm, inverse

__version__ = "0.1.0"
