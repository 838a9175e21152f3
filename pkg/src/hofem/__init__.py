"""High-order finite elements on structured quadrilateral and hexahedral meshes.

Matrix-free operators (partial assembly with sum factorization), LOR and
p-multigrid preconditioned CG, TMOP mesh optimization and a DG solver for
hyperbolic conservation laws. Pure numpy/scipy.
"""

from .basis import Basis1D, gauss_quadrature, gll_nodes, lagrange_eval, tabulate
from .fespace import H1, L2, FESpace, boundary_dofs, build_fespace
from .hyperbolic import (DGState, InadmissibleStateError, LinearAdvection, ShallowWater,
                         dg_residual, rusanov_flux, ssp_rk3_step, stable_dt)
from .mesh import (CartesianMesh, InvalidMeshError, geometric_factors, lor_refine,
                   make_cartesian_mesh, perturb_mesh, refine_uniform, transform_mesh)
from .operators import (DIFFUSION, MASS, PAOperator, assemble_rhs, element_assemble,
                        eliminate_bc, full_assemble, l2_error, pa_apply, pa_diagonal, pa_setup)
from .rng import SplitMix64, random_vector
from .solvers import (IndefiniteError, IterStats, LORPreconditioner, PMGHierarchy, cg,
                      chebyshev_smooth, make_preconditioner, power_method_lmax)
from .tmop import (InvertedElementError, Metric, TargetSpec, TmopProblem,
                   circle_fitting_problem, tmop_gradient, tmop_newton_solve, tmop_objective)

__version__ = "0.1.0"
