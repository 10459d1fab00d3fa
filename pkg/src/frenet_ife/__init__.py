"""Frenet-coordinate immersed finite elements for 2D elliptic interface problems."""

__version__ = "0.1.0"

from .errors import (BasisError, ConfigError, FrenetIFEError, GeometryError, MeshError,
                     SideMismatchError, SolverError)
from .geometry import (Curve, FrenetFrame, FrenetPoint, circle, closest_point_param,
                       frenet_apparatus, frenet_forward, frenet_inverse, line, metric_coeffs,
                       pushforward_gradient)
from .mesh import Mesh, build_mesh, classify_elements, fictitious_chart
from .quadrature import QuadRule, cut_cell_rule, edge_rule, gauss_rule
from .ife_basis import (BivariateFrenetPoly, LocalSpace, PiecewiseFrenetPoly, build_local_space,
                        cheap_basis, conditioning_study, eval_shape, eval_shape_grad,
                        extension_system, jump_residual, laplacian_trace)
from .assembly import discretize, face_terms, load_terms, local_volume, project_l2
from .solver import assemble_and_solve, compute_error, convergence_rates
from .problems import example1, example2, get_problem
