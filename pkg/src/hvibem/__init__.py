"""Boundary element solver for plane elasticity with nonmonotone adhesive contact."""

from .bem import (OperatorBlocks, SteklovSystem, assemble_blocks, assemble_double_layer,
                  assemble_hypersingular, assemble_mass, assemble_neumann_load, assemble_single_layer,
                  assemble_steklov, build_steklov, energy_norm, scale_mesh_for_capacity)
from .hvi import (DiscreteHVI, ResidualSystem, SolutionFields, assemble_DJ, build_problem, fb,
                  jacobian, recover_contact_stress, residual, solution_fields)
from .kernels import LameParameters, fundamental_solution, lame_from_engineering, traction_kernel
from .mesh import BoundaryMesh, ConfigurationError, DualMesh, Part, PartSpec, build_dual_mesh, build_rectangle_boundary
from .smoothing import (AdhesionLaw, BranchFunction, SmoothedPotential, build_benchmark_adhesion,
                        plus_smoothing, smoothed_max_derivative, smoothed_max_value)
from .solver import SolveReport, TrustRegionConfig, solve

__version__ = "0.1.0"
