"""Inverse design of periodic thermal microstructures.

A density field on a periodic voxel lattice is optimized so the cell's
homogenized conductivity tensor matches a prescribed symmetric target.  The
forward model is a matrix-free trilinear FEM with geometric multigrid; the
optimizer is a multiplicative OC update whose volume ceiling adapts as the
mismatch shrinks, with an MMA-driven minimum-volume mode for comparison.
"""

from .element import (ElementTemplates, MaterialParams, build_templates,
                      simp_conductivity, simp_derivative)
from .field import (DensityField, FilterSpec, InitPattern, filter_backward,
                    filter_forward, init_density, project_central_symmetry)
from .homogenize import (ConductivityTensor, HomogenizationResult,
                         effective_tensor, homogenize, solve_cases,
                         tensor_sensitivity)
from .io import read_density, write_density, write_outputs
from .objective import (FeasibilityReport, ObjectiveSpec, eval_objective,
                        feasibility_check)
from .optimize import (GovernorState, Model, OCParams, OptimizationAborted,
                       OptimizationResult, RunConfig, governor_update,
                       oc_update, run_optimization)
from .solver import (ConvergenceError, GridHierarchy, GridLevel, apply_K,
                     assemble_macro_load, coarse_solve, prolong_correct,
                     relax_gs8, restrict, solve_equation)

__version__ = "0.1.0"
