"""Porous medium flow on singular manifolds with wedge ends: finite-volume
operators, Crandall-Liggett time stepping and spectral-gap studies."""

__version__ = "0.1.0"

from .geometry import (CuspCharacteristic, GeometryConfig, SingularMesh, build_mesh,
                       build_singularity_function, make_cusp_characteristic,
                       validate_cusp_characteristic, volume_weights)
from .linalg import SparseOperator, smallest_eigenpair, solve_cg, spmv
from .operators import (Coefficient, assemble_divergence_form, coefficient_from_state,
                        discrete_divergence, discrete_gradient, weighted_norm)
from .resolvent import (SemilinearProblem, accretivity_probe, brezis_strauss_solve,
                        linear_resolvent, pme_resolvent_step)
from .evolution import (EvolutionTrace, TimePartition, contraction_monitor, evolve,
                        mild_convergence_study, positivity_and_mass_report)

__all__ = [
    "CuspCharacteristic", "GeometryConfig", "SingularMesh", "build_mesh",
    "build_singularity_function", "make_cusp_characteristic", "validate_cusp_characteristic",
    "volume_weights", "SparseOperator", "smallest_eigenpair", "solve_cg", "spmv",
    "Coefficient", "assemble_divergence_form", "coefficient_from_state", "discrete_divergence",
    "discrete_gradient", "weighted_norm", "SemilinearProblem", "accretivity_probe",
    "brezis_strauss_solve", "linear_resolvent", "pme_resolvent_step", "EvolutionTrace",
    "TimePartition", "contraction_monitor", "evolve", "mild_convergence_study",
    "positivity_and_mass_report",
]
