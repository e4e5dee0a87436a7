"""Simulation of hybrid Hamiltonian systems and numerical checks of Hamilton-Jacobi solutions."""

from .errors import HybridHJError
from .hybrid import (
    GuardSpec,
    HybridSystemSpec,
    HybridTrajectory,
    ImpactEvent,
    ResetMap,
    SimPolicy,
    ZenoPolicy,
    check_hybrid_constant,
    simulate_hybrid,
)
from .integrate import StepPolicy, integrate_segment, locate_event
from .phase import (
    ConstraintSet,
    DynamicsModel,
    PhasePoint,
    SemibasicForce,
    forced_field,
    hamiltonian_field,
    is_on_constraint,
    nonholonomic_field,
    projected_field,
)
from .reconstruct import ComparisonReport, ReconstructionRun, compare, reconstruct
from .verify import (
    ResidualReport,
    SolutionFamily,
    TransferMap,
    complete_solution_check,
    delta_relatedness_check,
    residual_conservative,
    residual_forced,
    residual_nonholonomic,
)

__version__ = "0.1.0"

__all__ = [
    "ComparisonReport",
    "ConstraintSet",
    "DynamicsModel",
    "GuardSpec",
    "HybridHJError",
    "HybridSystemSpec",
    "HybridTrajectory",
    "ImpactEvent",
    "PhasePoint",
    "ReconstructionRun",
    "ResetMap",
    "ResidualReport",
    "SemibasicForce",
    "SimPolicy",
    "SolutionFamily",
    "StepPolicy",
    "TransferMap",
    "ZenoPolicy",
    "check_hybrid_constant",
    "compare",
    "complete_solution_check",
    "delta_relatedness_check",
    "forced_field",
    "hamiltonian_field",
    "integrate_segment",
    "is_on_constraint",
    "locate_event",
    "nonholonomic_field",
    "projected_field",
    "reconstruct",
    "residual_conservative",
    "residual_forced",
    "residual_nonholonomic",
    "simulate_hybrid",
]
