"""Coherent robust H-infinity control of uncertain linear quantum systems.

Synthesis of coherent (fully quantum) output-feedback controllers for
quadrature-form linear quantum stochastic systems whose Hamiltonian carries
norm-bounded uncertainty, plus the verification toolbox for the resulting
closed loops: physical realizability, strict bounded-realness and
disturbance-attenuation sweeps.
"""

__version__ = "0.1.0"

from . import analysis, qmodel, realization, riccati, synthesis
from .analysis import (
    ClosedLoopSystem,
    SweepResult,
    close_loop,
    hinf_norm,
    robust_sbr_check,
    sbr_check,
    scaled_equivalence_check,
    sweep,
)
from .qmodel import (
    CommutationStructure,
    OpenPlant,
    SLHModel,
    StateSpace,
    UncertaintyModel,
    UncertaintySample,
    apply_uncertainty,
    canonical_theta,
    is_physically_realizable,
    slh_to_state_space,
    structure_matrices,
)
from .realization import CoherentController, complete_realization, is_canonical_ito, skew_factor
from .riccati import (
    AssumptionReport,
    CareProblem,
    CareSolution,
    check_assumptions,
    riccati_X,
    riccati_Y,
    solve_care_stabilizing,
)
from .synthesis import (
    SynthesisConfig,
    SynthesisReport,
    controller_matrices,
    scale_plant,
    search_epsilon,
    synthesize,
)

__all__ = [
    "__version__",
    "AssumptionReport",
    "CareProblem",
    "CareSolution",
    "ClosedLoopSystem",
    "CoherentController",
    "CommutationStructure",
    "OpenPlant",
    "SLHModel",
    "StateSpace",
    "SweepResult",
    "SynthesisConfig",
    "SynthesisReport",
    "UncertaintyModel",
    "UncertaintySample",
    "apply_uncertainty",
    "canonical_theta",
    "check_assumptions",
    "close_loop",
    "complete_realization",
    "controller_matrices",
    "hinf_norm",
    "is_canonical_ito",
    "is_physically_realizable",
    "riccati_X",
    "riccati_Y",
    "robust_sbr_check",
    "sbr_check",
    "scale_plant",
    "scaled_equivalence_check",
    "search_epsilon",
    "skew_factor",
    "slh_to_state_space",
    "solve_care_stabilizing",
    "structure_matrices",
    "sweep",
    "synthesize",
]
