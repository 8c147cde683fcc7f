"""Structure-preserving simulation of a drift-diffusion-Poisson system with a trap level."""

from .core import (
    ChargeNeutralityViolation,
    CompatibilityViolation,
    EntropyReport,
    Grid,
    InsufficientData,
    MaterialFields,
    ModelParams,
    NonConvergence,
    NonpositiveReference,
    RootBracketFailure,
    State,
    TrapflowError,
    ValidationError,
    build_grid,
    cell_average,
    discrete_norms,
)
from .entropy import (
    DecayFit,
    check_elementary_inequalities,
    ckp_lower_bound,
    entropy,
    entropy_production,
    entropy_report,
    fit_decay_rate,
    relative_entropy,
)
from .equilibrium import EquilibriumState, equilibrium_residuals, solve_equilibrium
from .poisson import NeumannLaplacian, assemble_laplacian, solve_poisson
from .reactions import ReactionRates, eval_reactions, reaction_substep
from .stepper import StepperConfig, TrajectoryLog, make_state, run, step
from .transport import bernoulli, sg_edge_flux, transport_substep

__version__ = "0.1.0"
