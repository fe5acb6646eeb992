"""markov-poisson - Poisson's equation and CLT variance constants via augmented truncation."""

__version__ = "0.4.0"

from markov_poisson.chain import (
    ChainKind,
    ChainSpec,
    ForcingFunction,
    make_builtin,
    row,
    truncate,
)
from markov_poisson.config import SweepConfig
from markov_poisson.errors import (
    ConfigError,
    ErrorCode,
    MarkovPoissonError,
    ModelError,
    SimulationError,
    SolverError,
    StructuredError,
    SweepError,
    TruncationError,
    format_error,
    handle_error,
)
from markov_poisson.golden import example_closed_forms
from markov_poisson.simulation import SimConfig, simulate_return
from markov_poisson.solver import (
    invariant_gth,
    pi_ratio_mean,
    poisson_solve,
    return_moments_ctmc,
    return_moments_dtmc,
    stationary_mean,
    variance_ctmc,
    variance_dtmc,
)
from markov_poisson.structured import (
    birth_death_variance,
    f_table,
    g_table,
    single_birth_poisson,
    single_death_poisson,
    single_death_variance,
)
from markov_poisson.sweep import diagnose, run_sweep
from markov_poisson.truncation import (
    FiniteKernel,
    augment_linear,
    censor,
    censor_single_death,
)

__all__ = [
    "ChainKind",
    "ChainSpec",
    "ForcingFunction",
    "FiniteKernel",
    "SweepConfig",
    "SimConfig",
    "make_builtin",
    "row",
    "truncate",
    "augment_linear",
    "censor",
    "censor_single_death",
    "invariant_gth",
    "poisson_solve",
    "return_moments_dtmc",
    "return_moments_ctmc",
    "stationary_mean",
    "variance_dtmc",
    "variance_ctmc",
    "pi_ratio_mean",
    "f_table",
    "g_table",
    "single_birth_poisson",
    "single_death_poisson",
    "single_death_variance",
    "birth_death_variance",
    "example_closed_forms",
    "simulate_return",
    "run_sweep",
    "diagnose",
    "MarkovPoissonError",
    "ConfigError",
    "ModelError",
    "TruncationError",
    "SolverError",
    "StructuredError",
    "SimulationError",
    "SweepError",
    "ErrorCode",
    "handle_error",
    "format_error",
]
