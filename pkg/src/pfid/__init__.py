"""Recursive identification of FIR systems from binary threshold observations."""

from .cramer_rao import CrBoundSeq, cr_bound_sequence, fisher_info_sample, fisher_oracle_bruteforce
from .errors import (
    AssumptionError,
    ConfigError,
    DomainError,
    ExcitationError,
    InfeasibleRateError,
    PfidError,
    RateFitError,
    StateCorruptionError,
)
from .estimators import (
    ImpfState,
    RpfiState,
    impf_step,
    projection_baseline_step,
    rpfi_step,
    suggest_alpha_for_rate,
)
from .harness import (
    EstimatorSettings,
    ExperimentSpec,
    McSummary,
    derive_seed,
    monte_carlo,
    rate_fit,
    run_trajectory,
    step_cost_scaling,
    timing_benchmark,
)
from .noise import NoiseModel
from .system import FirConfig, InputGenerator, check_persistent_excitation, observe

__version__ = "0.1.0"

__all__ = [
    "AssumptionError", "ConfigError", "CrBoundSeq", "DomainError", "EstimatorSettings", "ExcitationError",
    "ExperimentSpec", "FirConfig", "ImpfState", "InfeasibleRateError", "InputGenerator", "McSummary",
    "NoiseModel", "PfidError", "RateFitError", "RpfiState", "StateCorruptionError",
    "check_persistent_excitation", "cr_bound_sequence", "derive_seed", "fisher_info_sample",
    "fisher_oracle_bruteforce", "impf_step", "monte_carlo", "observe", "projection_baseline_step",
    "rate_fit", "rpfi_step", "run_trajectory", "step_cost_scaling", "suggest_alpha_for_rate",
    "timing_benchmark",
]
