"""Built-in experiment definitions for the three published examples.

Every pinned value carries a source label, written to run metadata:
``published example`` for numbers taken from the worked examples and
``chosen default`` for values this package had to pick.
"""

from __future__ import annotations

import math
from dataclasses import replace

from .harness import EstimatorSettings, ExperimentSpec
from .noise import NoiseModel
from .system import FirConfig, InputGenerator

PUBLISHED = "published example"
CHOSEN = "chosen default"

EXAMPLE1_THETA = (0.1, 0.5, 0.9)
EXAMPLE1_C = 0.8
EXAMPLE1_INPUTS = ((2.0, 0.0, 1.0), (1.0, 2.0, 0.0), (0.0, 1.0, 2.0))
EXAMPLE1_THETA0 = (0.3, 0.3, 0.3)
EXAMPLE1_THETA_BAR = math.sqrt(3.0)
EXAMPLE1_PHI_BAR = math.sqrt(5.0)

# Constant RPFI gains for Example 1. Tuned by pilot runs; see the README.
EXAMPLE1_RPFI_ALPHA = 0.6
EXAMPLE1_RPFI_BETA = 0.02
EXAMPLE1_BASELINE_ALPHA = 30.0
EXAMPLE1_BASELINE_BETA = 1.0

EXAMPLE2_THETA = 3.0
EXAMPLE2_C = 4.0
EXAMPLE2_THETA0 = 1.0
EXAMPLE2_THETA_BAR = 5.0
EXAMPLE2_PHI_BAR = 3.0
EXAMPLE2_RPFI_ALPHA = 0.3
EXAMPLE2_RPFI_BETA = 0.02
EXAMPLE2_BASELINE_ALPHA = 15.0
EXAMPLE2_BASELINE_BETA = 1.0


def example1_system() -> tuple[FirConfig, InputGenerator]:
    config = FirConfig(EXAMPLE1_THETA, EXAMPLE1_C, EXAMPLE1_THETA_BAR, EXAMPLE1_PHI_BAR)
    return config, InputGenerator.periodic(EXAMPLE1_INPUTS, EXAMPLE1_PHI_BAR)


def example2_system() -> tuple[FirConfig, InputGenerator]:
    config = FirConfig([EXAMPLE2_THETA], EXAMPLE2_C, EXAMPLE2_THETA_BAR, EXAMPLE2_PHI_BAR)
    return config, InputGenerator.iid_uniform(1.0, 3.0, 1, EXAMPLE2_PHI_BAR)


def example1_spec(kind: str = "rpfi", runs: int = 300, horizon: int = 100_000, base_seed: int = 0,
                  alpha: float | None = None) -> ExperimentSpec:
    config, inputs = example1_system()
    if kind == "rpfi":
        est = EstimatorSettings("rpfi", EXAMPLE1_THETA0, alpha or EXAMPLE1_RPFI_ALPHA, EXAMPLE1_RPFI_BETA)
    elif kind == "impf":
        est = EstimatorSettings("impf", EXAMPLE1_THETA0)
    else:
        est = EstimatorSettings(kind, EXAMPLE1_THETA0, alpha or EXAMPLE1_BASELINE_ALPHA, EXAMPLE1_BASELINE_BETA)
    stride = 10 if horizon >= 10_000 else 1
    return ExperimentSpec(config, inputs, est, NoiseModel(1.0), horizon, runs, base_seed, stride)


def example1_suggested_alpha_spec(runs: int = 300, horizon: int = 100_000, base_seed: int = 0) -> ExperimentSpec:
    """Example 1 RPFI with ``alpha`` left to :func:`suggest_alpha_for_rate` (``beta = 1``)."""
    spec = example1_spec("rpfi", runs, horizon, base_seed)
    return replace(spec, estimator=EstimatorSettings("rpfi", EXAMPLE1_THETA0, None, 1.0))


def example2_spec(kind: str = "impf", runs: int = 2000, horizon: int = 10_000, base_seed: int = 0) -> ExperimentSpec:
    config, inputs = example2_system()
    if kind == "impf":
        est = EstimatorSettings("impf", (EXAMPLE2_THETA0,), p0=1.0)
    elif kind == "rpfi":
        est = EstimatorSettings("rpfi", (EXAMPLE2_THETA0,), EXAMPLE2_RPFI_ALPHA, EXAMPLE2_RPFI_BETA)
    else:
        est = EstimatorSettings(kind, (EXAMPLE2_THETA0,), EXAMPLE2_BASELINE_ALPHA, EXAMPLE2_BASELINE_BETA)
    stride = 10 if horizon >= 10_000 else 1
    return ExperimentSpec(config, inputs, est, NoiseModel(1.0), horizon, runs, base_seed, stride)


def example3_spec(runs: int = 500, horizon: int = 20_000, base_seed: int = 0) -> ExperimentSpec:
    return example1_spec("impf", runs, horizon, base_seed)


def provenance(example: int) -> dict:
    """Pinned values of a built-in example with their source labels."""
    common = {"sigma": (1.0, CHOSEN)}
    if example in (1, 3):
        out = {
            "theta": (list(EXAMPLE1_THETA), PUBLISHED),
            "threshold_c": (EXAMPLE1_C, PUBLISHED),
            "inputs": ([list(v) for v in EXAMPLE1_INPUTS], PUBLISHED),
            "theta0": (list(EXAMPLE1_THETA0), PUBLISHED),
            "theta_bar": (EXAMPLE1_THETA_BAR, CHOSEN),
            "phi_bar": (EXAMPLE1_PHI_BAR, CHOSEN),
            **common,
        }
        if example == 1:
            out.update({
                "runs": (300, CHOSEN),
                "rpfi_alpha": (EXAMPLE1_RPFI_ALPHA, CHOSEN),
                "rpfi_beta": (EXAMPLE1_RPFI_BETA, CHOSEN),
            })
        else:
            out.update({
                "runs": (500, PUBLISHED),
                "p0": (1.0, CHOSEN),
                "timing_threshold": (1e-4, PUBLISHED),
                "timing_repeats": (3, PUBLISHED),
                "baseline_alpha": (EXAMPLE1_BASELINE_ALPHA, CHOSEN),
            })
        return out
    if example == 2:
        return {
            "theta": (EXAMPLE2_THETA, PUBLISHED),
            "threshold_c": (EXAMPLE2_C, PUBLISHED),
            "inputs": ("uniform(1, 3)", PUBLISHED),
            "theta0": (EXAMPLE2_THETA0, PUBLISHED),
            "p0": (1.0, PUBLISHED),
            "theta_bar": (EXAMPLE2_THETA_BAR, CHOSEN),
            "phi_bar": (EXAMPLE2_PHI_BAR, CHOSEN),
            "runs": (2000, CHOSEN),
            "rpfi_alpha": (EXAMPLE2_RPFI_ALPHA, CHOSEN),
            "baseline_alpha": (EXAMPLE2_BASELINE_ALPHA, CHOSEN),
            **common,
        }
    raise ValueError(f"no built-in example {example}")
