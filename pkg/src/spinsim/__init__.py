"""Stochastic dynamics of a single magnetic moment under a Landau-Lifshitz
drift with multiplicative noise: seeded Euler-Maruyama simulation, Monte
Carlo estimators for the long-time observables, and a CLI for reproducible
experiment runs.
"""

__version__ = "0.1.0"

from ._kernels import RNG_ID
from .dynamics import (
    ConstantField,
    FieldSchedule,
    LinearRamp,
    ModelParams,
    NormProfile,
    strato_fixed_point,
)
from .experiments import (
    AlignmentResult,
    Direction,
    EnsembleEstimate,
    HittingTimeResult,
    HittingTimeSample,
    HysteresisResult,
    RateResult,
    RateStatistic,
    StratoResult,
    TailProbabilityResult,
    estimate_alignment,
    estimate_l2_decay,
    estimate_rate,
    hitting_time,
    hysteresis_sweep,
    long_run_study,
    strato_equilibrium,
    tail_probability,
    wilson_interval,
)
from .integrator import (
    GridSpec,
    IntegrationError,
    Mode,
    NormalStream,
    PathState,
    RngStream,
    run_path,
    step_coupled,
    step_normalized,
)

__all__ = [
    "AlignmentResult",
    "ConstantField",
    "Direction",
    "EnsembleEstimate",
    "FieldSchedule",
    "GridSpec",
    "HittingTimeResult",
    "HittingTimeSample",
    "HysteresisResult",
    "IntegrationError",
    "LinearRamp",
    "Mode",
    "ModelParams",
    "NormProfile",
    "NormalStream",
    "PathState",
    "RNG_ID",
    "RateResult",
    "RateStatistic",
    "RngStream",
    "StratoResult",
    "TailProbabilityResult",
    "estimate_alignment",
    "estimate_l2_decay",
    "estimate_rate",
    "hitting_time",
    "hysteresis_sweep",
    "long_run_study",
    "run_path",
    "step_coupled",
    "step_normalized",
    "strato_equilibrium",
    "strato_fixed_point",
    "tail_probability",
    "wilson_interval",
    "__version__",
]
