"""Guided diffusion sampling on analytic toy targets.

Dual-orthogonal guidance with CFG/APG baselines, an exact Gaussian-mixture
denoiser, a small trainable denoiser, and sweep/ablation tooling.
"""

from .conditions import (
    NULL_CONDITION,
    ConditionPair,
    ConditionalGMM,
    GMMSlice,
    NullCondition,
    build_toy_gmm,
    embed_condition,
    sample_data,
)
from .denoiser import (
    AnalyticDenoiser,
    MLPDenoiser,
    analytic_posterior_mean,
    epsilon_disagreement,
    train_toy_denoiser,
)
from .errors import ConfigurationError, NumericalAbort
from .guidance import (
    GuidanceConfig,
    Strategy,
    apg_combine,
    cfg_combine,
    clip_norm,
    dog_combine,
    orthogonal_component,
    project_onto,
)
from .metrics import MetricReport, diversity, stability_curve, wasserstein2
from .perturb import (
    NegativePromptSource,
    PerturbConfig,
    PerturbTarget,
    ResampleMode,
    make_negative,
)
from .sampler import Trajectory, ddim_step, sample, sample_batch
from .schedule import DiffusionSchedule, TriangularSchedule, make_linear_schedule

__version__ = "0.1.0"
