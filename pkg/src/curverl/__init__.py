"""curverl: a desk-scale lab for prompt-reweighted RL with verifiable rewards.

Synthetic prompt populations carry per-prompt softmax policies whose pass
rates and gradients are closed-form, so reweighting schemes, their induced
priors, and the training loop itself can all be checked against exact
oracles.
"""

from .passrate import (
    DifficultyProfile,
    PromptInstance,
    PromptPopulation,
    RolloutBatch,
    exact_pass_rate,
    exact_pass_rate_gradient,
    make_population,
    sample_rollouts,
    score_vector,
)
from .refdist import (
    ColdStartError,
    ReferenceDistribution,
    SlidingWindow,
    estimate,
    exact_policy_distribution,
    uniform_reference,
    wasserstein1,
)
from .trainer import TrainConfig, TrainResult, effective_distribution, run_training
from .weighting import (
    ClippedLog,
    Curve,
    EntropicRisk,
    Grpo,
    Identity,
    IntegratedConvex,
    IntegratedProduct,
    Log,
    MaxRL,
    Reinforce,
    induced_prior,
    induced_prior_numeric,
    pointwise_weight,
)

__version__ = "0.1.0"

__all__ = [
    "DifficultyProfile",
    "PromptInstance",
    "PromptPopulation",
    "RolloutBatch",
    "exact_pass_rate",
    "exact_pass_rate_gradient",
    "make_population",
    "sample_rollouts",
    "score_vector",
    "ColdStartError",
    "ReferenceDistribution",
    "SlidingWindow",
    "estimate",
    "exact_policy_distribution",
    "uniform_reference",
    "wasserstein1",
    "TrainConfig",
    "TrainResult",
    "effective_distribution",
    "run_training",
    "ClippedLog",
    "Curve",
    "EntropicRisk",
    "Grpo",
    "Identity",
    "IntegratedConvex",
    "IntegratedProduct",
    "Log",
    "MaxRL",
    "Reinforce",
    "induced_prior",
    "induced_prior_numeric",
    "pointwise_weight",
    "__version__",
]
