"""Survey pre-testing with simulated LLM respondents.

Build respondent prompts under four information regimes, collect Likert
answers from a pluggable completion backend, and compare generated with
human responses through PLS-SEM path coefficients, Jensen-Shannon
divergence, Wasserstein distance and agreement-bin consistency.
"""

__version__ = "0.1.0"

from .metrics import (
    DistributionReport,
    LikertDistribution,
    compare_distributions,
    consistency,
    jensen_shannon,
    kde_curve,
    likert_histogram,
    wasserstein,
)
from .plssem import PlsOptions, PlsResult, bootstrap, estimate_scores, fit, path_coefficients, standardize
from .prompting import Approach, PromptBundle, build_prompt, generate_persona, parse_likert_reply
from .survey import (
    LikertScale,
    Respondent,
    ResponseMatrix,
    SurveySpec,
    bundled_spec,
    load_responses,
    load_study_spec,
    split_items,
)
from .synthetic import generate_synthetic_study, simulate_study

__all__ = [
    "Approach",
    "DistributionReport",
    "LikertDistribution",
    "LikertScale",
    "PlsOptions",
    "PlsResult",
    "PromptBundle",
    "Respondent",
    "ResponseMatrix",
    "SurveySpec",
    "bootstrap",
    "build_prompt",
    "bundled_spec",
    "compare_distributions",
    "consistency",
    "estimate_scores",
    "fit",
    "generate_persona",
    "generate_synthetic_study",
    "jensen_shannon",
    "kde_curve",
    "likert_histogram",
    "load_responses",
    "load_study_spec",
    "parse_likert_reply",
    "path_coefficients",
    "simulate_study",
    "split_items",
    "standardize",
    "wasserstein",
]
