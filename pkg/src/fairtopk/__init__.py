"""Affirmative-action top-k selection policies: design, calibration, search."""
from .model import (
    Candidate,
    EmpiricalDist,
    Population,
    PopulationError,
    Schema,
    empirical_cdf,
    group_score_dist,
    inverse_cdf,
    load_population,
    write_population,
)
from .policies import (
    Bonus,
    Coefficients,
    Quota,
    Selection,
    admit,
    calibrate_bonus_binary_search,
    calibrate_topk,
    dumps_policy,
    loads_policy,
    selection_score,
)
from .metrics import EvalReport, dmd, evaluate, objective, uos
from .fit import GeneratorConfig, OutcomeModel, fit_outcome_model, generate_population
from .search import (
    BonusSearchConfig,
    GreedyConfig,
    RotationPlan,
    b_dmd,
    bonus_to_quota,
    min_dmd_bonus,
    quota_to_bonus,
    search_bonus,
    search_bonus_multi,
    search_coefficients,
)
from .baselines import FairRankingConfig, compare_selections, fair_rerank, median_repair

__version__ = "0.1.0"
