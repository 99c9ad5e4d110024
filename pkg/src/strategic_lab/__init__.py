"""Simulation library for decision rules over strategically gaming agents.

Agents best-respond to a published linear scoring rule by spending costly
effort that moves their features; the library models such populations and
implements three decision-maker procedures on top of the publish-and-observe
round protocol: maximizing the population's post-gaming outcomes, minimizing
prediction risk under gaming, and recovering the true outcome coefficients
by steering agents toward informative samples.
"""

__version__ = "0.1.0"

from .errors import (
    InvalidInputError,
    NumericalError,
    ScenarioValidationError,
    StrategicLabError,
    UnsupportedScenarioError,
)
from .model import (
    ActionVector,
    DecisionRule,
    EnvHandle,
    ObjectiveReport,
    RoundBatch,
    ScenarioSpec,
    agent_outcome_exact,
    best_response,
    evaluate_objectives,
    gamed_second_moment,
    make_env,
    param_error,
    risk_exact,
    shifted_second_moment,
)
from .estimators import (
    OlsFit,
    empirical_mean,
    empirical_second_moment,
    min_eigenvalue,
    ols_fit,
)
from .agent_outcomes import (
    Alg1Config,
    Alg1Result,
    agent_outcome_regret,
    best_improvement_direction,
    run_algorithm1,
    run_algorithm1_parallel,
)
from .risk_min import (
    OracleQuery,
    RelaxedRiskOracle,
    RiskDecomposition,
    RiskMinResult,
    ZoOptConfig,
    minimize_risk,
    risk_decomposition,
    ungamed_ols_start,
    weighted_objective_oracle,
)
from .param_recovery import (
    Alg3Config,
    Alg3Diagnostics,
    DesignResult,
    GEstimate,
    design_objective,
    design_omega,
    estimate_g,
    run_algorithm3,
)
from .scenarios import FIXTURES, car_insurance, identity_d3, load_scenario, parse_scenario
from .harness import (
    ExperimentConfig,
    ResultRow,
    run_experiment,
    sweep_tradeoff,
)

__all__ = [
    "__version__",
    # errors
    "StrategicLabError",
    "InvalidInputError",
    "ScenarioValidationError",
    "UnsupportedScenarioError",
    "NumericalError",
    # world model
    "ScenarioSpec",
    "DecisionRule",
    "ActionVector",
    "RoundBatch",
    "ObjectiveReport",
    "EnvHandle",
    "make_env",
    "best_response",
    "gamed_second_moment",
    "shifted_second_moment",
    "agent_outcome_exact",
    "risk_exact",
    "param_error",
    "evaluate_objectives",
    # estimators
    "OlsFit",
    "empirical_mean",
    "empirical_second_moment",
    "ols_fit",
    "min_eigenvalue",
    # outcome maximization
    "Alg1Config",
    "Alg1Result",
    "run_algorithm1",
    "run_algorithm1_parallel",
    "agent_outcome_regret",
    "best_improvement_direction",
    # risk minimization
    "RiskDecomposition",
    "risk_decomposition",
    "OracleQuery",
    "RelaxedRiskOracle",
    "weighted_objective_oracle",
    "ZoOptConfig",
    "RiskMinResult",
    "minimize_risk",
    "ungamed_ols_start",
    # parameter recovery
    "Alg3Config",
    "Alg3Diagnostics",
    "GEstimate",
    "DesignResult",
    "estimate_g",
    "design_objective",
    "design_omega",
    "run_algorithm3",
    # scenarios and harness
    "FIXTURES",
    "car_insurance",
    "identity_d3",
    "load_scenario",
    "parse_scenario",
    "ExperimentConfig",
    "ResultRow",
    "run_experiment",
    "sweep_tradeoff",
]
