"""Prediction-risk minimization through a piecewise-relaxed sample oracle.

The squared-error risk under gaming is a quartic in the rule with a
non-convex pocket: the set of rules that exactly predict the outcome effect
of the gaming they induce forms an ellipse, inside of which (rule
underestimates the effect) the gaming-error term loses convexity.  The
relaxed oracle therefore measures the true gamed risk only where the rule
overestimates on average, and substitutes the no-gaming risk (zero-rule
samples) elsewhere; the two pieces agree on the ellipse, so the relaxation
is continuous and convex on the overestimating side.  A two-point
derivative-free descent over that oracle recovers the risk minimizer when
started from an overestimating rule, e.g. the no-gaming least squares fit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .estimators import ols_fit
from .model import DecisionRule, EnvHandle, ScenarioSpec

GAMED_BRANCH = "gamed"
UNGAMED_BRANCH = "ungamed"


@dataclass(frozen=True)
class RiskDecomposition:
    """Exact split of the prediction risk into interpretable pieces.

    ``static_risk`` is the squared error carried by natural feature
    variation (centered second moment); ``gaming_risk`` is the squared error
    in predicting the outcome impact of the induced feature shift;
    ``offset_c`` absorbs the mean terms and the outcome noise so that
    ``total`` equals the exact risk.
    """

    static_risk: float
    gaming_risk: float
    offset_c: float
    total: float


def risk_decomposition(rule: DecisionRule, scenario: ScenarioSpec) -> RiskDecomposition:
    """Decompose the exact risk of ``rule`` around centered features.

    The textbook split assumes the feature shift is uncorrelated with the
    features; with a deterministic best response that only holds after
    centering, so the variation term uses the centered second moment and the
    mean interaction moves into the offset.
    """
    w = rule.weights
    if w.shape != (scenario.dim_total,):
        raise InvalidInputError("rule dimension does not match scenario")
    q = scenario.visible_mask * w - scenario.true_params
    shift_gain = float(q @ (scenario.gaming_matrix() @ w))
    p = scenario.gaming_fraction
    mean_gain = float(q @ scenario.mean)

    static = max(float(q @ scenario.centered_second_moment() @ q), 0.0)
    gaming = p * shift_gain**2
    offset = mean_gain**2 + 2.0 * p * mean_gain * shift_gain + scenario.noise_sigma**2
    return RiskDecomposition(
        static_risk=static,
        gaming_risk=gaming,
        offset_c=offset,
        total=static + gaming + offset,
    )


@dataclass(frozen=True)
class OracleQuery:
    """One relaxed-risk measurement.

    ``predicted_mean``/``outcome_mean`` are the in-sample means whose
    comparison chose the branch; ``value`` is a mean of squared errors (over
    a fresh batch), so it is nonnegative, with ``value_stderr`` its standard
    error.
    """

    rule: DecisionRule
    n: int
    branch_taken: str
    value: float
    predicted_mean: float
    outcome_mean: float
    value_stderr: float


class RelaxedRiskOracle:
    """Sample oracle for the piecewise-relaxed prediction risk.

    Each query draws a decision batch under the queried rule; if the rule
    overestimates outcomes on that batch, it reports squared error on a
    second fresh batch under the same rule, otherwise on zero-rule samples.
    When ``reuse_zero_batch`` is set, zero-rule samples are drawn in bulk up
    front (sized by ``budget_hint``) and consumed in disjoint slices, which
    spares one environment round per substituted query.
    """

    def __init__(
        self,
        env: EnvHandle,
        n: int,
        reuse_zero_batch: bool = True,
        budget_hint: int | None = None,
    ):
        if n < 2:
            raise InvalidInputError("oracle batch size n must be at least 2")
        self._env = env
        self._n = int(n)
        self._reuse = bool(reuse_zero_batch)
        chunk = budget_hint if budget_hint is not None else 32
        self._chunk_queries = max(1, min(int(chunk), max(1, 4_000_000 // self._n)))
        self._pool_features: np.ndarray | None = None
        self._pool_outcomes: np.ndarray | None = None
        self._pool_pos = 0
        self.queries_used = 0

    def _zero_rule_samples(self) -> tuple[np.ndarray, np.ndarray]:
        dim = self._env.visible_mask.size
        if not self._reuse:
            batch = self._env.publish_and_draw(DecisionRule.zeros(dim), self._n)
            return batch.visible_features, batch.outcomes
        if (
            self._pool_features is None
            or self._pool_pos + self._n > self._pool_features.shape[0]
        ):
            batch = self._env.publish_and_draw(
                DecisionRule.zeros(dim), self._n * self._chunk_queries
            )
            self._pool_features = batch.visible_features
            self._pool_outcomes = batch.outcomes
            self._pool_pos = 0
        sl = slice(self._pool_pos, self._pool_pos + self._n)
        self._pool_pos += self._n
        return self._pool_features[sl], self._pool_outcomes[sl]

    def query(self, rule: DecisionRule) -> OracleQuery:
        batch = self._env.publish_and_draw(rule, self._n)
        predicted = float(batch.decisions.mean())
        realized = float(batch.outcomes.mean())

        if predicted > realized:
            fresh = self._env.publish_and_draw(rule, self._n)
            errors = (fresh.decisions - fresh.outcomes) ** 2
            branch = GAMED_BRANCH
        else:
            features, outcomes = self._zero_rule_samples()
            errors = (features @ rule.weights - outcomes) ** 2
            branch = UNGAMED_BRANCH

        self.queries_used += 1
        return OracleQuery(
            rule=rule,
            n=self._n,
            branch_taken=branch,
            value=float(errors.mean()),
            predicted_mean=predicted,
            outcome_mean=realized,
            value_stderr=float(errors.std(ddof=1)) / np.sqrt(errors.size),
        )


def weighted_objective_oracle(
    env: EnvHandle, rule: DecisionRule, n: int, alpha: float
) -> float:
    """Relaxed risk minus ``alpha`` times the mean outcome under the rule.

    The outcome term is the decision-batch mean, so it estimates the
    population outcome under the queried rule in both branches; being linear
    in the rule it preserves the relaxation's convexity.
    """
    if alpha < 0:
        raise InvalidInputError("alpha must be nonnegative")
    query = RelaxedRiskOracle(env, n, reuse_zero_batch=False).query(rule)
    return query.value - alpha * query.outcome_mean


@dataclass
class ZoOptConfig:
    """Derivative-free optimizer settings.

    The optimizer spends ``budget_queries`` oracle calls; each iteration
    uses two symmetric probes at distance ``smoothing_radius`` for a
    two-point gradient estimate plus one evaluation of the new iterate.
    Steps decay as ``step_size / t**step_decay`` and iterates are projected
    onto the ball of radius ``domain_radius``.  ``start`` defaults to the
    no-gaming least squares fit on ``init_samples`` zero-rule samples.
    ``alpha`` adds the outcome-maximization term of the weighted objective.
    """

    budget_queries: int
    samples_per_query: int
    step_size: float = 0.1
    step_decay: float = 0.5
    smoothing_radius: float = 0.05
    domain_radius: float = 1.0
    start: DecisionRule | None = None
    alpha: float = 0.0
    reuse_zero_batch: bool = True
    init_samples: int | None = None

    def __post_init__(self):
        if self.budget_queries < 1:
            raise InvalidInputError("budget_queries must be at least 1")
        if self.samples_per_query < 2:
            raise InvalidInputError("samples_per_query must be at least 2")
        for name in ("step_size", "step_decay", "smoothing_radius", "domain_radius"):
            if getattr(self, name) <= 0:
                raise InvalidInputError(f"{name} must be positive")
        if self.alpha < 0:
            raise InvalidInputError("alpha must be nonnegative")
        if self.init_samples is not None and self.init_samples < 2:
            raise InvalidInputError("init_samples must be at least 2")
        if self.start is not None and self.start.norm > self.domain_radius * (1 + 1e-9):
            raise InvalidInputError("start must lie inside the domain ball")


@dataclass
class RiskMinResult:
    """Best rule found plus the full query trace."""

    rule: DecisionRule
    best_value: float
    start_rule: DecisionRule
    overestimation_warning: bool
    queries_used: int
    trace: list[OracleQuery] = field(default_factory=list)


def _project(w: np.ndarray, radius: float) -> np.ndarray:
    norm = float(np.linalg.norm(w))
    if norm > radius:
        return w * (radius / norm)
    return w


def ungamed_ols_start(env: EnvHandle, n: int, radius: float) -> DecisionRule:
    """No-gaming least squares fit, projected into the optimization ball.

    Fits the zero-rule batch; hidden feature columns are identically zero
    there, so the minimum-norm solve leaves their coefficients at zero.
    """
    mask = env.visible_mask
    batch = env.publish_and_draw(DecisionRule.zeros(mask.size), n)
    fit = ols_fit(batch.visible_features, batch.outcomes)
    w0 = fit.coefficients * mask
    return DecisionRule(_project(w0, radius))


def minimize_risk(
    env: EnvHandle, cfg: ZoOptConfig, rng: np.random.Generator | None = None
) -> RiskMinResult:
    """Two-point derivative-free descent over the relaxed risk oracle.

    Tracks the best rule by its center-point oracle evaluation (the starting
    rule included, so the result never beats itself below the start).  If
    the first query lands on the substituted (no-gaming) branch, the start
    violates the overestimation condition the relaxation needs, which is
    reported via ``overestimation_warning`` rather than as an error.
    """
    if rng is None:
        rng = env.spawn_rng("zo-search")
    mask = env.visible_mask
    d_vis = int(mask.sum())

    start = cfg.start
    if start is None:
        start = ungamed_ols_start(
            env, cfg.init_samples or cfg.samples_per_query, cfg.domain_radius
        )

    oracle = RelaxedRiskOracle(
        env,
        cfg.samples_per_query,
        reuse_zero_batch=cfg.reuse_zero_batch,
        budget_hint=cfg.budget_queries,
    )
    trace: list[OracleQuery] = []

    def evaluate(weights: np.ndarray) -> float:
        query = oracle.query(DecisionRule(weights))
        trace.append(query)
        return query.value - cfg.alpha * query.outcome_mean

    w = np.array(start.weights)
    value = evaluate(w)
    warning = trace[0].branch_taken == UNGAMED_BRANCH
    best_w, best_value = w.copy(), value

    t = 0
    while oracle.queries_used + 3 <= cfg.budget_queries:
        t += 1
        direction = rng.standard_normal(mask.size) * mask
        norm = float(np.linalg.norm(direction))
        if norm == 0.0:
            continue
        direction /= norm
        delta = cfg.smoothing_radius
        f_plus = evaluate(_project(w + delta * direction, cfg.domain_radius))
        f_minus = evaluate(_project(w - delta * direction, cfg.domain_radius))
        grad = (d_vis * (f_plus - f_minus) / (2.0 * delta)) * direction
        step = cfg.step_size / t**cfg.step_decay
        w = _project(w - step * grad, cfg.domain_radius)
        value = evaluate(w)
        if value < best_value:
            best_value, best_w = value, w.copy()

    return RiskMinResult(
        rule=DecisionRule(best_w),
        best_value=best_value,
        start_rule=start,
        overestimation_warning=warning,
        queries_used=oracle.queries_used,
        trace=trace,
    )
