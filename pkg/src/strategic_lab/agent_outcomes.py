"""Outcome-maximizing decision rule search by orthonormal basis probes.

The learner publishes the zero rule once to anchor the baseline outcome
level, then one orthonormal basis vector of the visible subspace per round.
The shift in mean outcome under basis rule ``w_i`` is a linear measurement of
the direction in which gaming raises outcomes; stacking the measurements and
normalizing yields the published estimate.  The sequence of published rules
is a function of the configuration alone (the procedure is non-adaptive), so
probe rounds may run on cloned environment handles in parallel.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import ceil

import numpy as np

from .errors import InvalidInputError
from .model import DecisionRule, EnvHandle, ScenarioSpec

_ORTHO_TOL = 1e-10


@dataclass
class Alg1Config:
    """Probe configuration.

    ``lambda_max`` bounds the top eigenvalue of the feature second moment
    (used only for the default sample size); ``epsilon`` is the target
    outcome suboptimality.  The default per-round sample size is
    ``ceil(sample_constant * lambda_max * d / epsilon)``; pass
    ``samples_per_round`` to override it for desk-scale runs.  ``basis``
    (rows = probe rules) defaults to the visible standard basis vectors.
    """

    lambda_max: float
    epsilon: float
    samples_per_round: int | None = None
    basis: np.ndarray | None = None
    sample_constant: float = 100.0

    def __post_init__(self):
        if not (np.isfinite(self.epsilon) and self.epsilon > 0):
            raise InvalidInputError("epsilon must be positive")
        if not (np.isfinite(self.lambda_max) and self.lambda_max > 0):
            raise InvalidInputError("lambda_max must be positive")
        if self.sample_constant <= 0:
            raise InvalidInputError("sample_constant must be positive")
        if self.samples_per_round is not None and self.samples_per_round < 1:
            raise InvalidInputError("samples_per_round must be a positive integer")


@dataclass
class Alg1Result:
    """Estimate produced by the basis-probe procedure.

    ``nu_hat`` is the reconstructed direction of maximal outcome improvement
    (length ``dim_total``, supported on visible coordinates); ``omega_hat``
    is its normalization, or the zero rule with ``no_improvement`` set when
    the reconstruction is indistinguishable from measurement noise.
    """

    omega_hat: DecisionRule
    nu_hat: np.ndarray
    mu_hat: float
    rounds_used: int
    samples_per_round: int
    round_means: np.ndarray
    no_improvement: bool
    published: list[np.ndarray] = field(default_factory=list)


def _visible_standard_basis(mask: np.ndarray) -> np.ndarray:
    idx = np.flatnonzero(mask)
    basis = np.zeros((idx.size, mask.size))
    basis[np.arange(idx.size), idx] = 1.0
    return basis


def _check_basis(basis: np.ndarray, mask: np.ndarray) -> np.ndarray:
    basis = np.asarray(basis, dtype=float)
    d = int(mask.sum())
    if basis.shape != (d, mask.size):
        raise InvalidInputError(
            f"basis must be ({d}, {mask.size}) (one row per visible dimension)"
        )
    if np.any(basis[:, mask == 0] != 0.0):
        raise InvalidInputError("basis vectors must be supported on visible coordinates")
    gram = basis @ basis.T
    if np.max(np.abs(gram - np.eye(d))) > _ORTHO_TOL:
        raise InvalidInputError("basis vectors must be orthonormal")
    return basis


def run_algorithm1(env: EnvHandle, cfg: Alg1Config) -> Alg1Result:
    """Run the d+1 probe rounds and return the outcome-maximizing estimate.

    Round 0 publishes the zero rule and takes the mean outcome as the
    baseline; round i publishes basis vector i and records the mean outcome
    shift.  The estimate is declared uninformative (zero rule,
    ``no_improvement``) when its length is within twice its own standard
    error, which covers worlds where gaming cannot move outcomes at all.
    """
    mask = env.visible_mask
    d = int(mask.sum())
    basis = (
        _visible_standard_basis(mask)
        if cfg.basis is None
        else _check_basis(cfg.basis, mask)
    )
    n = cfg.samples_per_round
    if n is None:
        n = ceil(cfg.sample_constant * cfg.lambda_max * d / cfg.epsilon)

    published: list[np.ndarray] = []
    zero_rule = DecisionRule.zeros(mask.size)
    published.append(np.array(zero_rule.weights))
    batch = env.publish_and_draw(zero_rule, n)
    mu_hat = float(batch.outcomes.mean())
    mu_var = float(batch.outcomes.var(ddof=1)) / n if n > 1 else 0.0

    round_means = [mu_hat]
    coeffs = np.zeros(d)
    coeff_vars = np.zeros(d)
    for i in range(d):
        rule = DecisionRule(basis[i])
        published.append(np.array(rule.weights))
        batch = env.publish_and_draw(rule, n)
        mean_y = float(batch.outcomes.mean())
        round_means.append(mean_y)
        coeffs[i] = mean_y - mu_hat
        coeff_vars[i] = (float(batch.outcomes.var(ddof=1)) / n if n > 1 else 0.0) + mu_var

    nu_hat = coeffs @ basis
    norm = float(np.linalg.norm(nu_hat))
    stderr = float(np.sqrt(coeff_vars.sum()))
    no_improvement = norm <= 2.0 * stderr
    omega = DecisionRule.zeros(mask.size) if no_improvement else DecisionRule(nu_hat / norm)
    return Alg1Result(
        omega_hat=omega,
        nu_hat=nu_hat,
        mu_hat=mu_hat,
        rounds_used=d + 1,
        samples_per_round=n,
        round_means=np.array(round_means),
        no_improvement=no_improvement,
        published=published,
    )


def run_algorithm1_parallel(env: EnvHandle, cfg: Alg1Config) -> Alg1Result:
    """Same procedure with every probe round on its own cloned handle.

    Results merge deterministically by basis index, so output depends only
    on (env seed, cfg) and not on scheduling.
    """
    mask = env.visible_mask
    d = int(mask.sum())
    basis = (
        _visible_standard_basis(mask)
        if cfg.basis is None
        else _check_basis(cfg.basis, mask)
    )
    n = cfg.samples_per_round
    if n is None:
        n = ceil(cfg.sample_constant * cfg.lambda_max * d / cfg.epsilon)

    rules = [DecisionRule.zeros(mask.size)] + [DecisionRule(basis[i]) for i in range(d)]
    batches = [env.clone(i).publish_and_draw(rule, n) for i, rule in enumerate(rules)]

    means = np.array([float(b.outcomes.mean()) for b in batches])
    varis = np.array(
        [float(b.outcomes.var(ddof=1)) / n if n > 1 else 0.0 for b in batches]
    )
    mu_hat = means[0]
    coeffs = means[1:] - mu_hat
    coeff_vars = varis[1:] + varis[0]

    nu_hat = coeffs @ basis
    norm = float(np.linalg.norm(nu_hat))
    no_improvement = norm <= 2.0 * float(np.sqrt(coeff_vars.sum()))
    omega = DecisionRule.zeros(mask.size) if no_improvement else DecisionRule(nu_hat / norm)
    return Alg1Result(
        omega_hat=omega,
        nu_hat=nu_hat,
        mu_hat=mu_hat,
        rounds_used=d + 1,
        samples_per_round=n,
        round_means=means,
        no_improvement=no_improvement,
        published=[np.array(r.weights) for r in rules],
    )


def best_improvement_direction(scenario: ScenarioSpec) -> np.ndarray:
    """Unit rule maximizing expected outcome lift; zero if gaming is inert."""
    nu = scenario.gaming_matrix().T @ scenario.true_params
    norm = float(np.linalg.norm(nu))
    if norm == 0.0:
        return np.zeros(scenario.dim_total)
    return nu / norm


def agent_outcome_regret(result: Alg1Result, scenario: ScenarioSpec) -> float:
    """Outcome gap to the best unit rule, per gaming agent (oracle side).

    Equals ``||G^T w*|| - w*^T G w_hat``, which is nonnegative for any unit
    or zero ``w_hat``.
    """
    nu = scenario.gaming_matrix().T @ scenario.true_params
    return float(np.linalg.norm(nu) - nu @ result.omega_hat.weights)
