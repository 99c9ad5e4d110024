"""Coefficient recovery by steering agents toward informative samples.

Fixed-design least squares converges at a rate set by the smallest
eigenvalue of the sample second moment, so a decision-maker who can make
agents move can buy conditioning: estimate the feature moments under the
zero rule, probe each coordinate rule to learn how agents respond, pick the
rule whose induced shift maximizes the smallest eigenvalue of the expected
post-gaming second moment, then fit on samples gamed under that rule.  The
procedure needs every outcome-relevant feature visible; scenarios with
hidden coordinates are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil

import numpy as np

from .errors import InvalidInputError, NumericalError, UnsupportedScenarioError
from .estimators import OlsFit, empirical_mean, empirical_second_moment, ols_fit
from .model import DecisionRule, EnvHandle, shifted_second_moment

_EIG_CLUSTER_TOL = 1e-9


@dataclass
class Alg3Config:
    """Stage sizes and design-step settings.

    Explicit ``n1``/``n2``/``n3`` override the defaults; otherwise stage
    sizes derive from ``sample_constant`` (``n1 = C d^2 / eps``; ``n2``
    matches ``n1`` unless ``g_error_target`` ties it to the mean-estimator
    bound ``d^2 tr(cov) / n2``; ``n3 = C d / (eps * achieved_lambda_min)``
    using the post-design conditioning).  ``domain_radius`` bounds the rule
    norm in the design search.
    """

    epsilon: float
    n1: int | None = None
    n2: int | None = None
    n3: int | None = None
    domain_radius: float = 1.0
    design_iters: int = 200
    sample_constant: float = 100.0
    g_error_target: float | None = None

    def __post_init__(self):
        if not (np.isfinite(self.epsilon) and self.epsilon > 0):
            raise InvalidInputError("epsilon must be positive")
        for name in ("n1", "n2", "n3"):
            val = getattr(self, name)
            if val is not None and val < 1:
                raise InvalidInputError(f"{name} must be a positive integer")
        if self.domain_radius <= 0:
            raise InvalidInputError("domain_radius must be positive")
        if self.design_iters < 1:
            raise InvalidInputError("design_iters must be positive")
        if self.sample_constant <= 0:
            raise InvalidInputError("sample_constant must be positive")
        if self.g_error_target is not None and self.g_error_target <= 0:
            raise InvalidInputError("g_error_target must be positive")


@dataclass
class GEstimate:
    """Columnwise estimate of the rule-to-shift map.

    Column i is the mean observed feature vector under coordinate rule
    ``e_i`` minus the zero-rule mean estimate.
    """

    g_hat: np.ndarray
    samples_per_column: np.ndarray


@dataclass
class DesignResult:
    """Outcome of the informativeness-maximizing design step.

    ``achieved_lambda_min`` is the smallest eigenvalue of the estimated
    post-gaming second moment at the chosen rule; it never falls below
    ``baseline_lambda_min`` (the zero-rule value) because the zero rule is
    returned whenever no candidate beats it.
    """

    omega_design: DecisionRule
    achieved_lambda_min: float
    baseline_lambda_min: float


@dataclass
class Alg3Diagnostics:
    """Stage-level telemetry for one recovery run."""

    mu_hat: np.ndarray
    sigma_hat: np.ndarray
    g_hat: np.ndarray
    kappa_min_hat: float
    k1_hat: float
    k2_hat: float
    n1: int
    n2: int
    n3: int
    rounds_used: int
    samples_used: int
    design_used: bool


def _require_fully_visible(env: EnvHandle) -> int:
    mask = env.visible_mask
    if not np.all(mask == 1):
        raise UnsupportedScenarioError(
            "parameter recovery requires every feature to be visible"
        )
    return mask.size


def estimate_g(env: EnvHandle, mu_hat: np.ndarray, n2: int) -> GEstimate:
    """Probe each coordinate rule once and read off the induced mean shift."""
    d = _require_fully_visible(env)
    mu_hat = np.asarray(mu_hat, dtype=float)
    if mu_hat.shape != (d,):
        raise InvalidInputError(f"mu_hat must have shape ({d},)")
    if n2 < 1:
        raise InvalidInputError("n2 must be a positive integer")

    g_hat = np.zeros((d, d))
    for i in range(d):
        weights = np.zeros(d)
        weights[i] = 1.0
        batch = env.publish_and_draw(DecisionRule(weights), n2)
        g_hat[:, i] = batch.visible_features.mean(axis=0) - mu_hat
    return GEstimate(g_hat=g_hat, samples_per_column=np.full(d, int(n2)))


def design_objective(
    sigma_hat: np.ndarray, mu_hat: np.ndarray, g_hat: np.ndarray, weights: np.ndarray
) -> float:
    """Smallest eigenvalue of the expected post-gaming second moment."""
    shift = g_hat @ weights
    matrix = shifted_second_moment(sigma_hat, mu_hat, shift)
    return float(np.linalg.eigvalsh(0.5 * (matrix + matrix.T))[0])


def _objective_and_supergradient(
    sigma_hat: np.ndarray, mu_hat: np.ndarray, g_hat: np.ndarray, weights: np.ndarray
) -> tuple[float, np.ndarray]:
    shift = g_hat @ weights
    matrix = shifted_second_moment(sigma_hat, mu_hat, shift)
    vals, vecs = np.linalg.eigh(0.5 * (matrix + matrix.T))
    lam = float(vals[0])
    # Near-multiple smallest eigenvalues: average the per-eigenvector
    # gradients over the (numerical) eigenspace for a deterministic pick.
    cluster = vals <= vals[0] + _EIG_CLUSTER_TOL * max(1.0, abs(vals[0]))
    grads = []
    for v in vecs[:, cluster].T:
        grads.append(2.0 * (float(v @ mu_hat) + float(v @ shift)) * (g_hat.T @ v))
    return lam, np.mean(grads, axis=0)


def design_omega(
    sigma_hat: np.ndarray,
    mu_hat: np.ndarray,
    g_hat: np.ndarray,
    radius: float,
    iters: int,
) -> DesignResult:
    """Pick the rule whose induced shift best conditions the sample moments.

    Maximizes the smallest eigenvalue of the estimated post-gaming second
    moment over the ball of radius ``radius`` by projected supergradient
    ascent from a fixed fan of starts (coordinate directions, the weak
    eigenvector of the baseline moment, and a few seeded random directions).
    The objective is not concave everywhere, so the multi-start keeps the
    ascent from stalling in flat or non-concave patches; the zero rule is
    returned whenever nothing beats the baseline.
    """
    sigma_hat = np.asarray(sigma_hat, dtype=float)
    mu_hat = np.asarray(mu_hat, dtype=float)
    g_hat = np.asarray(g_hat, dtype=float)
    d = mu_hat.shape[0]
    if sigma_hat.shape != (d, d) or g_hat.shape != (d, d):
        raise InvalidInputError("sigma_hat and g_hat must be (d, d) with d = len(mu_hat)")
    for name, arr in (("sigma_hat", sigma_hat), ("mu_hat", mu_hat), ("g_hat", g_hat)):
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError(f"{name} must have finite entries")
    if radius <= 0:
        raise InvalidInputError("radius must be positive")

    baseline = design_objective(sigma_hat, mu_hat, g_hat, np.zeros(d))
    if not np.isfinite(baseline):
        raise NumericalError("design objective is not finite at the zero rule")

    starts = [np.zeros(d)]
    for i in range(d):
        e = np.zeros(d)
        e[i] = radius
        starts.append(e)
        starts.append(-e)
    weak = np.linalg.eigh(0.5 * (sigma_hat + sigma_hat.T))[1][:, 0]
    starts.append(radius * weak)
    starts.append(-radius * weak)
    rng = np.random.default_rng(0x_DE516)
    for _ in range(4):
        u = rng.standard_normal(d)
        starts.append(radius * u / np.linalg.norm(u))

    best_w = np.zeros(d)
    best_val = baseline
    any_finite = np.isfinite(baseline)
    for w0 in starts:
        w = w0.copy()
        for t in range(1, iters + 1):
            val, grad = _objective_and_supergradient(sigma_hat, mu_hat, g_hat, w)
            if np.isfinite(val):
                any_finite = True
                if val > best_val:
                    best_val, best_w = val, w.copy()
            step = 0.5 * radius / np.sqrt(t)
            gnorm = float(np.linalg.norm(grad))
            if gnorm > 0:
                w = w + step * grad / gnorm
            norm = float(np.linalg.norm(w))
            if norm > radius:
                w *= radius / norm
        val = design_objective(sigma_hat, mu_hat, g_hat, w)
        if np.isfinite(val) and val > best_val:
            best_val, best_w = val, w.copy()

    if not any_finite:
        raise NumericalError("design search found no finite objective value")
    if best_val <= baseline:
        return DesignResult(
            omega_design=DecisionRule(np.zeros(d)),
            achieved_lambda_min=baseline,
            baseline_lambda_min=baseline,
        )
    return DesignResult(
        omega_design=DecisionRule(best_w),
        achieved_lambda_min=best_val,
        baseline_lambda_min=baseline,
    )


def run_algorithm3(
    env: EnvHandle, cfg: Alg3Config, use_design: bool = True
) -> tuple[OlsFit, DesignResult, Alg3Diagnostics]:
    """Full recovery pipeline: moments, shift map, design rule, final fit.

    Uses ``d + 2`` environment rounds: one zero-rule round for the moment
    estimates, one per coordinate for the shift map, and one under the
    design rule for the least squares fit.  With ``use_design`` off, the
    final round samples under the zero rule instead (ablation mode).
    """
    d = _require_fully_visible(env)
    rounds_before = env.round_counter

    n1 = cfg.n1 if cfg.n1 is not None else ceil(cfg.sample_constant * d * d / cfg.epsilon)
    batch = env.publish_and_draw(DecisionRule.zeros(d), n1)
    mu_hat = empirical_mean(batch.visible_features)
    sigma_hat = empirical_second_moment(batch.visible_features)
    cov_hat = sigma_hat - np.outer(mu_hat, mu_hat)
    kappa_hat = float(max(np.linalg.eigvalsh(sigma_hat)[0], 0.0))
    k2_hat = float(np.linalg.eigvalsh(sigma_hat)[-1] ** 2)

    if cfg.n2 is not None:
        n2 = cfg.n2
    elif cfg.g_error_target is not None:
        n2 = ceil(d * d * max(np.trace(cov_hat), 0.0) / cfg.g_error_target)
    else:
        n2 = n1
    g_est = estimate_g(env, mu_hat, n2)
    k1_hat = float(np.linalg.eigvalsh(g_est.g_hat.T @ g_est.g_hat)[-1])

    if use_design:
        design = design_omega(
            sigma_hat, mu_hat, g_est.g_hat, cfg.domain_radius, cfg.design_iters
        )
    else:
        baseline = design_objective(sigma_hat, mu_hat, g_est.g_hat, np.zeros(d))
        design = DesignResult(
            omega_design=DecisionRule(np.zeros(d)),
            achieved_lambda_min=baseline,
            baseline_lambda_min=baseline,
        )

    if cfg.n3 is not None:
        n3 = cfg.n3
    else:
        if design.achieved_lambda_min <= 0:
            raise NumericalError(
                "post-design second moment is rank deficient; recovery is "
                "hopeless at any sample size unless n3 is forced explicitly"
            )
        n3 = ceil(cfg.sample_constant * d / (cfg.epsilon * design.achieved_lambda_min))
    final = env.publish_and_draw(design.omega_design, n3)
    fit = ols_fit(final.visible_features, final.outcomes)

    diagnostics = Alg3Diagnostics(
        mu_hat=mu_hat,
        sigma_hat=sigma_hat,
        g_hat=g_est.g_hat,
        kappa_min_hat=kappa_hat,
        k1_hat=k1_hat,
        k2_hat=k2_hat,
        n1=int(n1),
        n2=int(n2),
        n3=int(n3),
        rounds_used=env.round_counter - rounds_before,
        samples_used=int(n1 + d * n2 + n3),
        design_used=bool(use_design),
    )
    return fit, design, diagnostics
