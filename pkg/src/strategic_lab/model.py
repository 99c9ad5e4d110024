"""Ground-truth world model for decision rules over gaming agent populations.

An agent with features ``x`` facing a published linear rule ``w`` picks the
effort vector that maximizes its received decision minus a quadratic effort
cost, which shifts its features to ``x + M a``.  This module holds the world
description (:class:`ScenarioSpec`), the sealed simulator that decision-maker
algorithms interact with (:class:`EnvHandle`), and exact closed-form
evaluators of the three objectives (population outcome, prediction risk,
coefficient recovery error).  The exact evaluators read the ground truth and
are meant for harness/test use only; algorithm code must go through
:meth:`EnvHandle.publish_and_draw`.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import InvalidInputError, ScenarioValidationError

GAUSSIAN = "gaussian"
POINT_MASS = "point_mass"
FINITE_MIXTURE = "finite_mixture"
DIST_KINDS = (GAUSSIAN, POINT_MASS, FINITE_MIXTURE)

_PSD_TOL = 1e-8
_MOMENT_TOL = 1e-8


def _as_readonly(a, dtype=float) -> np.ndarray:
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


def _require_finite(name: str, a: np.ndarray) -> None:
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name} must have finite entries")


@dataclass(frozen=True)
class ScenarioSpec:
    """Complete ground truth of one world.

    Fields mirror the generative model: agents draw features from a
    distribution with mean ``mean`` and (uncentered) second moment
    ``second_moment``; a ``gaming_fraction`` of them respond to the published
    rule by moving ``effort_matrix @ a`` in feature space; outcomes are
    ``true_params . x_g`` plus centered gaussian noise with standard
    deviation ``noise_sigma``.  ``visible_mask`` marks the coordinates the
    decision-maker observes.
    """

    dim_total: int
    visible_mask: np.ndarray
    mean: np.ndarray
    second_moment: np.ndarray
    dist_kind: str
    effort_matrix: np.ndarray
    true_params: np.ndarray
    noise_sigma: float
    gaming_fraction: float
    homogeneous_coord: int | None = None
    mixture_weights: np.ndarray | None = None
    mixture_points: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "visible_mask", _as_readonly(self.visible_mask))
        object.__setattr__(self, "mean", _as_readonly(self.mean))
        object.__setattr__(self, "second_moment", _as_readonly(self.second_moment))
        object.__setattr__(self, "effort_matrix", _as_readonly(self.effort_matrix))
        object.__setattr__(self, "true_params", _as_readonly(self.true_params))
        if self.mixture_weights is not None:
            object.__setattr__(self, "mixture_weights", _as_readonly(self.mixture_weights))
        if self.mixture_points is not None:
            object.__setattr__(self, "mixture_points", _as_readonly(self.mixture_points))
        self._validate()

    def _validate(self) -> None:
        d = self.dim_total
        if d < 1:
            raise ScenarioValidationError("dim_total must be a positive integer")
        for name, arr, shape in (
            ("visible_mask", self.visible_mask, (d,)),
            ("mean", self.mean, (d,)),
            ("second_moment", self.second_moment, (d, d)),
            ("true_params", self.true_params, (d,)),
        ):
            if arr.shape != shape:
                raise ScenarioValidationError(
                    f"{name} has shape {arr.shape}, expected {shape}"
                )
            _require_finite(name, arr)
        if self.effort_matrix.ndim != 2 or self.effort_matrix.shape[0] != d:
            raise ScenarioValidationError(
                f"effort_matrix has shape {self.effort_matrix.shape}, expected ({d}, k)"
            )
        _require_finite("effort_matrix", self.effort_matrix)

        mask = self.visible_mask
        if not np.all((mask == 0) | (mask == 1)):
            raise ScenarioValidationError("visible_mask entries must be 0 or 1")
        if int(mask.sum()) < 1:
            raise ScenarioValidationError("visible_mask must select at least one coordinate")

        if not (0.0 <= self.gaming_fraction <= 1.0):
            raise ScenarioValidationError("gaming_fraction must lie in [0, 1]")
        if not (np.isfinite(self.noise_sigma) and self.noise_sigma >= 0.0):
            raise ScenarioValidationError("noise_sigma must be a nonnegative real")

        sig = self.second_moment
        if np.max(np.abs(sig - sig.T)) > _PSD_TOL:
            raise ScenarioValidationError("second_moment must be symmetric")
        if np.linalg.eigvalsh(0.5 * (sig + sig.T)).min() < -_PSD_TOL:
            raise ScenarioValidationError("second_moment must be positive semidefinite")

        if self.dist_kind not in DIST_KINDS:
            raise ScenarioValidationError(
                f"dist_kind must be one of {DIST_KINDS}, got {self.dist_kind!r}"
            )
        if self.dist_kind == GAUSSIAN:
            cov = self.centered_second_moment()
            if np.linalg.eigvalsh(0.5 * (cov + cov.T)).min() < -_PSD_TOL:
                raise ScenarioValidationError(
                    "second_moment minus the mean outer product must be positive "
                    "semidefinite for a gaussian feature distribution"
                )
        if self.dist_kind == POINT_MASS:
            if np.max(np.abs(sig - np.outer(self.mean, self.mean))) > _MOMENT_TOL:
                raise ScenarioValidationError(
                    "point_mass requires second_moment == mean outer product"
                )
        if self.dist_kind == FINITE_MIXTURE:
            if self.mixture_weights is None or self.mixture_points is None:
                raise ScenarioValidationError(
                    "finite_mixture requires mixture_weights and mixture_points"
                )
            w, pts = self.mixture_weights, self.mixture_points
            if w.ndim != 1 or pts.ndim != 2 or pts.shape != (w.shape[0], d):
                raise ScenarioValidationError(
                    "mixture_points must be (m, dim_total) with matching mixture_weights"
                )
            if np.any(w < 0) or abs(w.sum() - 1.0) > _MOMENT_TOL:
                raise ScenarioValidationError(
                    "mixture_weights must be nonnegative and sum to 1"
                )
            if np.max(np.abs(w @ pts - self.mean)) > _MOMENT_TOL:
                raise ScenarioValidationError(
                    "mixture component mean does not match the declared mean"
                )
            if np.max(np.abs((pts.T * w) @ pts - sig)) > _MOMENT_TOL:
                raise ScenarioValidationError(
                    "mixture component second moment does not match second_moment"
                )
        elif self.mixture_weights is not None or self.mixture_points is not None:
            raise ScenarioValidationError(
                "mixture fields are only valid with dist_kind = finite_mixture"
            )

        h = self.homogeneous_coord
        if h is not None:
            if not (0 <= h < d):
                raise ScenarioValidationError("homogeneous_coord out of range")
            if mask[h] != 1:
                raise ScenarioValidationError("homogeneous coordinate must be visible")
            if np.any(self.effort_matrix[h, :] != 0.0):
                raise ScenarioValidationError(
                    "homogeneous coordinate must be unperturbable (zero effort row)"
                )
            if abs(self.mean[h] - 1.0) > _MOMENT_TOL:
                raise ScenarioValidationError("homogeneous coordinate must have mean 1")
            if np.max(np.abs(sig[h, :] - self.mean)) > _MOMENT_TOL:
                raise ScenarioValidationError(
                    "second_moment row at the homogeneous coordinate must equal the mean"
                )

    @property
    def visible_dim(self) -> int:
        return int(self.visible_mask.sum())

    @property
    def action_dim(self) -> int:
        return self.effort_matrix.shape[1]

    def gaming_matrix(self) -> np.ndarray:
        """Map from a published rule to the feature shift it incentivizes."""
        m = self.effort_matrix
        return (m @ m.T) * self.visible_mask[np.newaxis, :]

    def centered_second_moment(self) -> np.ndarray:
        return self.second_moment - np.outer(self.mean, self.mean)


@dataclass(frozen=True)
class DecisionRule:
    """Published linear scoring vector, supported on visible coordinates."""

    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "weights", _as_readonly(self.weights))
        if self.weights.ndim != 1:
            raise InvalidInputError("rule weights must be a 1-d vector")
        _require_finite("rule weights", self.weights)

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.weights))

    @staticmethod
    def zeros(dim: int) -> "DecisionRule":
        return DecisionRule(np.zeros(dim))


@dataclass(frozen=True)
class ActionVector:
    """Effort vector an agent spends in action space."""

    effort: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "effort", _as_readonly(self.effort))
        _require_finite("effort", self.effort)

    def cost(self) -> float:
        return 0.5 * float(self.effort @ self.effort)


@dataclass(frozen=True)
class RoundBatch:
    """Decision-maker's view of one round.

    ``visible_features`` stores post-gaming features with hidden coordinates
    zeroed, so its rows live in the ambient feature space but reveal nothing
    about hidden values.
    """

    visible_features: np.ndarray
    decisions: np.ndarray
    outcomes: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "visible_features", _as_readonly(self.visible_features))
        object.__setattr__(self, "decisions", _as_readonly(self.decisions))
        object.__setattr__(self, "outcomes", _as_readonly(self.outcomes))
        n = self.visible_features.shape[0]
        if self.decisions.shape != (n,) or self.outcomes.shape != (n,):
            raise InvalidInputError("batch fields must share the same number of rows")

    @property
    def n(self) -> int:
        return self.visible_features.shape[0]


@dataclass(frozen=True)
class ObjectiveReport:
    """Exact objective values for one (rule, scenario) pair; oracle use only."""

    agent_outcome: float
    prediction_risk: float
    param_error: float


def _check_rule(rule: DecisionRule, scenario: ScenarioSpec) -> np.ndarray:
    w = rule.weights
    if w.shape != (scenario.dim_total,):
        raise InvalidInputError(
            f"rule has dimension {w.shape[0]}, scenario has {scenario.dim_total}"
        )
    if np.any(w[scenario.visible_mask == 0] != 0.0):
        raise InvalidInputError("rule must be zero on hidden coordinates")
    return w


def best_response(rule: DecisionRule, scenario: ScenarioSpec) -> ActionVector:
    """Utility-maximizing effort against a published rule.

    With quadratic effort cost the argmax of ``w . V(x + M a) - ||a||^2 / 2``
    is ``M^T V w`` for every agent, independent of its features.
    """
    w = _check_rule(rule, scenario)
    vw = scenario.visible_mask * w
    return ActionVector(scenario.effort_matrix.T @ vw)


def shifted_second_moment(
    second_moment: np.ndarray, mean: np.ndarray, shift: np.ndarray
) -> np.ndarray:
    """Second moment of ``x + shift`` given the moments of ``x``."""
    return (
        second_moment
        + np.outer(mean, shift)
        + np.outer(shift, mean)
        + np.outer(shift, shift)
    )


def gamed_second_moment(rule: DecisionRule, scenario: ScenarioSpec) -> np.ndarray:
    """Exact second moment of gamed features ``x + G w`` (everyone gaming)."""
    w = _check_rule(rule, scenario)
    shift = scenario.gaming_matrix() @ w
    return shifted_second_moment(scenario.second_moment, scenario.mean, shift)


def agent_outcome_exact(rule: DecisionRule, scenario: ScenarioSpec) -> float:
    """Exact expected post-gaming outcome over the whole population."""
    w = _check_rule(rule, scenario)
    ws = scenario.true_params
    base = float(ws @ scenario.mean)
    lift = float(ws @ (scenario.gaming_matrix() @ w))
    return base + scenario.gaming_fraction * lift


def risk_exact(rule: DecisionRule, scenario: ScenarioSpec) -> float:
    """Exact expected squared error of decisions against realized outcomes.

    A ``gaming_fraction`` share of agents are scored post-gaming, the rest on
    their original features; outcome noise enters every realized outcome, so
    the noise variance is added once.
    """
    w = _check_rule(rule, scenario)
    q = scenario.visible_mask * w - scenario.true_params
    shift_gain = float(q @ (scenario.gaming_matrix() @ w))
    static = float(q @ scenario.second_moment @ q)
    p = scenario.gaming_fraction
    cross = float(q @ scenario.mean) * shift_gain
    return static + p * (2.0 * cross + shift_gain**2) + scenario.noise_sigma**2


def param_error(rule: DecisionRule, scenario: ScenarioSpec) -> float:
    """Distance from the rule to the true coefficients on visible coordinates."""
    w = _check_rule(rule, scenario)
    diff = scenario.visible_mask * (w - scenario.true_params)
    return float(np.linalg.norm(diff))


def evaluate_objectives(rule: DecisionRule, scenario: ScenarioSpec) -> ObjectiveReport:
    return ObjectiveReport(
        agent_outcome=agent_outcome_exact(rule, scenario),
        prediction_risk=risk_exact(rule, scenario),
        param_error=param_error(rule, scenario),
    )


def _psd_sqrt(cov: np.ndarray) -> np.ndarray:
    """Symmetric square-root factor; tolerates singular covariances."""
    vals, vecs = np.linalg.eigh(0.5 * (cov + cov.T))
    vals = np.clip(vals, 0.0, None)
    return vecs * np.sqrt(vals)


def _draw_features(
    scenario: ScenarioSpec, n: int, rng: np.random.Generator, factor: np.ndarray | None
) -> np.ndarray:
    if scenario.dist_kind == POINT_MASS:
        return np.tile(scenario.mean, (n, 1))
    if scenario.dist_kind == FINITE_MIXTURE:
        idx = rng.choice(scenario.mixture_weights.shape[0], size=n, p=scenario.mixture_weights)
        return scenario.mixture_points[idx].copy()
    if factor is None:
        factor = _psd_sqrt(scenario.centered_second_moment())
    z = rng.standard_normal((n, scenario.dim_total))
    return scenario.mean + z @ factor.T


@dataclass(frozen=True)
class _RoundDetails:
    """Full per-agent view of one simulated round; test diagnostics only."""

    features: np.ndarray
    gamed: np.ndarray
    gamed_features: np.ndarray
    batch: RoundBatch


def _simulate_round(
    scenario: ScenarioSpec,
    rule: DecisionRule,
    n: int,
    rng: np.random.Generator,
    factor: np.ndarray | None = None,
) -> _RoundDetails:
    """One round of the publish/game/observe protocol, with ground truth kept.

    Draw order is fixed (features, gaming coins, outcome noise) so a seeded
    stream reproduces rounds exactly.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise InvalidInputError("sample count n must be a positive integer")
    w = _check_rule(rule, scenario)

    x = _draw_features(scenario, int(n), rng, factor)
    gamed = rng.random(int(n)) < scenario.gaming_fraction
    shift = scenario.gaming_matrix() @ w
    xg = x.copy()
    xg[gamed] += shift
    noise = rng.standard_normal(int(n))
    y = xg @ scenario.true_params + scenario.noise_sigma * noise

    visible = xg * scenario.visible_mask
    batch = RoundBatch(
        visible_features=visible,
        decisions=visible @ w,
        outcomes=y,
    )
    return _RoundDetails(features=x, gamed=gamed, gamed_features=xg, batch=batch)


@dataclass(frozen=True)
class RoundRecord:
    """What the decision-maker published in one round."""

    index: int
    weights: np.ndarray
    n_samples: int


def _key_to_int(key: int | str) -> int:
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    return int(key)


class EnvHandle:
    """Sealed simulator enforcing the publish-and-observe protocol.

    The scenario lives in a private attribute; the only way to learn about
    the world is to publish a rule and look at the returned
    :class:`RoundBatch`.  Handles are single-threaded (one mutable random
    stream); for parallel probes, :meth:`clone` derives an independent handle
    from a child seed so a whole experiment replays from one master seed.
    """

    def __init__(
        self,
        scenario: ScenarioSpec,
        seed: int | np.random.SeedSequence,
        _spawn_key: tuple[int, ...] = (),
    ):
        if isinstance(seed, np.random.SeedSequence):
            seq = seed
            self._entropy = seq.entropy
            self._spawn_key = tuple(seq.spawn_key)
        else:
            self._entropy = int(seed)
            self._spawn_key = tuple(_spawn_key)
            seq = np.random.SeedSequence(entropy=self._entropy, spawn_key=self._spawn_key)
        self._scenario = scenario
        self._rng = np.random.Generator(np.random.Philox(seq))
        self._factor = (
            _psd_sqrt(scenario.centered_second_moment())
            if scenario.dist_kind == GAUSSIAN
            else None
        )
        self._round_counter = 0
        self._history: list[RoundRecord] = []

    @property
    def round_counter(self) -> int:
        return self._round_counter

    @property
    def visible_mask(self) -> np.ndarray:
        """Which coordinates the decision-maker observes (copy)."""
        return np.array(self._scenario.visible_mask)

    @property
    def history(self) -> tuple[RoundRecord, ...]:
        """Rules this handle has published, in order."""
        return tuple(self._history)

    def publish_and_draw(self, rule: DecisionRule, n: int) -> RoundBatch:
        """Publish ``rule``, let a fresh population respond, observe the round.

        Returns only the visible gamed features, the assigned decisions and
        the realized outcomes; never the pre-gaming features, the effort
        technology or the true coefficients.
        """
        details = _simulate_round(self._scenario, rule, n, self._rng, self._factor)
        self._round_counter += 1
        self._history.append(
            RoundRecord(
                index=self._round_counter,
                weights=np.array(rule.weights),
                n_samples=int(n),
            )
        )
        return details.batch

    def clone(self, key: int | str) -> "EnvHandle":
        """Independent handle over the same world, on a child random stream."""
        return EnvHandle(
            self._scenario,
            self._entropy,
            _spawn_key=self._spawn_key + (_key_to_int(key),),
        )

    def spawn_rng(self, key: int | str) -> np.random.Generator:
        """Child generator for decision-maker-side randomness (e.g. search
        directions), independent of the agent sampling stream."""
        seq = np.random.SeedSequence(
            entropy=self._entropy,
            spawn_key=self._spawn_key + (_key_to_int(key), 0x5EED),
        )
        return np.random.Generator(np.random.Philox(seq))


def make_env(
    scenario: ScenarioSpec,
    seed: int,
    keys: Iterable[int | str] = (),
) -> EnvHandle:
    """Handle on a derived stream: child of ``seed`` along ``keys``.

    The derivation is a splittable seed tree (master entropy plus a tuple of
    integer keys; string keys hash via crc32), so any (seed, keys) pair names
    one reproducible stream regardless of creation order.
    """
    spawn_key = tuple(_key_to_int(k) for k in keys)
    return EnvHandle(scenario, seed, _spawn_key=spawn_key)
