"""Scenario files and built-in fixtures.

Scenario files are TOML documents (``schema = 1``) whose fields mirror
:class:`~strategic_lab.model.ScenarioSpec` one-to-one, with matrices as
row-major nested arrays; see ``docs/scenario_schema.md``.  Fixtures cover
the two worlds the test and acceptance suites lean on: a four-feature
insurance world with one hidden coordinate and conflicting objectives, and
a fully visible isotropic world where all three objectives agree.
"""

from __future__ import annotations

import sys
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .errors import ScenarioValidationError
from .model import FINITE_MIXTURE, ScenarioSpec

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SCHEMA_VERSION = 1

_REQUIRED_KEYS = {
    "schema",
    "dim_total",
    "visible_mask",
    "mean",
    "second_moment",
    "dist_kind",
    "effort_matrix",
    "true_params",
    "noise_sigma",
    "gaming_fraction",
}
_OPTIONAL_KEYS = {"name", "homogeneous_coord", "mixture_components"}


def car_insurance(gaming_fraction: float = 1.0, noise_sigma: float = 0.1) -> ScenarioSpec:
    """Insurance pricing world with one hidden, outcome-relevant feature.

    Features: owns-car, drives-minivan, motorcycle-license, and hidden
    defensive-driving; only the last two truly lower accident cost.  One
    action (buying a car) also makes the driver more careful; the other
    (getting a motorcycle license) makes them substantially less so.  The
    feature distribution is gaussian with unit variances and a 0.6
    correlation between minivan-driving and defensive driving; the location
    and correlation values are fixture choices, documented, not measurements.
    """
    mean = np.array([0.5, 0.3, 0.2, 0.4])
    cov = np.eye(4)
    cov[1, 3] = cov[3, 1] = 0.6
    return ScenarioSpec(
        dim_total=4,
        visible_mask=np.array([1, 1, 1, 0]),
        mean=mean,
        second_moment=cov + np.outer(mean, mean),
        dist_kind="gaussian",
        effort_matrix=np.array(
            [
                [1.0, 0.0],
                [0.0, 0.0],
                [0.0, 1.0],
                [2.0, -2.0],
            ]
        ),
        true_params=np.array([0.0, 0.0, 1.0, 1.0]),
        noise_sigma=noise_sigma,
        gaming_fraction=gaming_fraction,
        name="car_insurance",
    )


def identity_d3(gaming_fraction: float = 1.0, noise_sigma: float = 0.1) -> ScenarioSpec:
    """Fully visible 3-d world: isotropic features, identity effort map."""
    return ScenarioSpec(
        dim_total=3,
        visible_mask=np.ones(3),
        mean=np.zeros(3),
        second_moment=np.eye(3),
        dist_kind="gaussian",
        effort_matrix=np.eye(3),
        true_params=np.array([1.0, 0.0, 0.0]),
        noise_sigma=noise_sigma,
        gaming_fraction=gaming_fraction,
        name="identity_d3",
    )


FIXTURES: dict[str, Callable[..., ScenarioSpec]] = {
    "car_insurance": car_insurance,
    "identity_d3": identity_d3,
}


def _parse_matrix(name: str, value: Any, rows: int, cols: int | None) -> np.ndarray:
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ScenarioValidationError(f"field {name!r}: not a numeric array ({exc})")
    if arr.ndim != 2 or arr.shape[0] != rows or (cols is not None and arr.shape[1] != cols):
        want = f"({rows}, {cols if cols is not None else 'k'})"
        raise ScenarioValidationError(
            f"field {name!r}: expected a {want} row-major nested array, got shape {arr.shape}"
        )
    return arr


def _parse_vector(name: str, value: Any, length: int) -> np.ndarray:
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ScenarioValidationError(f"field {name!r}: not a numeric array ({exc})")
    if arr.shape != (length,):
        raise ScenarioValidationError(
            f"field {name!r}: expected a length-{length} array, got shape {arr.shape}"
        )
    return arr


def parse_scenario(doc: dict[str, Any], source: str = "<dict>") -> ScenarioSpec:
    """Build a validated scenario from a decoded scenario document."""
    keys = set(doc)
    missing = _REQUIRED_KEYS - keys
    if missing:
        raise ScenarioValidationError(
            f"{source}: missing required fields: {', '.join(sorted(missing))}"
        )
    unknown = keys - _REQUIRED_KEYS - _OPTIONAL_KEYS
    if unknown:
        raise ScenarioValidationError(
            f"{source}: unknown fields: {', '.join(sorted(unknown))}"
        )
    if doc["schema"] != SCHEMA_VERSION:
        raise ScenarioValidationError(
            f"{source}: unsupported schema version {doc['schema']!r} "
            f"(this library reads schema = {SCHEMA_VERSION})"
        )

    try:
        d = int(doc["dim_total"])
    except (TypeError, ValueError):
        raise ScenarioValidationError(f"{source}: field 'dim_total' must be an integer")

    mixture_weights = None
    mixture_points = None
    if "mixture_components" in doc:
        comps = doc["mixture_components"]
        if not isinstance(comps, list) or not comps:
            raise ScenarioValidationError(
                f"{source}: field 'mixture_components' must be a nonempty array of tables"
            )
        weights, points = [], []
        for i, comp in enumerate(comps):
            if not isinstance(comp, dict) or set(comp) != {"weight", "point"}:
                raise ScenarioValidationError(
                    f"{source}: mixture_components[{i}] must have exactly "
                    "'weight' and 'point'"
                )
            weights.append(float(comp["weight"]))
            points.append(_parse_vector(f"mixture_components[{i}].point", comp["point"], d))
        mixture_weights = np.array(weights)
        mixture_points = np.array(points)

    homogeneous = doc.get("homogeneous_coord")
    try:
        spec = ScenarioSpec(
            dim_total=d,
            visible_mask=_parse_vector("visible_mask", doc["visible_mask"], d),
            mean=_parse_vector("mean", doc["mean"], d),
            second_moment=_parse_matrix("second_moment", doc["second_moment"], d, d),
            dist_kind=str(doc["dist_kind"]),
            effort_matrix=_parse_matrix("effort_matrix", doc["effort_matrix"], d, None),
            true_params=_parse_vector("true_params", doc["true_params"], d),
            noise_sigma=float(doc["noise_sigma"]),
            gaming_fraction=float(doc["gaming_fraction"]),
            homogeneous_coord=None if homogeneous is None else int(homogeneous),
            mixture_weights=mixture_weights,
            mixture_points=mixture_points,
            name=str(doc.get("name", Path(source).stem)),
        )
    except ScenarioValidationError as exc:
        raise ScenarioValidationError(f"{source}: {exc}") from exc
    if spec.dist_kind == FINITE_MIXTURE and mixture_weights is None:
        raise ScenarioValidationError(
            f"{source}: dist_kind finite_mixture requires mixture_components"
        )
    return spec


def load_scenario(path_or_fixture: str | Path) -> ScenarioSpec:
    """Load a scenario from a TOML file, or by built-in fixture name.

    Fixture names (``car_insurance``, ``identity_d3``) resolve before paths.
    Syntax errors keep the decoder's line/column message; semantic failures
    name the offending field and invariant.
    """
    name = str(path_or_fixture)
    if name in FIXTURES:
        return FIXTURES[name]()
    path = Path(path_or_fixture)
    if not path.exists():
        raise ScenarioValidationError(
            f"{name}: not a built-in fixture ({', '.join(sorted(FIXTURES))}) "
            "and no such file"
        )
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioValidationError(f"{path}: TOML parse error: {exc}") from exc
    return parse_scenario(doc, source=str(path))
