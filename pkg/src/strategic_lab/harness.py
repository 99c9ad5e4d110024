"""Reproducible experiment runner over scenario files and fixtures.

One run = one scenario, one algorithm, ``replications`` independent
repetitions.  Replication ``r`` draws its world from a child seed of the
master seed (seed tree key ``(r, algorithm)``), so a run is a pure function
of (config, seed): reruns are byte-identical, including under thread
parallelism, because rows are emitted in replication order regardless of
completion order.  Oracle columns (anything computed from the scenario's
ground truth) appear only when oracle mode is on; barrier-mode rows are a
function of observed batches alone.  Wall-clock timings never enter the
data files (they would break reproducibility); totals go to the sidecar
manifest instead.
"""

from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .agent_outcomes import (
    Alg1Config,
    agent_outcome_regret,
    run_algorithm1,
    run_algorithm1_parallel,
)
from .errors import InvalidInputError, StrategicLabError
from .model import (
    DecisionRule,
    EnvHandle,
    ScenarioSpec,
    agent_outcome_exact,
    make_env,
    param_error,
    risk_exact,
)
from .param_recovery import Alg3Config, run_algorithm3
from .risk_min import RiskMinResult, ZoOptConfig, minimize_risk, risk_decomposition
from .scenarios import load_scenario

ALGORITHMS = ("alg1", "minrisk", "alg3", "evaluate", "decompose")
OUTPUT_FORMATS = ("csv", "json")

# Columns whose values depend on the scenario's ground truth.  The schema
# audit keeps these out of barrier-mode output.
ORACLE_COLUMNS = frozenset(
    {
        "exact_agent_outcome",
        "exact_risk",
        "exact_param_error",
        "regret",
        "coef_error",
        "static_risk",
        "gaming_risk",
        "offset_c",
        "total_risk",
    }
)

_N_LEADING = 4


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one experiment run."""

    scenario: str
    algorithm: str
    seed: int
    replications: int = 1
    params: dict[str, Any] = field(default_factory=dict)
    oracle: bool = False
    parallel: int = 1
    output_path: str | None = None
    output_format: str = "csv"

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise InvalidInputError(
                f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}"
            )
        if self.replications < 1:
            raise InvalidInputError("replications must be at least 1")
        if self.output_format not in OUTPUT_FORMATS:
            raise InvalidInputError(f"output_format must be one of {OUTPUT_FORMATS}")
        if self.parallel < 1:
            raise InvalidInputError("parallel must be at least 1")


@dataclass
class ResultRow:
    """One replication's outcome.

    ``record`` holds the flat output fields in a stable order; ``wall_time``
    stays here (and in the manifest) but is never written to the data file.
    """

    seed: int
    replication: int
    algorithm: str
    record: dict[str, Any]
    wall_time: float
    error: str | None = None


def _rule_summary(weights: np.ndarray) -> dict[str, Any]:
    out: dict[str, Any] = {"rule_norm": float(np.linalg.norm(weights))}
    for i in range(_N_LEADING):
        out[f"w{i}"] = float(weights[i]) if i < weights.shape[0] else ""
    return out


def _exact_objective_fields(rule: DecisionRule, scenario: ScenarioSpec) -> dict[str, Any]:
    return {
        "exact_agent_outcome": agent_outcome_exact(rule, scenario),
        "exact_risk": risk_exact(rule, scenario),
        "exact_param_error": param_error(rule, scenario),
    }


def _parse_omega(params: dict[str, Any], scenario: ScenarioSpec) -> DecisionRule:
    omega = params.get("omega")
    if omega is None:
        raise InvalidInputError("this algorithm requires an explicit rule (omega)")
    return DecisionRule(np.asarray(omega, dtype=float))


def _run_alg1(
    env: EnvHandle, scenario: ScenarioSpec, params: dict[str, Any], oracle: bool
) -> tuple[dict[str, Any], dict[str, Any]]:
    lambda_max = params.get("lambda_max")
    if lambda_max is None:
        lambda_max = float(np.linalg.eigvalsh(scenario.second_moment)[-1])
    cfg = Alg1Config(
        lambda_max=float(lambda_max),
        epsilon=float(params.get("epsilon", 0.1)),
        samples_per_round=params.get("samples_per_round"),
        sample_constant=float(params.get("sample_constant", 100.0)),
    )
    runner = run_algorithm1_parallel if params.get("parallel_rounds") else run_algorithm1
    result = runner(env, cfg)

    record = _rule_summary(result.omega_hat.weights)
    record.update(
        {
            "mu_hat": result.mu_hat,
            "nu_norm": float(np.linalg.norm(result.nu_hat)),
            "no_improvement": int(result.no_improvement),
            "rounds_used": result.rounds_used,
            "samples_used": result.rounds_used * result.samples_per_round,
        }
    )
    if oracle:
        record["regret"] = agent_outcome_regret(result, scenario)
        record.update(_exact_objective_fields(result.omega_hat, scenario))
    resolved = {
        "epsilon": cfg.epsilon,
        "lambda_max": cfg.lambda_max,
        "samples_per_round": result.samples_per_round,
        "sample_constant": cfg.sample_constant,
        "parallel_rounds": bool(params.get("parallel_rounds")),
    }
    return record, resolved


def _zo_config(params: dict[str, Any]) -> ZoOptConfig:
    start = params.get("start")
    return ZoOptConfig(
        budget_queries=int(params.get("budget", 500)),
        samples_per_query=int(params.get("n", 200)),
        step_size=float(params.get("step_size", 0.1)),
        step_decay=float(params.get("step_decay", 0.5)),
        smoothing_radius=float(params.get("smoothing_radius", 0.05)),
        domain_radius=float(params.get("domain_radius", 2.0)),
        start=DecisionRule(np.asarray(start, dtype=float)) if start is not None else None,
        alpha=float(params.get("alpha", 0.0)),
        reuse_zero_batch=bool(params.get("reuse_zero_batch", True)),
        init_samples=params.get("init_samples"),
    )


def _run_minrisk(
    env: EnvHandle, scenario: ScenarioSpec, params: dict[str, Any], oracle: bool
) -> tuple[dict[str, Any], dict[str, Any]]:
    cfg = _zo_config(params)
    result = minimize_risk(env, cfg)

    record = _rule_summary(result.rule.weights)
    record.update(
        {
            "best_oracle_value": result.best_value,
            "overestimation_warning": int(result.overestimation_warning),
            "queries_used": result.queries_used,
            "rounds_used": env.round_counter,
            "samples_used": sum(r.n_samples for r in env.history),
        }
    )
    if oracle:
        record.update(_exact_objective_fields(result.rule, scenario))
    trace_path = params.get("trace_path")
    if trace_path:
        write_trace(result, Path(trace_path), oracle=oracle, scenario=scenario)
    resolved = {k: v for k, v in asdict(cfg).items() if k != "start"}
    resolved["alpha"] = cfg.alpha
    return record, resolved


def _run_alg3(
    env: EnvHandle, scenario: ScenarioSpec, params: dict[str, Any], oracle: bool
) -> tuple[dict[str, Any], dict[str, Any]]:
    cfg = Alg3Config(
        epsilon=float(params.get("epsilon", 0.1)),
        n1=params.get("n1"),
        n2=params.get("n2"),
        n3=params.get("n3"),
        domain_radius=float(params.get("domain_radius", 1.0)),
        design_iters=int(params.get("design_iters", 200)),
        sample_constant=float(params.get("sample_constant", 100.0)),
        g_error_target=params.get("g_error_target"),
    )
    use_design = not params.get("no_design", False)
    fit, design, diag = run_algorithm3(env, cfg, use_design=use_design)

    record = _rule_summary(fit.coefficients)
    record.update(
        {
            "design_norm": design.omega_design.norm,
            "kappa_baseline": design.baseline_lambda_min,
            "kappa_achieved": design.achieved_lambda_min,
            "ols_kappa_min": fit.kappa_min,
            "ols_error_bound": fit.error_bound,
            "n1": diag.n1,
            "n2": diag.n2,
            "n3": diag.n3,
            "rounds_used": diag.rounds_used,
            "samples_used": diag.samples_used,
        }
    )
    if oracle:
        record["coef_error"] = float(
            np.linalg.norm(fit.coefficients - scenario.true_params)
        )
        record.update(_exact_objective_fields(DecisionRule(fit.coefficients), scenario))
    resolved = {
        "epsilon": cfg.epsilon,
        "n1": diag.n1,
        "n2": diag.n2,
        "n3": diag.n3,
        "domain_radius": cfg.domain_radius,
        "design_iters": cfg.design_iters,
        "sample_constant": cfg.sample_constant,
        "use_design": use_design,
    }
    return record, resolved


def _run_evaluate(
    env: EnvHandle, scenario: ScenarioSpec, params: dict[str, Any], oracle: bool
) -> tuple[dict[str, Any], dict[str, Any]]:
    rule = _parse_omega(params, scenario)
    n = int(params.get("n", 10_000))
    batch = env.publish_and_draw(rule, n)

    record = _rule_summary(rule.weights)
    record.update(
        {
            "empirical_outcome_mean": float(batch.outcomes.mean()),
            "empirical_risk": float(((batch.decisions - batch.outcomes) ** 2).mean()),
            "rounds_used": 1,
            "samples_used": n,
        }
    )
    if oracle:
        record.update(_exact_objective_fields(rule, scenario))
    return record, {"n": n, "omega": [float(v) for v in rule.weights]}


def _run_decompose(
    env: EnvHandle, scenario: ScenarioSpec, params: dict[str, Any], oracle: bool
) -> tuple[dict[str, Any], dict[str, Any]]:
    # The decomposition is computed from ground truth; it exists only in
    # oracle mode and draws nothing from the environment.
    if not oracle:
        raise InvalidInputError("decompose reads ground truth; run it with oracle mode on")
    rule = _parse_omega(params, scenario)
    parts = risk_decomposition(rule, scenario)
    record = _rule_summary(rule.weights)
    record.update(
        {
            "static_risk": parts.static_risk,
            "gaming_risk": parts.gaming_risk,
            "offset_c": parts.offset_c,
            "total_risk": parts.total,
            "rounds_used": 0,
            "samples_used": 0,
        }
    )
    record.update(_exact_objective_fields(rule, scenario))
    return record, {"omega": [float(v) for v in rule.weights]}


_RUNNERS = {
    "alg1": _run_alg1,
    "minrisk": _run_minrisk,
    "alg3": _run_alg3,
    "evaluate": _run_evaluate,
    "decompose": _run_decompose,
}


def _check_scope(cfg: ExperimentConfig, scenario: ScenarioSpec) -> None:
    if cfg.algorithm in ("alg1", "alg3") and scenario.gaming_fraction != 1.0:
        raise InvalidInputError(
            f"{cfg.algorithm} assumes every agent games (gaming_fraction = 1); "
            f"scenario has {scenario.gaming_fraction}"
        )
    if cfg.algorithm == "alg3" and not np.all(scenario.visible_mask == 1):
        raise InvalidInputError("alg3 requires a fully visible scenario")


def run_experiment(cfg: ExperimentConfig) -> list[ResultRow]:
    """Run all replications; never abort on a single replication's failure.

    A failed replication produces a row whose ``error`` field carries the
    message and whose other fields are empty.  Output files (when
    ``output_path`` is set) are written in replication order plus a sidecar
    manifest with the resolved configuration.
    """
    scenario = load_scenario(cfg.scenario)
    _check_scope(cfg, scenario)
    runner = _RUNNERS[cfg.algorithm]

    resolved_params: dict[str, Any] = dict(cfg.params)

    def run_one(rep: int) -> ResultRow:
        start = time.perf_counter()
        try:
            env = make_env(scenario, cfg.seed, keys=(rep, cfg.algorithm))
            record, resolved = runner(env, scenario, cfg.params, cfg.oracle)
            if rep == 0:
                resolved_params.update(resolved)
            return ResultRow(
                seed=cfg.seed,
                replication=rep,
                algorithm=cfg.algorithm,
                record=record,
                wall_time=time.perf_counter() - start,
            )
        except StrategicLabError as exc:
            return ResultRow(
                seed=cfg.seed,
                replication=rep,
                algorithm=cfg.algorithm,
                record={},
                wall_time=time.perf_counter() - start,
                error=str(exc),
            )

    t0 = time.perf_counter()
    if cfg.parallel > 1:
        with ThreadPoolExecutor(max_workers=cfg.parallel) as pool:
            rows = list(pool.map(run_one, range(cfg.replications)))
    else:
        rows = [run_one(rep) for rep in range(cfg.replications)]
    total_time = time.perf_counter() - t0

    if cfg.output_path is not None:
        path = Path(cfg.output_path)
        write_rows(rows, path, cfg.output_format)
        write_manifest(path, cfg, resolved_params, rows, total_time)
    return rows


def row_records(rows: list[ResultRow]) -> list[dict[str, Any]]:
    """Flatten rows to output records (stable column order, no wall time)."""
    columns: list[str] = ["seed", "replication", "algorithm"]
    for row in rows:
        for key in row.record:
            if key not in columns:
                columns.append(key)
    columns.append("error")
    records = []
    for row in rows:
        rec = {
            "seed": row.seed,
            "replication": row.replication,
            "algorithm": row.algorithm,
        }
        for key in columns[3:-1]:
            rec[key] = row.record.get(key, "")
        rec["error"] = row.error if row.error is not None else ""
        records.append(rec)
    return records


def render_rows(rows: list[ResultRow], fmt: str) -> str:
    records = row_records(rows)
    if fmt == "json":
        return json.dumps(records, indent=2) + "\n"
    buf = io.StringIO()
    if records:
        writer = csv.DictWriter(buf, fieldnames=list(records[0].keys()), lineterminator="\n")
        writer.writeheader()
        writer.writerows(records)
    return buf.getvalue()


def write_rows(rows: list[ResultRow], path: Path, fmt: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_rows(rows, fmt), encoding="utf-8")


def write_trace(
    result: RiskMinResult,
    path: Path,
    oracle: bool = False,
    scenario: ScenarioSpec | None = None,
) -> None:
    """Per-query optimizer trace; the exact-risk column needs oracle mode."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fields = ["query_index", "branch", "oracle_value"]
    if oracle:
        fields.append("exact_risk")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for i, query in enumerate(result.trace):
            rec: dict[str, Any] = {
                "query_index": i,
                "branch": query.branch_taken,
                "oracle_value": query.value,
            }
            if oracle:
                if scenario is None:
                    raise InvalidInputError("oracle trace requires the scenario")
                rec["exact_risk"] = risk_exact(query.rule, scenario)
            writer.writerow(rec)


def write_manifest(
    data_path: Path,
    cfg: ExperimentConfig,
    resolved_params: dict[str, Any],
    rows: list[ResultRow],
    total_time: float,
) -> Path:
    """Sidecar manifest: schema/library versions and fully resolved config."""
    manifest = {
        "schema_version": 1,
        "library_version": __version__,
        "config": {
            "scenario": cfg.scenario,
            "algorithm": cfg.algorithm,
            "seed": cfg.seed,
            "replications": cfg.replications,
            "oracle": cfg.oracle,
            "parallel": cfg.parallel,
            "output_format": cfg.output_format,
            "params": _jsonable(resolved_params),
        },
        "rows_written": len(rows),
        "errors": sum(1 for r in rows if r.error is not None),
        "wall_time_s": total_time,
    }
    path = Path(str(data_path) + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return path


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, DecisionRule):
        return value.weights.tolist()
    return value


def sweep_tradeoff(
    scenario_name: str,
    alphas: list[float],
    seed: int,
    params: dict[str, Any] | None = None,
) -> list[dict[str, Any]]:
    """Outcome/accuracy tradeoff curve: one risk minimization per weight.

    For each ``alpha``, minimizes the weighted objective (risk minus alpha
    times mean outcome) and reports the exact objective values of the
    resulting rule, so the table is inherently an oracle-mode product.
    """
    if len(alphas) < 2:
        raise InvalidInputError("a tradeoff sweep needs at least 2 alpha values")
    scenario = load_scenario(scenario_name)
    params = dict(params or {})
    table: list[dict[str, Any]] = []
    for i, alpha in enumerate(alphas):
        run_params = dict(params)
        run_params["alpha"] = float(alpha)
        env = make_env(scenario, seed, keys=(i, "sweep"))
        cfg = _zo_config(run_params)
        result = minimize_risk(env, cfg)
        row: dict[str, Any] = {"alpha": float(alpha)}
        row.update(_rule_summary(result.rule.weights))
        row.update(
            {
                "exact_agent_outcome": agent_outcome_exact(result.rule, scenario),
                "exact_risk": risk_exact(result.rule, scenario),
                "exact_param_error": param_error(result.rule, scenario),
            }
        )
        table.append(row)
    return table
