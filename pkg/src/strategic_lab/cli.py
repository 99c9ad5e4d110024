"""Command-line front end.

Exit codes: 0 on success, 2 on configuration/validation errors, 3 on
runtime or numerical errors.  Every file-producing run writes a sidecar
manifest (``<out>.manifest.json``) recording the schema version, library
version and fully resolved configuration.
"""

from __future__ import annotations

import argparse
import sys

from .errors import (
    InvalidInputError,
    NumericalError,
    ScenarioValidationError,
    StrategicLabError,
    UnsupportedScenarioError,
)
from .harness import ExperimentConfig, render_rows, run_experiment, sweep_tradeoff

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise InvalidInputError(f"expected a comma-separated list of numbers, got {text!r}")


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--scenario", required=True, help="scenario file or fixture name")
    sub.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    sub.add_argument("--reps", type=int, default=1, help="independent replications")
    sub.add_argument("--out", default=None, help="output file (default: stdout)")
    sub.add_argument("--format", choices=("csv", "json"), default="csv")
    sub.add_argument(
        "--oracle",
        action="store_true",
        help="include exact objective columns computed from ground truth",
    )
    sub.add_argument(
        "--parallel", type=int, default=1, metavar="THREADS",
        help="replication threads (output order is unaffected)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="strategic-lab",
        description="Experiments with decision rules over gaming agent populations",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    alg1 = subs.add_parser("alg1", help="learn the outcome-maximizing rule by basis probes")
    _add_common(alg1)
    alg1.add_argument("--epsilon", type=float, default=0.1)
    alg1.add_argument("--samples-per-round", type=int, default=None)
    alg1.add_argument("--sample-constant", type=float, default=100.0)
    alg1.add_argument(
        "--lambda-max", type=float, default=None,
        help="top-eigenvalue bound (default: computed from the scenario)",
    )
    alg1.add_argument(
        "--parallel-rounds", action="store_true",
        help="run the non-adaptive probe rounds on cloned environments",
    )

    minrisk = subs.add_parser("minrisk", help="minimize prediction risk (optionally weighted)")
    _add_common(minrisk)
    minrisk.add_argument("--alpha", type=float, default=0.0, help="outcome weight")
    minrisk.add_argument("--budget", type=int, default=500, help="oracle query budget")
    minrisk.add_argument("--n", type=int, default=200, help="samples per oracle query")
    minrisk.add_argument("--step-size", type=float, default=0.1)
    minrisk.add_argument("--smoothing-radius", type=float, default=0.05)
    minrisk.add_argument("--domain-radius", type=float, default=2.0)
    minrisk.add_argument("--trace", default=None, help="per-query trace CSV path")

    alg3 = subs.add_parser("alg3", help="recover the true coefficients via an informative rule")
    _add_common(alg3)
    alg3.add_argument("--epsilon", type=float, default=0.1)
    alg3.add_argument("--n1", type=int, default=None)
    alg3.add_argument("--n2", type=int, default=None)
    alg3.add_argument("--n3", type=int, default=None)
    alg3.add_argument("--domain-radius", type=float, default=1.0)
    alg3.add_argument("--design-iters", type=int, default=200)
    alg3.add_argument("--sample-constant", type=float, default=100.0)
    alg3.add_argument(
        "--no-design", action="store_true",
        help="ablation: sample the final fit under the zero rule",
    )

    evaluate = subs.add_parser("evaluate", help="empirically evaluate a fixed rule")
    _add_common(evaluate)
    evaluate.add_argument("--omega", required=True, help="comma-separated rule weights")
    evaluate.add_argument("--n", type=int, default=10_000)

    decompose = subs.add_parser("decompose", help="exact risk decomposition of a fixed rule")
    _add_common(decompose)
    decompose.add_argument("--omega", required=True, help="comma-separated rule weights")

    sweep = subs.add_parser("sweep", help="trade-off curve over outcome weights")
    _add_common(sweep)
    sweep.add_argument("--alphas", required=True, help="comma-separated outcome weights (>= 2)")
    sweep.add_argument("--budget", type=int, default=500)
    sweep.add_argument("--n", type=int, default=200)
    sweep.add_argument("--step-size", type=float, default=0.1)
    sweep.add_argument("--smoothing-radius", type=float, default=0.05)
    sweep.add_argument("--domain-radius", type=float, default=2.0)

    return parser


def _params_for(args: argparse.Namespace) -> dict:
    if args.command == "alg1":
        return {
            "epsilon": args.epsilon,
            "samples_per_round": args.samples_per_round,
            "sample_constant": args.sample_constant,
            "lambda_max": args.lambda_max,
            "parallel_rounds": args.parallel_rounds,
        }
    if args.command == "minrisk":
        return {
            "alpha": args.alpha,
            "budget": args.budget,
            "n": args.n,
            "step_size": args.step_size,
            "smoothing_radius": args.smoothing_radius,
            "domain_radius": args.domain_radius,
            "trace_path": args.trace,
        }
    if args.command == "alg3":
        return {
            "epsilon": args.epsilon,
            "n1": args.n1,
            "n2": args.n2,
            "n3": args.n3,
            "domain_radius": args.domain_radius,
            "design_iters": args.design_iters,
            "sample_constant": args.sample_constant,
            "no_design": args.no_design,
        }
    if args.command == "evaluate":
        return {"omega": _parse_floats(args.omega), "n": args.n}
    if args.command == "decompose":
        return {"omega": _parse_floats(args.omega)}
    raise InvalidInputError(f"unknown command {args.command!r}")


def _run_sweep(args: argparse.Namespace) -> int:
    import csv as _csv
    import io
    import json

    alphas = _parse_floats(args.alphas)
    params = {
        "budget": args.budget,
        "n": args.n,
        "step_size": args.step_size,
        "smoothing_radius": args.smoothing_radius,
        "domain_radius": args.domain_radius,
    }
    table = sweep_tradeoff(args.scenario, alphas, seed=args.seed, params=params)
    if args.format == "json":
        text = json.dumps(table, indent=2) + "\n"
    else:
        buf = io.StringIO()
        writer = _csv.DictWriter(buf, fieldnames=list(table[0].keys()), lineterminator="\n")
        writer.writeheader()
        writer.writerows(table)
        text = buf.getvalue()
    if args.out:
        from pathlib import Path

        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "sweep":
            return _run_sweep(args)
        cfg = ExperimentConfig(
            scenario=args.scenario,
            algorithm=args.command,
            seed=args.seed,
            replications=args.reps,
            params=_params_for(args),
            oracle=args.oracle or args.command == "decompose",
            parallel=args.parallel,
            output_path=args.out,
            output_format=args.format,
        )
        rows = run_experiment(cfg)
        if cfg.output_path is None:
            sys.stdout.write(render_rows(rows, cfg.output_format))
        return EXIT_OK
    except (ScenarioValidationError, InvalidInputError, UnsupportedScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericalError, StrategicLabError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
