"""Command-line entry point: ``phgame {run,check,validate,scenarios}``.

Exit codes: 0 success, 1 a requested check failed, 2 validation failure,
3 no convergence before t_max, 4 domain violation or singular configuration.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .checks import run_checks
from .errors import ScenarioError
from .runner import EXIT_CHECK_FAILED, EXIT_OK, EXIT_VALIDATION, run
from .scenario import bundled_names, bundled_text, load_scenario


def _add_overrides(p):
    p.add_argument("--dt", type=float, help="integration step")
    p.add_argument("--t-max", type=float, help="final time")
    p.add_argument("--output-interval", type=float, help="sampling interval")
    p.add_argument("--tol-p", type=float, help="momentum tolerance for convergence")
    p.add_argument("--tol-f", type=float, help="force tolerance for convergence")
    p.add_argument("--energy-guard", action="store_true", default=None,
                   help="halve steps that increase H by more than eps_int")


def _load(ref, args):
    scenario = load_scenario(ref)
    return scenario.with_settings(
        dt=getattr(args, "dt", None),
        t_max=getattr(args, "t_max", None),
        output_interval=getattr(args, "output_interval", None),
        tol_p=getattr(args, "tol_p", None),
        tol_f=getattr(args, "tol_f", None),
        energy_guard=getattr(args, "energy_guard", None),
    )


def _run_one(ref, args, output_dir):
    try:
        scenario = _load(ref, args)
    except (ScenarioError, ValueError) as exc:
        return ref, None, str(exc), EXIT_VALIDATION
    artifacts = run(scenario, output_dir)
    return ref, artifacts.summary, None, artifacts.exit_code


def cmd_run(args) -> int:
    base = Path(args.output)
    jobs = []
    for ref in args.scenarios:
        out = base if len(args.scenarios) == 1 else base / Path(ref).stem
        jobs.append((ref, out))
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_one, [r for r, _ in jobs], [args] * len(jobs),
                                    [o for _, o in jobs]))
    else:
        results = [_run_one(ref, args, out) for ref, out in jobs]
    code = EXIT_OK
    for ref, summary, error, status in results:
        if error is not None:
            print(f"{ref}: invalid scenario: {error}", file=sys.stderr)
        else:
            print(f"{ref}: {summary['termination']} at t={summary['final_time']:g}, "
                  f"H={summary['final_H']:.3e}, |F|={summary['final_pseudo_gradient_norm']:.3e}, "
                  f"NE={'yes' if summary['certified_equilibrium'] else 'no'} "
                  f"({summary['equilibrium_kind']})")
        code = max(code, status)
    return code


def cmd_check(args) -> int:
    try:
        scenario = _load(args.scenario, args)
    except (ScenarioError, ValueError) as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    results = run_checks(scenario, args.which, args.samples)
    passed = all(r.passed for r in results)
    if args.json:
        print(json.dumps({"scenario": scenario.name, "passed": passed,
                          "checks": [r.to_dict() for r in results]}, indent=2))
    else:
        for r in results:
            print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: worst {r.worst:.3e} "
                  f"(tol {r.tolerance:g}, {r.samples} samples)")
    return EXIT_OK if passed else EXIT_CHECK_FAILED


def cmd_validate(args) -> int:
    code = EXIT_OK
    for ref in args.scenarios:
        try:
            s = load_scenario(ref)
        except ScenarioError as exc:
            print(f"{ref}: INVALID {exc}", file=sys.stderr)
            code = EXIT_VALIDATION
            continue
        print(f"{ref}: ok ({s.num_agents} agents, {len(s.edges)} edges, n={s.dimension})")
    return code


def cmd_scenarios(args) -> int:
    if args.action == "list":
        for name in bundled_names():
            s = load_scenario(name)
            print(f"{name:24s} {s.num_agents:3d} agents {len(s.edges):3d} edges  {s.description}")
    else:
        sys.stdout.write(bundled_text(args.name))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phgame",
        description="Simulate spring-damper coupled double integrators and certify "
                    "the reached configurations as Nash equilibria.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate scenarios and write trajectory/report files")
    p.add_argument("scenarios", nargs="+", help="scenario files or bundled names")
    p.add_argument("-o", "--output", default="runs", help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="run scenarios in parallel")
    _add_overrides(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("check", help="run numerical property checks")
    p.add_argument("scenario")
    p.add_argument("--which", choices=["potential", "gradients", "passivity", "all"], default="all")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("validate", help="parse and validate scenario files")
    p.add_argument("scenarios", nargs="+")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("scenarios", help="bundled scenarios")
    p.add_argument("action", choices=["list", "show"])
    p.add_argument("name", nargs="?")
    p.set_defaults(func=cmd_scenarios)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "scenarios" and args.action == "show" and not args.name:
        parser.error("scenarios show needs a name")
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
