"""Command-line front end: analyze, simulate, compare, scenarios.

Exit codes: 0 success, 2 invalid scenario, 3 divergence, 4 not settled,
5 prediction/simulation mismatch.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import yaml

from .analysis import predict
from .core import FeedbackConfig
from .scenarios import BUILTIN_NAMES, Scenario, ScenarioError, builtin, dump_scenario, load_scenario
from .sim import DivergenceError, Trajectory, compare, detect_clusters, integrate

log = logging.getLogger("mwopinion")

EXIT_OK, EXIT_INVALID, EXIT_DIVERGED, EXIT_UNSETTLED, EXIT_MISMATCH = 0, 2, 3, 4, 5


def resolve(source: str) -> Scenario:
    """Load a scenario file, or a built-in by name when no such file exists."""
    if not Path(source).exists() and source in BUILTIN_NAMES:
        return builtin(source)
    return load_scenario(source)


def trajectory_csv(traj: Trajectory, stride: int) -> str:
    n, d = traj.topology.n, traj.topology.d
    last = len(traj.times) - 1
    rows = list(range(0, last + 1, stride))
    if rows[-1] != last:
        rows.append(last)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "agent", "topic", "value"])
    for k in rows:
        t = repr(float(traj.times[k]))
        X = traj.opinions(k)
        for i in range(n):
            for p in range(d):
                w.writerow([t, i + 1, p + 1, repr(float(X[i, p]))])
    return buf.getvalue()


def _atomic_write(files: dict[Path, str]) -> None:
    """Write every file or none of them."""
    staged = []
    try:
        for path, text in files.items():
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
            staged.append((tmp, path))
    except BaseException:
        for tmp, _ in staged:
            os.unlink(tmp)
        raise
    for tmp, path in staged:
        os.replace(tmp, path)


def _emit(text: str, out: str | None) -> None:
    if out:
        _atomic_write({Path(out): text})
    else:
        sys.stdout.write(text)


def _report(doc: dict) -> str:
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None, width=100)


def _load(source: str) -> Scenario | None:
    try:
        return resolve(source)
    except ScenarioError as exc:
        for problem in exc.problems:
            print(problem, file=sys.stderr)
    except (OSError, ValueError) as exc:
        print(f"{source}: {exc}", file=sys.stderr)
    return None


def cmd_analyze(args) -> int:
    scenario = _load(args.scenario)
    if scenario is None:
        return EXIT_INVALID
    try:
        report = predict(scenario.topology, scenario.spec)
    except ValueError as exc:
        print(f"{args.scenario}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    _emit(_report({"scenario": scenario.name, **report.to_dict()}), args.out)
    return EXIT_OK


def _apply_overrides(scenario: Scenario, args) -> Scenario:
    cfg = scenario.config
    if args.smoothing is not None or args.ke is not None:
        cfg = replace(
            cfg,
            smoothing=args.smoothing or cfg.smoothing,
            k_e=args.ke if args.ke is not None else cfg.k_e,
        )
    return scenario.with_solver(
        h=args.h, t_f=args.tf, cluster_tol=args.tol, stride=args.stride, config=cfg
    )


def run_simulation(scenario: Scenario, out_dir: Path | None, allow_unstable: bool = False) -> tuple[int, str]:
    """Simulate one scenario; returns (exit code, outcome report text)."""
    try:
        traj = integrate(
            scenario.initial,
            scenario.topology,
            scenario.spec,
            scenario.config,
            h=scenario.h,
            t_f=scenario.t_f,
            allow_unstable=allow_unstable,
        )
    except DivergenceError as exc:
        return EXIT_DIVERGED, f"{scenario.name}: {exc}\n"
    except ValueError as exc:
        return EXIT_INVALID, f"{scenario.name}: {exc}\n"
    outcome = detect_clusters(traj, tol=scenario.cluster_tol, settle_tol=scenario.settle_tol)
    text = _report({"scenario": scenario.name, **outcome.to_dict()})
    if not outcome.settled:
        return EXIT_UNSETTLED, text
    if out_dir is not None:
        _atomic_write(
            {
                out_dir / f"{scenario.name}.csv": trajectory_csv(traj, scenario.stride),
                out_dir / f"{scenario.name}.outcome.yaml": text,
            }
        )
    return EXIT_OK, text


def _simulate_builtin(name: str, out_dir: Path | None, overrides: dict) -> tuple[str, int, str]:
    scenario = builtin(name).with_solver(**overrides)
    code, text = run_simulation(scenario, out_dir)
    return name, code, text


def cmd_simulate(args) -> int:
    out_dir = Path(args.out) if args.out else None
    if args.all:
        overrides = {"h": args.h, "t_f": args.tf, "cluster_tol": args.tol, "stride": args.stride}
        worst = EXIT_OK
        with ProcessPoolExecutor(max_workers=len(BUILTIN_NAMES)) as pool:
            futures = [pool.submit(_simulate_builtin, name, out_dir, overrides) for name in BUILTIN_NAMES]
            for fut in futures:
                name, code, text = fut.result()
                sys.stdout.write(text)
                if code:
                    print(f"{name}: exit {code}", file=sys.stderr)
                worst = max(worst, code)
        return worst
    if not args.scenario:
        print("simulate: give a scenario file or --all", file=sys.stderr)
        return EXIT_INVALID
    scenario = _load(args.scenario)
    if scenario is None:
        return EXIT_INVALID
    try:
        scenario = _apply_overrides(scenario, args)
    except ValueError as exc:
        print(f"{args.scenario}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    code, text = run_simulation(scenario, out_dir, allow_unstable=args.allow_unstable)
    if code == EXIT_UNSETTLED:
        print(f"{scenario.name}: not settled at t_f={scenario.t_f:g}; extend --tf", file=sys.stderr)
    (sys.stdout if code in (EXIT_OK, EXIT_UNSETTLED) else sys.stderr).write(text)
    return code


def cmd_compare(args) -> int:
    scenario = _load(args.scenario)
    if scenario is None:
        return EXIT_INVALID
    try:
        report = predict(scenario.topology, scenario.spec)
        traj = integrate(
            scenario.initial, scenario.topology, scenario.spec, scenario.config, h=scenario.h, t_f=scenario.t_f
        )
    except ValueError as exc:
        print(f"{args.scenario}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except DivergenceError as exc:
        print(f"{args.scenario}: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    outcome = detect_clusters(traj, tol=scenario.cluster_tol, settle_tol=scenario.settle_tol)
    rec = compare(report, outcome)
    _emit(_report({"scenario": scenario.name, **rec.to_dict(), "outcome": outcome.to_dict()}), args.out)
    return EXIT_OK if rec.passed else EXIT_MISMATCH


def cmd_scenarios(args) -> int:
    if args.emit:
        target = Path(args.emit)
        _atomic_write({target / f"{name}.yaml": dump_scenario(builtin(name)) for name in BUILTIN_NAMES})
    for name in BUILTIN_NAMES:
        line = f"{name}\t{builtin(name).description}"
        if args.emit:
            line += f"\t{Path(args.emit) / (name + '.yaml')}"
        print(line)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mwopinion", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="predict consensus/clusters from coupling structure")
    p.add_argument("scenario", help="scenario file or built-in name")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="integrate a scenario, write CSV trajectory and outcome")
    p.add_argument("scenario", nargs="?", help="scenario file or built-in name")
    p.add_argument("--all", action="store_true", help="run every built-in concurrently")
    p.add_argument("--h", type=float)
    p.add_argument("--tf", type=float)
    p.add_argument("--tol", type=float, help="cluster gap tolerance")
    p.add_argument("--smoothing", choices=["exact", "sigmoid", "signum"])
    p.add_argument("--ke", type=float, help="sigmoid gain")
    p.add_argument("--stride", type=int, help="CSV output stride in steps")
    p.add_argument("--out", help="output directory for CSV and outcome files")
    p.add_argument("--allow-unstable", action="store_true", help="permit anti-coupled specs")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="check simulation against the static prediction")
    p.add_argument("scenario", help="scenario file or built-in name")
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("scenarios", help="list built-in scenarios")
    p.add_argument("--emit", metavar="DIR", help="write built-in scenario files into DIR")
    p.set_defaults(func=cmd_scenarios)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
