"""Command line entry: ``python -m awoisv {simulate,sweep,characterize,validate}``.

Exit codes: 0 success, 1 failed validation, 2 controller halt, 3 config error.
The output directory comes from ``--out``, then ``$AWOISV_OUT``, then the
config's ``output.dir``, then ``./results``.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from .config import characterize_grid, load_document, scenario_from_dict
from .errors import AwoisvError, ConfigError
from .sim import output_dir_from_env, run_scenario, steady_state_characterize, sweep

EXIT_OK, EXIT_FAILED, EXIT_HALT, EXIT_CONFIG = 0, 1, 2, 3
log = logging.getLogger("awoisv")


def _out_dir(args, sc) -> Path:
    return Path(args.out or output_dir_from_env() or sc.output_dir or "results")


def _simulate(args) -> int:
    sc = scenario_from_dict(load_document(args.config))
    out = _out_dir(args, sc)
    res = run_scenario(sc, out, seed=args.seed)
    m = res.metrics
    if m is not None:
        print(f"{sc.name}: max|d| {m.lateral_max:.4f} m, median|d| {m.lateral_median:.4f} m, "
              f"max heading {math.degrees(m.heading_max):.3f} deg, sigma_avg {m.sigma_avg:.5f}, "
              f"solve mean/max {1e3 * m.solve_time_mean:.2f}/{1e3 * m.solve_time_max:.2f} ms")
    print(f"trace: {res.files['trace']}")
    if res.halted:
        print(f"halted: {res.message}", file=sys.stderr)
        return EXIT_HALT
    return EXIT_OK


def _sweep(args) -> int:
    doc = load_document(args.config)
    sc = scenario_from_dict(doc)
    section = doc.get("sweep", {})
    values = args.values
    if values is None:
        values = section.get("speeds") if args.axis == "speed" else section.get("variants")
    if values is not None and len(values) < 2:
        raise ConfigError("a sweep needs at least two values")
    if args.axis == "speed" and values is not None:
        values = [float(v) for v in values]
    res = sweep(sc, args.axis, values, _out_dir(args, sc), workers=section.get("workers", 1))
    print(res.table())
    for label, msg in res.errors.items():
        print(f"{label}: {msg}", file=sys.stderr)
    return EXIT_HALT if res.errors else EXIT_OK


def _characterize(args) -> int:
    doc = load_document(args.config)
    sc = scenario_from_dict(doc)
    poses, speeds, max_time = characterize_grid(doc.get("characterize"))
    table = steady_state_characterize(poses, speeds, sc.vehicle, sc.plant_dt, max_time)
    out = _out_dir(args, sc)
    out.mkdir(parents=True, exist_ok=True)
    summary = {
        "rows": table.to_dicts(),
        "handling": [{"theta": t, "beta_r": b, "class": table.handling(t, b)} for t, b in table.poses()],
    }
    path = out / f"{sc.name}_steady_state.json"
    path.write_text(json.dumps(summary, indent=2))
    print("| beta_R (deg) | R0 (m) | " + " | ".join(f"R @ {v:g} m/s" for v in speeds) + " | class |")
    print("|---" * (len(speeds) + 3) + "|")
    for t, b in table.poses():
        radii = " | ".join(f"{r:.3f}" for r in table.radii(t, b))
        print(f"| {math.degrees(b):.0f} | {1 / math.tan(abs(t)):.2f} | {radii} | {table.handling(t, b)} |")
    print(f"table: {path}")
    return EXIT_OK


def _validate(args) -> int:
    from .validate import run_all

    results = run_all(cases=args.cases, seed=args.seed)
    for r in results:
        print(r.line())
    total = sum(r.seconds for r in results)
    print(f"total {total:.1f} s")
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="awoisv", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("simulate", help="run one scenario")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.set_defaults(func=_simulate)
    s = sub.add_parser("sweep", help="run a scenario over speeds or controller variants")
    s.add_argument("--config", required=True)
    s.add_argument("--axis", choices=["speed", "variant"], required=True)
    s.add_argument("--values", nargs="+", help="override the config's sweep values")
    s.add_argument("--out")
    s.set_defaults(func=_sweep)
    s = sub.add_parser("characterize", help="steady-state turning radius over a pose grid")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.set_defaults(func=_characterize)
    s = sub.add_parser("validate", help="run the randomized invariant suites")
    s.add_argument("--cases", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AwoisvError as exc:
        print(f"halted: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_HALT
