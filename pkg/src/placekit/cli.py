"""Command-line entry point: ``placekit <command> [options]``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace

from . import __version__, heuristics, moga, tuning
from .errors import PlacekitError, ScenarioError
from .metrics import FitnessWeights, ProportionalNormalizer, evaluate
from .model import dump_scenario, load_scenario
from .oracle import DEFAULT_CAP
from .scenario import SCALES, builtin_scale, generate
from .solvers import SOLVERS, solve

log = logging.getLogger("placekit")

COMPARE_COLUMNS = ("solver", "total_rt_s", "mean_component_rt_s", "rs_p", "rs_s", "fitness", "runtime_s")
TUNE_COLUMNS = ("ps", "elitism", "cr", "mr", "fitness", "runtime_s", "on_front")


def _read_scenario(path):
    with open(path) as f:
        return load_scenario(f.read())


def _write(text, path):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as f:
            f.write(text)


def _weights(args):
    return FitnessWeights(*args.weights) if args.weights else None


def _config(args, inst) -> moga.SolverConfig:
    if args.auto:
        cfg = moga.auto_config(inst)
    elif args.preset:
        cfg = moga.preset(args.preset)
    else:
        cfg = moga.SolverConfig()
    if args.config:
        with open(args.config) as f:
            cfg = moga.SolverConfig.from_dict({**cfg.to_dict(), **json.load(f)})
    flags = {k: getattr(args, k) for k in ("ps", "cr", "mr", "ss", "it", "seed", "elitism_count",
                                           "thread_capacity", "rt_reference")
             if getattr(args, k) is not None}
    if args.reliability_scope:
        flags["reliability_scope"] = args.reliability_scope
    if args.pin_endpoints:
        flags["pin_endpoints"] = True
    if args.weights:
        flags["weights"] = FitnessWeights(*args.weights)
    return replace(cfg, **flags) if flags else cfg


def _add_ga_flags(p):
    g = p.add_argument_group("GA settings (moga only)")
    src = g.add_mutually_exclusive_group()
    src.add_argument("--preset", choices=sorted(moga.PRESETS), help="published per-scale settings")
    src.add_argument("--auto", action="store_true", help="settings from the estimation formulas")
    g.add_argument("--config", help="JSON file with SolverConfig fields")
    g.add_argument("--ps", type=int)
    g.add_argument("--cr", type=float)
    g.add_argument("--mr", type=float)
    g.add_argument("--ss", type=int)
    g.add_argument("--it", type=int)
    g.add_argument("--elitism-count", type=int, dest="elitism_count")
    g.add_argument("--seed", type=int)
    g.add_argument("--thread-capacity", type=float, dest="thread_capacity")
    g.add_argument("--reliability-scope", choices=["used", "all"], dest="reliability_scope")
    g.add_argument("--rt-reference", type=float, dest="rt_reference",
                   help="total RT (s) that normalises to 1")
    g.add_argument("--pin-endpoints", action="store_true",
                   help="pin the first component to the user and the last to the helper")
    g.add_argument("--weights", type=float, nargs=3, metavar=("W1", "W2", "W3"))


def _table(inst, placement) -> str:
    lines = [f"{'service':>7} {'comp':>4} {'ver':>3}  node"]
    for g, (v, node) in enumerate(placement.genes()):
        x, y = divmod(g, inst.Y)
        lines.append(f"{x:>7} {y:>4} {v:>3}  {node}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# commands


def cmd_generate(args):
    inst = generate(builtin_scale(args.scale), args.seed)
    _write(dump_scenario(inst, indent=args.indent) + "\n", args.out)


def cmd_solve(args):
    inst = _read_scenario(args.scenario)
    cfg = _config(args, inst) if args.solver == "moga" else None
    res = solve(inst, args.solver, cfg, weights=_weights(args), oracle_cap=args.cap)
    if args.table:
        sys.stderr.write(_table(inst, res.placement))
    if args.history_csv and res.history is not None:
        _write(res.history.to_csv(), args.history_csv)
    _write(json.dumps(res.to_json(inst, include_timing=not args.no_timing), indent=2) + "\n", args.out)


def compare_rows(inst, solvers, cfg, weights=None, oracle_cap=DEFAULT_CAP):
    """One row per solver, all scored against the worst heuristic total RT."""
    weights = weights or FitnessWeights()
    norm = ProportionalNormalizer(heuristics.heuristic_reference(inst))
    rows = []
    for name in solvers:
        res = solve(inst, name, cfg if name == "moga" else None, weights=weights,
                    rt_reference=norm.reference, oracle_cap=oracle_cap)
        rep = evaluate(inst, res.placement, weights, norm)
        rows.append({"solver": name, "total_rt_s": rep.total_rt,
                     "mean_component_rt_s": rep.total_rt / inst.n_components,
                     "rs_p": rep.infra_reliability, "rs_s": rep.service_reliability,
                     "fitness": rep.fitness, "runtime_s": res.runtime_s})
    return rows


def cmd_compare(args):
    inst = _read_scenario(args.scenario)
    solvers = args.solvers or ["moga", *heuristics.HEURISTICS]
    rows = compare_rows(inst, solvers, _config(args, inst), _weights(args), args.cap)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.DictWriter(out, fieldnames=COMPARE_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    finally:
        if args.out:
            out.close()


def cmd_tune(args):
    if args.scenario:
        inst = _read_scenario(args.scenario)
    else:
        inst = generate(builtin_scale(args.scale), args.instance_seed)
    grid = tuning.DEFAULT_GRID
    if args.grid:
        with open(args.grid) as f:
            grid = {**grid, **json.load(f)}
    base = moga.preset(args.scale)
    if args.it:
        base = replace(base, it=args.it)
    points = tuning.grid_search(inst, grid, repeats=args.repeats, seed=args.seed, base=base,
                                workers=args.workers)
    front = tuning.pareto_front(points)
    on_front = {id(p) for p in front}
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.DictWriter(out, fieldnames=TUNE_COLUMNS, lineterminator="\n")
        w.writeheader()
        for p in points:
            w.writerow({**p.row(), "on_front": int(id(p) in on_front)})
    finally:
        if args.out:
            out.close()
    chosen = tuning.select_config(front)
    log.info("selected: ps=%d cr=%g mr=%g elitism_count=%d", chosen.ps, chosen.cr, chosen.mr,
             chosen.elite)


def cmd_oracle(args):
    inst = _read_scenario(args.scenario)
    res = solve(inst, "oracle", weights=_weights(args), oracle_cap=args.cap)
    _write(json.dumps(res.to_json(inst, include_timing=not args.no_timing), indent=2) + "\n", args.out)


def cmd_serve(args):
    try:
        import uvicorn
    except ImportError:
        raise PlacekitError("serving needs uvicorn: pip install 'artifact[serve]'") from None
    uvicorn.run("placekit.service:app", host=args.host, port=args.port, log_level="info")


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="placekit", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="sample a scenario at a reference scale")
    p.add_argument("--scale", choices=SCALES, default="small")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--indent", type=int, default=None)
    p.add_argument("--out", "-o")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", help="place one scenario with one solver")
    p.add_argument("--scenario", "-s", required=True)
    p.add_argument("--solver", choices=SOLVERS, default="moga")
    p.add_argument("--out", "-o")
    p.add_argument("--history-csv", help="write the per-iteration best/median/worst series")
    p.add_argument("--table", action="store_true", help="print the placement as a table on stderr")
    p.add_argument("--no-timing", action="store_true", help="omit wall-clock fields (stable output)")
    p.add_argument("--cap", type=int, default=DEFAULT_CAP, help="oracle search-space cap")
    _add_ga_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("compare", help="run several solvers and write a comparison CSV")
    p.add_argument("--scenario", "-s", required=True)
    p.add_argument("--solvers", nargs="+", choices=SOLVERS)
    p.add_argument("--out", "-o")
    p.add_argument("--cap", type=int, default=DEFAULT_CAP)
    _add_ga_flags(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("tune", help="grid search over GA settings")
    p.add_argument("--scale", choices=SCALES, default="small")
    p.add_argument("--scenario", help="tune on this scenario instead of a generated one")
    p.add_argument("--instance-seed", type=int, default=0)
    p.add_argument("--grid", help="JSON object with value lists for ps, elitism, cr, mr")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--it", type=int, help="override the preset iteration count")
    p.add_argument("--workers", type=int, default=None,
                   help="parallel grid cells (default: $PLACEKIT_THREADS or 1)")
    p.add_argument("--out", "-o")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("oracle", help="exact optimum of a tiny scenario by enumeration")
    p.add_argument("--scenario", "-s", required=True)
    p.add_argument("--cap", type=int, default=DEFAULT_CAP)
    p.add_argument("--weights", type=float, nargs=3, metavar=("W1", "W2", "W3"))
    p.add_argument("--no-timing", action="store_true")
    p.add_argument("--out", "-o")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("serve", help="run the HTTP solve service")
    p.add_argument("--host", default=os.environ.get("PLACEKIT_HOST", "127.0.0.1"))
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except ScenarioError as exc:
        for path, msg in exc.violations:
            print(f"error: {path or '<root>'}: {msg}", file=sys.stderr)
        return 2
    except (PlacekitError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
