"""Command-line entry point.

    mrsim run --map map1 --mode both --reps 100 --out results/
    mrsim validate --map path/to/map.json
    mrsim dump-triples --robot 0 --out triples.tsv

``run`` executes the configured scenario on one map and writes report.csv
(and results.json with the raw per-call rows).  ``dump-triples`` runs the
scenario and exports one robot's knowledge base in the tab-separated
triple format.  Exit codes: 0 ok, 1 configuration error, 2 runtime
failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from mrsim import harness
from mrsim.knowledge import export_triples
from mrsim.topomap import MapError, load_map


def _add_scenario_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="scenario JSON (default: bundled reference scenario)")
    p.add_argument("--map", dest="map_path", help="map file or bundled fixture name")
    p.add_argument("--robots", type=int)
    p.add_argument("--mode", choices=["shared", "isolated", "both"])
    p.add_argument("--regression", help="comma-separated regression numbers, e.g. 4,5,6,7")
    p.add_argument("--reps", type=int, dest="repetitions")
    p.add_argument("--delta", type=int)
    p.add_argument("--seed", type=int)


def _scenario_from_args(args: argparse.Namespace) -> harness.ScenarioConfig:
    overrides = {}
    for field in ("map_path", "robots", "mode", "repetitions", "delta", "seed"):
        value = getattr(args, field, None)
        if value is not None:
            overrides[field] = value
    if getattr(args, "regression", None):
        overrides["regressions"] = tuple(int(x) for x in args.regression.split(","))
    path = args.config or harness.fixture_path("reference_scenario.json")
    return harness.load_scenario(path, **overrides)


def cmd_run(args: argparse.Namespace) -> int:
    scenario = _scenario_from_args(args)
    os.makedirs(args.out, exist_ok=True)
    results, statuses = harness.run_experiment(scenario)
    rows = harness.report_rows(results)
    report_path = os.path.join(args.out, "report.csv")
    harness.write_report(rows, report_path)
    with open(os.path.join(args.out, "results.json"), "w", encoding="utf-8") as fh:
        json.dump(
            [
                {
                    "map": r.map_name, "robot": r.robot, "regression": r.regression,
                    "mode": r.mode, "repetition": r.repetition, "call": r.call_index,
                    "total_cost": r.total_cost, "realized": r.realized,
                    "provenance": r.provenance,
                }
                for r in results
            ],
            fh,
        )
    dead = {cell: s for cell, s in statuses.items() if s != "ok"}
    for cell, status in dead.items():
        print(f"warning: cell regression={cell[0]} mode={cell[1]}: {status}", file=sys.stderr)
    print(f"wrote {report_path} ({len(rows)} rows)")
    if scenario.mode == "both":
        agg = harness.aggregate(results)
        iso = {k[:3]: v[0] for k, v in agg.items() if k[3] == "isolated"}
        shared = {k[:3]: v[0] for k, v in agg.items() if k[3] == "shared"}
        if iso and shared:
            _, grand = harness.compare(iso, shared)
            print(f"grand mean improvement (isolated vs shared): {100 * grand:.2f}%")
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    path = harness.resolve_map_path(args.map_path)
    topo = load_map(path)
    ports = ", ".join(topo.port_labels)
    print(
        f"{path}: ok ({len(topo.nodes)} nodes, {len(topo.arcs)} directed arcs, "
        f"{len(topo.zones)} zones, ports: {ports})"
    )
    return 0


def cmd_dump_triples(args: argparse.Namespace) -> int:
    scenario = _scenario_from_args(args)
    if scenario.mode == "both":
        scenario.mode = "shared"
    if args.robot >= scenario.robots:
        raise harness.ConfigError(
            f"robot {args.robot} out of range for a {scenario.robots}-robot scenario"
        )
    path = harness.resolve_map_path(scenario.map_path)
    topo = load_map(path)
    map_name = os.path.splitext(os.path.basename(path))[0]
    regression = scenario.regressions[0]
    _, controllers = harness.run_cell_controllers(
        topo, map_name, scenario, regression, scenario.modes[0]
    )
    export_triples(controllers[args.robot].kb, args.out)
    print(f"wrote {args.out} ({len(controllers[args.robot].kb)} triples, robot {args.robot})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mrsim", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment and write CSV reports")
    _add_scenario_flags(p_run)
    p_run.add_argument("--out", default="mrsim-out", help="output directory")
    p_run.set_defaults(func=cmd_run)

    p_val = sub.add_parser("validate", help="load and validate a map file")
    p_val.add_argument("--map", dest="map_path", required=True)
    p_val.set_defaults(func=cmd_validate)

    p_dump = sub.add_parser("dump-triples", help="run a scenario and export one robot's triples")
    _add_scenario_flags(p_dump)
    p_dump.add_argument("--robot", type=int, required=True)
    p_dump.add_argument("--out", required=True)
    p_dump.set_defaults(func=cmd_dump_triples)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (harness.ConfigError, MapError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except harness.RunFailure as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
