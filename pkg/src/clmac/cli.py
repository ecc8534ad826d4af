"""Command-line entry points: run, oracle, bound."""
from __future__ import annotations

import argparse
import logging
import os
import sys

from .continual import context_bound
from .harness import AGENT_KINDS, ScenarioError, load_scenario, run_many
from .oracle import SEARCH_LIMIT, SearchTooLarge, brute_force_optimum, check_constraints, load_instance, write_schedule_csv


def _seeds(text: str) -> list[int]:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers: {text!r}") from exc
    if not seeds:
        raise argparse.ArgumentTypeError("need at least one seed")
    return seeds


def cmd_run(args) -> int:
    spec = load_scenario(args.scenario)
    seeds = args.seeds if args.seeds is not None else list(spec.seeds)
    runs, agg = run_many(spec, args.agent, seeds, args.out, slot_trace=not args.no_slot_trace)
    for row in agg.periods:
        print(
            f"period {row['period']} [{row['start']}, {row['end']}): "
            f"throughput {row['normalized_throughput_mean']:.3f} ± {row['normalized_throughput_std']:.3f}, "
            f"collisions {row['collision_rate_mean']:.3f}, jain {row['jain_mean']:.3f}"
        )
    if args.agent != "random":
        print("contexts registered per seed:", ", ".join(str(r.num_contexts) for r in runs))
    print(f"wrote CSVs to {args.out}")
    return 0


def cmd_oracle(args) -> int:
    inst = load_instance(args.instance)
    try:
        res = brute_force_optimum(inst.busy, inst.targets, inst.window, inst.max_packet_len, limit=args.limit)
    except SearchTooLarge as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    report = check_constraints(res.schedule, inst.busy, inst.targets, inst.window)
    evaluated = inst.horizon - inst.window + 1
    print(f"optimum objective {res.objective:.6f} over {evaluated} evaluated slots ({res.objective / evaluated:.6f} per slot)")
    print(f"agent targets per channel: {', '.join(f'{c:.4f}' for c in inst.targets)}")
    print(f"states explored: {res.states_explored}")
    print(report)
    if args.out:
        write_schedule_csv(res.schedule, args.out)
        print(f"schedule written to {args.out}")
    return 0 if report.ok else 1


def cmd_bound(args) -> int:
    print(context_bound(args.types, args.channels))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="clmac", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a scenario with one agent kind over several seeds")
    r.add_argument("--scenario", required=True, help="scenario YAML file")
    r.add_argument("--agent", required=True, choices=AGENT_KINDS)
    r.add_argument("--seeds", type=_seeds, default=None, help="comma-separated seeds (default: from the scenario)")
    r.add_argument("--out", required=True, help="output directory for CSVs")
    r.add_argument("--no-slot-trace", action="store_true", help="skip the per-slot transmitter trace")
    r.set_defaults(func=cmd_run)

    o = sub.add_parser("oracle", help="exact optimum for a small deterministic instance")
    o.add_argument("--instance", required=True, help="instance YAML file")
    o.add_argument("--out", default=None, help="write the optimal schedule as CSV")
    o.add_argument("--limit", type=int, default=SEARCH_LIMIT, help="maximum search size")
    o.set_defaults(func=cmd_oracle)

    b = sub.add_parser("bound", help="maximum number of canonical contexts")
    b.add_argument("--types", type=int, required=True, help="number of distinct per-channel signatures")
    b.add_argument("--channels", type=int, required=True)
    b.set_defaults(func=cmd_bound)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("CLMAC_LOG", "WARNING").upper(), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
