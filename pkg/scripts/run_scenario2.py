"""Stochastic-transition scenario swept over the transition rate 1/beta.
Prints post-warm-up means per agent kind and rate."""
import argparse

import numpy as np

from clmac.harness import load_scenario, run_scenario, with_overrides


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--scenario", default="scenarios/scenario2.yaml")
    p.add_argument("--seeds", default="0,1,2,3,4")
    p.add_argument("--betas", default="0.2,0.1,0.05,0.02", help="mean dwell as a fraction of the horizon")
    p.add_argument("--agents", default="cl-d3ql,d3ql,random")
    args = p.parse_args()
    base = load_scenario(args.scenario)
    seeds = [int(s) for s in args.seeds.split(",")]
    print(f"{'1/beta':>7s} {'agent':8s} {'throughput':>10s} {'collisions':>10s} {'jain':>6s} {'contexts':>8s}")
    for beta in (float(b) for b in args.betas.split(",")):
        spec = with_overrides(base, beta=beta)
        for kind in args.agents.split(","):
            runs = [run_scenario(spec, kind, s) for s in seeds]
            mean = {m: np.mean([np.mean([w[m] for w in r.evaluated()]) for r in runs]) for m in ("normalized_throughput", "collision_rate", "jain")}
            ctx = np.mean([r.num_contexts for r in runs])
            print(f"{1 / beta:7.1f} {kind:8s} {mean['normalized_throughput']:10.3f} {mean['collision_rate']:10.3f} {mean['jain']:6.3f} {ctx:8.1f}")


if __name__ == "__main__":
    main()
