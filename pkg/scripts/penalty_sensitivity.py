"""How the fairness penalty weight changes per-channel overshoot in the
fixed-transition scenario."""
import argparse

import numpy as np

from clmac.harness import load_scenario, run_scenario, with_overrides


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--scenario", default="scenarios/scenario1.yaml")
    p.add_argument("--penalties", default="5,20,100")
    p.add_argument("--seeds", default="0,1")
    args = p.parse_args()
    base = load_scenario(args.scenario)
    seeds = [int(s) for s in args.seeds.split(",")]
    print(f"{'M':>6s} {'windows > 1.1x':>14s} {'throughput':>10s}")
    for M in (float(m) for m in args.penalties.split(",")):
        spec = with_overrides(base, hyper={**base.hyper, "penalty": M})
        runs = [run_scenario(spec, "cl-d3ql", s) for s in seeds]
        viol = np.mean([r.fairness_violation_fraction() for r in runs])
        thr = np.mean([np.mean(r.column("normalized_throughput")[~r.column("warmup").astype(bool)]) for r in runs])
        print(f"{M:6.0f} {viol:14.1%} {thr:10.3f}")


if __name__ == "__main__":
    main()
