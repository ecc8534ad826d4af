"""Fixed-transition scenario: every agent kind over several seeds, with a
per-period summary table and CSVs for plotting."""
import argparse

from clmac.harness import load_scenario, run_many


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--scenario", default="scenarios/scenario1.yaml")
    p.add_argument("--seeds", default="0,1,2,3,4")
    p.add_argument("--out", default="results/scenario1")
    args = p.parse_args()
    spec = load_scenario(args.scenario)
    seeds = [int(s) for s in args.seeds.split(",")]
    print(f"{'agent':8s} {'period':>6s} {'throughput':>16s} {'collisions':>16s} {'jain':>16s}")
    for kind in ("cl-d3ql", "d3ql", "random"):
        runs, agg = run_many(spec, kind, seeds, args.out, slot_trace=False)
        for row in agg.periods:
            print(
                f"{kind:8s} {row['period']:6d} "
                + " ".join(f"{row[f'{m}_mean']:8.3f} ± {row[f'{m}_std']:5.3f}" for m in ("normalized_throughput", "collision_rate", "jain"))
            )
        if kind != "random":
            print(f"{kind:8s} contexts per seed: {[r.num_contexts for r in runs]}")


if __name__ == "__main__":
    main()
