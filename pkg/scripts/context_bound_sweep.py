"""Registry growth against the combinatorial bound, using only the
announcement stream (no learning needed to count canonical contexts)."""
import argparse

import numpy as np

from clmac.continual import ContextRegistry, context_bound
from clmac.harness import sample_stochastic_timeline
from clmac.incumbents import UEProfile
from clmac.sim import emit_announcements

POOL = [
    UEProfile.tdma(3, 0, 8),
    UEProfile.tdma(3, 4, 8),
    UEProfile.csma(2, 4, 6),
    UEProfile.csma(3, 4, 8),
    UEProfile.csma(1, 4, 6),
    UEProfile.tdma(1, 0, 4),
    UEProfile.tdma(2, 2, 6),
    UEProfile.csma(2, 2, 4),
]


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--horizon", type=int, default=200_000)
    p.add_argument("--dwell", type=float, default=200, help="mean dwell in slots")
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    print(f"{'types':>5s} {'C':>2s} {'bound':>6s} {'announcements':>13s} {'CL contexts':>11s} {'no-CL contexts':>14s}")
    for C in (2, 3, 4):
        for types in (2, 4, 6, 8):
            tl = sample_stochastic_timeline(args.dwell, POOL[:types], C, args.horizon, np.random.default_rng(args.seed), beta_units="slots")
            anns = emit_announcements(tl, C)
            cl, plain = ContextRegistry(True), ContextRegistry(False)
            for a in anns:
                cl.lookup_or_create(a.context, a.time, object)
                plain.lookup_or_create(a.context, a.time, object)
            print(f"{types:5d} {C:2d} {context_bound(types, C):6d} {len(anns):13d} {len(cl):11d} {len(plain):14d}")


if __name__ == "__main__":
    main()
