"""Loop-management cost of the baseline kernel against the nested-loop kernel.

For each K the script prints the per-outer-iteration period of both kernels
(core 0, conflict-free memory) and the baseline's loop-overhead fraction next
to 2 / (K * unroll).
"""

import argparse

from zonlsim.cluster import ClusterConfig, SequencerKind, simulate
from zonlsim.experiments import outer_iteration_periods
from zonlsim.kernels import MatmulProblem
from zonlsim.memory import TcdmConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--k", type=int, nargs="+", default=[8, 16, 32, 64, 128])
    ap.add_argument("--branch-penalty", type=int, default=1)
    args = ap.parse_args()

    tcdm = TcdmConfig.dobu48()
    base = ClusterConfig("base", sequencer=SequencerKind.BASE, tcdm=tcdm, branch_penalty=args.branch_penalty)
    zonl = ClusterConfig("zonl", sequencer=SequencerKind.ZONL, tcdm=tcdm)
    print(f"{'K':>4s} {'base':>6s} {'zonl':>6s} {'diff':>5s} {'overhead':>9s} {'2/(8K)':>8s}")
    for K in args.k:
        prob = MatmulProblem(64, 64, K)
        pb = outer_iteration_periods(base, prob)
        pz = outer_iteration_periods(zonl, prob)
        s = simulate(base, prob)
        frac = s.loop_overhead / (s.busy + s.loop_overhead)
        print(f"{K:4d} {pb[0]:6d} {pz[0]:6d} {pb[0] - pz[0]:5d} {100 * frac:8.3f}% {100 * 2 / (8 * K):7.3f}%")


if __name__ == "__main__":
    main()
