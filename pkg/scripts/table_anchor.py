"""Utilization and cycle breakdown of every preset at one size (default 32x32x32)."""

import argparse

from zonlsim.cluster import PRESETS, preset, simulate
from zonlsim.kernels import MatmulProblem


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--size", default="32x32x32")
    args = ap.parse_args()
    prob = MatmulProblem.parse(args.size)
    print(f"{'config':12s} {'util':>7s} {'full':>7s} {'cycles':>7s} {'loop':>7s} {'conflict':>8s} "
          f"{'raw':>7s} {'startup':>7s} conflicts")
    for name in PRESETS:
        s = simulate(preset(name), prob)
        b = s.breakdown()
        print(f"{name:12s} {s.utilization:7.4f} {s.full_utilization:7.4f} {s.total_cycles:7d} "
              f"{b['loop_overhead']:7.4f} {b['conflict_stall']:8.4f} {b['raw_stall']:7.4f} "
              f"{b['startup']:7.4f} {s.conflicts}")


if __name__ == "__main__":
    main()
