"""Random-size utilization sweep over the named configurations.

    python scripts/run_sweep.py --n 50 --seed 0 --out results/sweep
"""

import argparse

from zonlsim.cluster import PRESETS, preset
from zonlsim.experiments import report, sample_sizes, summarize, sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config", nargs="+", default=sorted(PRESETS))
    ap.add_argument("--n", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results/sweep")
    args = ap.parse_args()

    runs = []
    for name in args.config:
        runs += sweep(preset(name), args.n, args.seed)
        print(f"{name}: {args.n} sizes done", flush=True)
    meta = {"seed": args.seed, "n": args.n, "sizes": [list(t) for t in sample_sizes(args.n, args.seed)]}
    paths = report(runs, args.out, meta=meta)
    print(f"{'config':12s} {'median':>7s} {'p25':>7s} {'p75':>7s} {'lo':>7s} {'hi':>7s} outliers")
    for name, s in summarize(runs).items():
        print(f"{name:12s} {s.median:7.4f} {s.p25:7.4f} {s.p75:7.4f} {s.whisker_lo:7.4f} "
              f"{s.whisker_hi:7.4f} {len(s.outliers)}")
    print("wrote", ", ".join(str(p) for p in paths.values()))


if __name__ == "__main__":
    main()
