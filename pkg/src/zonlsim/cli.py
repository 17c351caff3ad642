"""Command-line entry point: ``zonlsim {simulate,sweep,trace,dump,presets}``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np
import yaml

from .cluster import PRESETS, ClusterConfig, preset, simulate
from .experiments import report, sample_sizes, sweep, summarize
from .isa import ConfigError
from .kernels import MatmulProblem, core_program, dump, gen_schedule, reference_matmul


def load_config(spec: str) -> ClusterConfig:
    """A preset name, or a YAML file whose keys mirror ClusterConfig fields.

    A file may start from a preset with ``preset: Zonl48dobu`` and override
    single fields, including nested ``tcdm:`` keys.
    """
    p = Path(spec)
    if p.suffix in (".yaml", ".yml") or p.is_file():
        doc = yaml.safe_load(p.read_text()) or {}
        if not isinstance(doc, dict):
            raise ConfigError(f"{spec}: expected a mapping at the top level")
        doc.setdefault("name", p.stem)
        return ClusterConfig.from_dict(doc)
    return preset(spec)


def _problem(size: str, cfg: ClusterConfig) -> MatmulProblem:
    return MatmulProblem.parse(size, unroll=cfg.unroll)


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = ClusterConfig.from_dict({**cfg.to_dict(), "seed": args.seed})
    prob = _problem(args.size, cfg)
    rows = []
    trace = (lambda cyc, bank, win, nl: rows.append((cyc, bank, win, nl))) if args.trace else None
    stats = simulate(cfg, prob, functional=args.functional, conflict_trace=trace)
    out = {
        "config": cfg.name, "size": [prob.M, prob.N, prob.K], "cycles": stats.total_cycles,
        "full_cycles": stats.full_cycles, "utilization": round(stats.utilization, 6),
        "full_utilization": round(stats.full_utilization, 6),
        "breakdown": {k: round(v, 6) for k, v in stats.breakdown().items()},
        "conflicts": stats.conflicts, "n_tiles": stats.n_tiles, "tile": list(stats.tile_shape),
    }
    if args.functional:
        ref = reference_matmul(stats.data["A"], stats.data["B"])
        out["max_abs_error"] = float(np.max(np.abs(stats.data["C"] - ref)))
        out["bitwise_equal"] = bool(np.array_equal(stats.data["C"], ref))
    if args.trace:
        _write_csv(args.trace, ("cycle", "bank", "winner", "n_losers"), rows)
    print(json.dumps(out, indent=2))
    return 0


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def cmd_sweep(args) -> int:
    cfgs = [load_config(c) for c in args.config]
    runs = []
    for cfg in cfgs:
        runs += sweep(cfg, args.n, args.seed)
        print(f"{cfg.name}: done", file=sys.stderr)
    meta = {"seed": args.seed, "n": args.n, "prng": "numpy.random.default_rng (PCG64)",
            "sizes": [list(t) for t in sample_sizes(args.n, args.seed)]}
    paths = report(runs, args.out, meta=meta)
    for name, s in summarize(runs).items():
        print(f"{name:12s} median={s.median:.4f} p25={s.p25:.4f} p75={s.p75:.4f} "
              f"min={s.min:.4f} max={s.max:.4f} outliers={len(s.outliers)}")
    print(f"wrote {paths['csv']}")
    return 0


def cmd_trace(args) -> int:
    cfg = load_config(args.config)
    prob = _problem(args.size, cfg)
    w = csv.writer(sys.stdout if args.out == "-" else open(args.out, "w", newline=""),
                   lineterminator="\n")
    if args.kind == "conflicts":
        w.writerow(("cycle", "bank", "winner", "n_losers"))
        simulate(cfg, prob, conflict_trace=lambda *r: w.writerow(r))
    else:
        w.writerow(("core", "cycle", "raddr", "loop_idx", "op"))
        simulate(cfg, prob, seq_trace=lambda c, cyc, raddr, li, inst: w.writerow(
            (c, cyc, raddr, li, inst.text or inst.op.value)))
    return 0


def cmd_dump(args) -> int:
    cfg = load_config(args.config)
    prob = _problem(args.size, cfg)
    sched = gen_schedule(prob, cfg.tcdm, cfg.n_cores)
    prog = core_program(prob, sched, args.core, cfg.kernel_variant, cfg.n_cores, cfg.branch_penalty)
    print(dump(prog), end="")
    return 0


def cmd_presets(args) -> int:
    for name, cfg in PRESETS.items():
        print(name, json.dumps(cfg.to_dict(), sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="zonlsim", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("simulate", help="run one matmul and print stats as JSON")
    p.add_argument("--config", required=True, help="preset name or YAML file")
    p.add_argument("--size", required=True, help="MxNxK")
    p.add_argument("--seed", type=int)
    p.add_argument("--trace", help="write a bank-conflict CSV here")
    p.add_argument("--functional", action="store_true", help="move real FP64 data and check C")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("sweep", help="random-size sweep with CSV/JSON/box-plot output")
    p.add_argument("--config", required=True, nargs="+")
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("trace", help="per-cycle CSV trace")
    p.add_argument("--config", required=True)
    p.add_argument("--size", required=True)
    p.add_argument("--kind", choices=("conflicts", "sequencer"), default="conflicts")
    p.add_argument("--out", default="-")
    p.set_defaults(fn=cmd_trace)

    p = sub.add_parser("dump", help="listing of one core's generated program")
    p.add_argument("--config", required=True)
    p.add_argument("--size", required=True)
    p.add_argument("--core", type=int, default=0)
    p.set_defaults(fn=cmd_dump)

    p = sub.add_parser("presets", help="list the named configurations")
    p.set_defaults(fn=cmd_presets)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
