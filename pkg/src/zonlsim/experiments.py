"""Random-size sweeps, distribution summaries and report files.

Sizes are drawn with ``numpy.random.default_rng(seed)`` (PCG64): each of M, N
and K is sampled uniformly from {8, 16, ..., 128}, one triple per run.

CSV columns, in this order::

    config,M,N,K,cycles,full_cycles,utilization,busy,loop_overhead,
    conflict_stall,raw_stall,startup,conflicts,n_tiles

Cycle counts in the breakdown columns are summed over the compute cores.
Utilization is printed with 6 decimals.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .cluster import ClusterConfig, RunStats, simulate
from .isa import Op
from .kernels import MatmulProblem, core_blocks, gen_schedule

SIZE_CHOICES = tuple(range(8, 129, 8))
CSV_COLUMNS = ("config", "M", "N", "K", "cycles", "full_cycles", "utilization", "busy",
               "loop_overhead", "conflict_stall", "raw_stall", "startup", "conflicts", "n_tiles")


def sample_sizes(n: int, seed: int) -> list[tuple[int, int, int]]:
    rng = np.random.default_rng(seed)
    draws = rng.choice(SIZE_CHOICES, size=(n, 3))
    return [tuple(int(x) for x in row) for row in draws]


@dataclass(frozen=True)
class Summary:
    """Box-plot statistics; whiskers reach the furthest point within 1.5 IQR."""
    n: int
    min: float
    p25: float
    median: float
    p75: float
    max: float
    whisker_lo: float
    whisker_hi: float
    outliers: tuple[float, ...]

    @classmethod
    def of(cls, values: Sequence[float]) -> "Summary":
        v = np.sort(np.asarray(values, dtype=float))
        if v.size == 0:
            raise ValueError("cannot summarize an empty sample")
        p25, med, p75 = (float(x) for x in np.percentile(v, [25, 50, 75]))
        iqr = p75 - p25
        lo_fence, hi_fence = p25 - 1.5 * iqr, p75 + 1.5 * iqr
        inside = v[(v >= lo_fence) & (v <= hi_fence)]
        outliers = tuple(float(x) for x in v[(v < lo_fence) | (v > hi_fence)])
        return cls(int(v.size), float(v[0]), p25, med, p75, float(v[-1]),
                   float(inside[0]), float(inside[-1]), outliers)

    def to_dict(self) -> dict:
        return {"n": self.n, "min": self.min, "p25": self.p25, "median": self.median, "p75": self.p75,
                "max": self.max, "whisker_lo": self.whisker_lo, "whisker_hi": self.whisker_hi,
                "outliers": list(self.outliers)}


def sweep(config: ClusterConfig, n: int = 50, seed: int = 0,
          sizes: Optional[Iterable[tuple[int, int, int]]] = None) -> list[RunStats]:
    """Simulate ``n`` random sizes; results sorted by (config, M, N, K)."""
    triples = list(sizes) if sizes is not None else sample_sizes(n, seed)
    runs = [simulate(config, MatmulProblem(M, N, K, unroll=config.unroll)) for M, N, K in triples]
    runs.sort(key=lambda r: (r.config, r.M, r.N, r.K))
    return runs


def summarize(runs: Sequence[RunStats]) -> dict[str, Summary]:
    by_cfg: dict[str, list[float]] = {}
    for r in runs:
        by_cfg.setdefault(r.config, []).append(r.utilization)
    return {k: Summary.of(v) for k, v in sorted(by_cfg.items())}


def csv_row(r: RunStats) -> list:
    return [r.config, r.M, r.N, r.K, r.total_cycles, r.full_cycles, f"{r.utilization:.6f}", r.busy,
            r.loop_overhead, r.conflict_stall, r.raw_stall, r.startup, r.conflicts, r.n_tiles]


def csv_text(runs: Sequence[RunStats]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in sorted(runs, key=lambda r: (r.config, r.M, r.N, r.K)):
        w.writerow(csv_row(r))
    return buf.getvalue()


def boxplot_text(summaries: dict[str, Summary]) -> str:
    """Whitespace-separated table for gnuplot's candlesticks style."""
    lines = ["# idx config whisker_lo p25 median p75 whisker_hi"]
    for i, (name, s) in enumerate(summaries.items()):
        lines.append(f"{i} {name} {s.whisker_lo:.6f} {s.p25:.6f} {s.median:.6f} {s.p75:.6f} "
                     f"{s.whisker_hi:.6f}")
    return "\n".join(lines) + "\n"


def report(runs: Sequence[RunStats], out_dir: Path | str, stem: str = "sweep",
           meta: Optional[dict] = None) -> dict[str, Path]:
    """Write ``<stem>.csv``, ``<stem>.json`` and ``<stem>_box.dat`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out / f"{stem}.csv", "json": out / f"{stem}.json", "box": out / f"{stem}_box.dat"}
    paths["csv"].write_text(csv_text(runs))
    summaries = summarize(runs) if runs else {}
    doc = {"meta": meta or {}, "columns": list(CSV_COLUMNS),
           "summary": {k: s.to_dict() for k, s in summaries.items()}}
    paths["json"].write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    paths["box"].write_text(boxplot_text(summaries))
    return paths


def outer_iteration_periods(config: ClusterConfig, problem: MatmulProblem, core: int = 0) -> list[int]:
    """Cycles between the starts of consecutive outer iterations of one core,
    within each kernel block (block and tile boundaries are skipped).

    An outer iteration starts when its first ``fmul`` (accumulator 0) issues.
    """
    starts: list[int] = []

    def hook(c, cycle, raddr, loop_idx, inst):
        if c == core and inst.op is Op.FMUL and inst.rd == 0:
            starts.append(cycle)

    simulate(config, problem, seq_trace=hook)
    sched = gen_schedule(problem, config.tcdm, config.n_cores)
    periods, i = [], 0
    for tile in sched.tiles:
        for blk in core_blocks(tile, core, config.n_cores, config.unroll):
            n = blk.rows * blk.groups
            chunk = starts[i:i + n]
            periods += [b - a for a, b in zip(chunk, chunk[1:])]
            i += n
    if i != len(starts):
        raise RuntimeError("issue trace does not match the kernel's block structure")
    return periods
