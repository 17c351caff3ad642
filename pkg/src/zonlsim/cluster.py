"""Cluster assembly, the clocked simulation loop and run statistics."""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .core import Barrier, Core, CoreCounters
from .isa import ConfigError
from .kernels import (GROUP_A, GROUP_B, GROUP_C, MatmulProblem, TileSchedule, Variant,
                      core_program, gen_schedule)
from .memory import DmaEngine, DmaTransfer, Interconnect, Policy, Tcdm, TcdmConfig


class SequencerKind(enum.Enum):
    BASE = "base"
    ZONL = "zonl"


@dataclass(frozen=True)
class ClusterConfig:
    name: str = "custom"
    n_cores: int = 8
    sequencer: SequencerKind = SequencerKind.ZONL
    tcdm: TcdmConfig = field(default_factory=TcdmConfig.baseline32)
    fpu_latency: int = 3
    unroll: int = 8
    policy: Policy = Policy.ROUND_ROBIN
    seed: int = 0
    seq_capacity: int = 32
    seq_depth: int = 2
    stream_depth: int = 4
    branch_penalty: int = 1
    barrier_latency: int = 1
    variant: Optional[Variant] = None  # default follows the sequencer kind

    def __post_init__(self):
        if self.sequencer is SequencerKind.BASE and self.seq_depth != 1:
            object.__setattr__(self, "seq_depth", 1)
        if not 1 <= self.seq_depth <= 4:
            raise ConfigError("nest depth must be between 1 and 4")
        if self.fpu_latency < 1:
            raise ConfigError("FPU latency must be >= 1")
        if self.variant is Variant.ZONL_NEST and self.seq_depth < 2:
            raise ConfigError("the ZonlNest kernel needs a sequencer nest depth >= 2")

    @property
    def kernel_variant(self) -> Variant:
        if self.variant is not None:
            return self.variant
        return Variant.ZONL_NEST if self.sequencer is SequencerKind.ZONL else Variant.BASELINE_LOOP

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sequencer"] = self.sequencer.value
        d["policy"] = self.policy.value
        d["variant"] = self.variant.value if self.variant else None
        d["tcdm"]["interconnect"] = self.tcdm.interconnect.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ClusterConfig":
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known - {"preset"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        base = preset(d.pop("preset")) if "preset" in d else cls()
        kw = {}
        for k, v in d.items():
            if k == "tcdm":
                t = dict(asdict(base.tcdm))
                t.update(v)
                t["interconnect"] = Interconnect(t["interconnect"]) if isinstance(t["interconnect"], str) \
                    else t["interconnect"]
                v = TcdmConfig(**t)
            elif k == "sequencer":
                v = SequencerKind(v)
            elif k == "policy":
                v = Policy(v)
            elif k == "variant":
                v = Variant(v) if v else None
            kw[k] = v
        if "sequencer" in kw and kw["sequencer"] is SequencerKind.ZONL and "seq_depth" not in kw \
                and base.seq_depth < 2:
            kw["seq_depth"] = 2
        return replace(base, **kw)


PRESETS = {
    "Base32fc": ClusterConfig("Base32fc", sequencer=SequencerKind.BASE, tcdm=TcdmConfig.baseline32(),
                              seq_depth=1),
    "Zonl32fc": ClusterConfig("Zonl32fc", sequencer=SequencerKind.ZONL, tcdm=TcdmConfig.baseline32()),
    "Zonl64fc": ClusterConfig("Zonl64fc", sequencer=SequencerKind.ZONL, tcdm=TcdmConfig.fc64()),
    "Zonl64dobu": ClusterConfig("Zonl64dobu", sequencer=SequencerKind.ZONL, tcdm=TcdmConfig.dobu64()),
    "Zonl48dobu": ClusterConfig("Zonl48dobu", sequencer=SequencerKind.ZONL, tcdm=TcdmConfig.dobu48()),
}
ALIASES = {"Zonl64db": "Zonl64dobu", "Zonl48db": "Zonl48dobu"}


def preset(name: str) -> ClusterConfig:
    name = ALIASES.get(name, name)
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


@dataclass
class RunStats:
    config: str
    M: int
    N: int
    K: int
    total_cycles: int
    full_cycles: int
    per_core: list[CoreCounters]
    conflicts_per_bank: list[int]
    conflict_cycles: int
    dma_busy_cycles: int
    dma_beats: int
    dma_beats_lost: int
    n_tiles: int
    tile_shape: tuple[int, int, int]
    compute_window: tuple[int, int]

    @property
    def utilization(self) -> float:
        """Mean over compute cores of busy / total cycles."""
        if self.total_cycles <= 0:
            raise ValueError("utilization undefined for a zero-cycle run")
        return sum(c.busy for c in self.per_core) / (len(self.per_core) * self.total_cycles)

    @property
    def full_utilization(self) -> float:
        """Busy fraction over the whole run, prologue and epilogue DMA included."""
        if self.full_cycles <= 0:
            raise ValueError("utilization undefined for a zero-cycle run")
        return sum(c.busy for c in self.per_core) / (len(self.per_core) * self.full_cycles)

    def _sum(self, attr: str) -> int:
        return sum(getattr(c, attr) for c in self.per_core)

    @property
    def busy(self) -> int:
        return self._sum("busy")

    @property
    def conflict_stall(self) -> int:
        return self._sum("conflict_stall")

    @property
    def raw_stall(self) -> int:
        return self._sum("raw_stall")

    @property
    def loop_overhead(self) -> int:
        return self._sum("loop_overhead")

    @property
    def startup(self) -> int:
        return self._sum("startup")

    @property
    def conflicts(self) -> int:
        return sum(self.conflicts_per_bank)

    def breakdown(self) -> dict:
        n = len(self.per_core) * self.total_cycles
        return {k: self._sum(k) / n for k in ("busy", "loop_overhead", "conflict_stall", "raw_stall", "startup")}


def utilization(stats: RunStats) -> float:
    return stats.utilization


class DmCore:
    """Data-movement core: prologue load, then per tile prefetch the next
    tile's A/B and write back the previous C, meeting the compute cores at a
    barrier after each tile."""

    def __init__(self, sched: TileSchedule, engine: DmaEngine, barrier: Barrier,
                 data: Optional[dict] = None):
        self.sched = sched
        self.engine = engine
        self.barrier = barrier
        self.data = data
        self.steps = self._plan()
        self.pc = 0
        self.gen: Optional[int] = None
        self.submitted = False

    def _plan(self):
        tiles = self.sched.tiles
        steps = [("dma", self._loads(0)), ("barrier", None)]
        for t in range(len(tiles)):
            xfers = []
            if t + 1 < len(tiles):
                xfers += self._loads(t + 1)
            if t >= 1:
                xfers += self._store(t - 1)
            steps += [("dma", xfers), ("barrier", None)]
        steps.append(("dma", self._store(len(tiles) - 1)))
        return steps

    def _loads(self, t: int) -> list[DmaTransfer]:
        tile = self.sched.tiles[t]
        lay = self.sched.layouts[tile.buffer]
        out = []
        d = self.data
        if tile.load_a:
            beats, payload = [], [] if d else None
            for b in range(-(-tile.tm // 8)):
                for k in range(tile.K):
                    beats.append(lay.addr(GROUP_A, b * tile.K + k))
                    if d:
                        rows = range(tile.m0 + 8 * b, tile.m0 + 8 * b + 8)
                        payload.append([d["A"][r, k] if r < tile.m0 + tile.tm else 0.0 for r in rows])
            out.append(DmaTransfer(0, 0, True, beats=beats, payload=payload, tag=f"A{t}"))
        if tile.load_b:
            beats, payload = [], [] if d else None
            for k in range(tile.K):
                for g in range(tile.ng):
                    beats.append(lay.addr(GROUP_B, k * tile.ng + g))
                    if d:
                        cols = range(tile.n0 + 8 * g, tile.n0 + 8 * g + 8)
                        payload.append([d["B"][k, n] if n < tile.n0 + tile.tn else 0.0 for n in cols])
            out.append(DmaTransfer(0, 0, True, beats=beats, payload=payload, tag=f"B{t}"))
        return out

    def _store(self, t: int) -> list[DmaTransfer]:
        tile = self.sched.tiles[t]
        lay = self.sched.layouts[tile.buffer]
        beats = [lay.addr(GROUP_C, r * tile.ng + g) for r in range(tile.tm) for g in range(tile.ng)]
        sink = None
        if self.data:
            C = self.data["C"]

            def sink(i, words, tile=tile):
                r, g = divmod(i, tile.ng)
                for j, v in enumerate(words):
                    n = g * 8 + j
                    if n < tile.tn:
                        C[tile.m0 + r, tile.n0 + n] = v
        return [DmaTransfer(0, 0, False, beats=beats, sink=sink, tag=f"C{t}")]

    @property
    def finished(self) -> bool:
        return self.pc >= len(self.steps)

    def step(self, cycle: int):
        while self.pc < len(self.steps):
            kind, arg = self.steps[self.pc]
            if kind == "dma":
                if not self.submitted:
                    for x in arg:
                        self.engine.submit(x)
                    self.submitted = True
                if not self.engine.idle:
                    return
                self.submitted = False
                self.pc += 1
                continue
            if self.gen is None:
                self.gen = self.barrier.arrive(cycle)
                return
            if self.barrier.generation == self.gen:
                return
            self.gen = None
            self.pc += 1


class Cluster:
    def __init__(self, config: ClusterConfig, problem: MatmulProblem, functional: bool = False,
                 conflict_trace: Optional[Callable] = None, seq_trace: Optional[Callable] = None,
                 data: Optional[dict] = None):
        if problem.unroll != config.unroll:
            problem = replace(problem, unroll=config.unroll)
        self.config = config
        self.problem = problem
        self.sched = gen_schedule(problem, config.tcdm, config.n_cores)
        self.tcdm = Tcdm(config.tcdm, config.policy, n_requesters=3 * config.n_cores,
                         functional=functional, trace=conflict_trace)
        self.barrier = Barrier(config.n_cores + 1, config.barrier_latency)
        self.cores = []
        for c in range(config.n_cores):
            prog = core_program(problem, self.sched, c, config.kernel_variant, config.n_cores,
                                config.branch_penalty)
            tr = None
            if seq_trace is not None:
                tr = (lambda cyc, raddr, li, inst, c=c: seq_trace(c, cyc, raddr, li, inst))
            self.cores.append(Core(c, prog, self.tcdm, self.barrier, config.seq_capacity,
                                   config.seq_depth, config.fpu_latency, config.stream_depth,
                                   functional, tr))
        self.dma = DmaEngine(self.tcdm)
        self.dm = DmCore(self.sched, self.dma, self.barrier, data)
        self.cycle = 0

    def run(self, max_cycles: int = 50_000_000) -> RunStats:
        cores = self.cores
        barrier = self.barrier
        dm = self.dm
        dma = self.dma
        tcdm = self.tcdm
        streams = [s for core in cores for s in core.streams]
        n_tiles = len(self.sched.tiles)
        marks: dict[int, list[CoreCounters]] = {}
        cycle = 0
        while True:
            if barrier.release_at is not None and cycle >= barrier.release_at:
                barrier.tick(cycle)
                gen = barrier.generation
                if gen == 1 or gen == n_tiles + 1:
                    marks[gen] = [c.counters.copy() for c in cores]
            for core in cores:
                core.frontend(cycle)
                core.issue(cycle)
            dm.step(cycle)
            reqs = [r for r in (s.gen_request(cycle) for s in streams) if r is not None]
            d = dma.gen_request(cycle)
            if d is not None:
                reqs.append(d)
            if reqs:
                if d is None and len({r.bank for r in reqs}) == len(reqs):
                    for r in reqs:
                        r.granted = True
                else:
                    tcdm.arbitrate(cycle, reqs, collect=False)
                for s in streams:
                    if s.pending:
                        s.resolve()
                dma.resolve(cycle)
            cycle += 1
            if dm.finished and all(c.finished for c in cores):
                break
            if cycle >= max_cycles:
                raise RuntimeError(f"simulation exceeded {max_cycles} cycles (deadlock?)")
        self.cycle = cycle
        t0, t1 = barrier.releases[0], barrier.releases[n_tiles]
        per_core = [b - a for a, b in zip(marks[1], marks[n_tiles + 1])]
        for pc in per_core:
            assert pc.total() == t1 - t0, (pc, t1 - t0)
        tile = self.sched.tiles[0]
        return RunStats(
            config=self.config.name, M=self.problem.M, N=self.problem.N, K=self.problem.K,
            total_cycles=t1 - t0, full_cycles=cycle, per_core=per_core,
            conflicts_per_bank=list(tcdm.conflicts), conflict_cycles=tcdm.conflict_cycles,
            dma_busy_cycles=dma.busy_cycles, dma_beats=dma.beats_granted, dma_beats_lost=dma.beats_lost,
            n_tiles=n_tiles, tile_shape=(tile.tm, tile.tn, tile.K), compute_window=(t0, t1))


def simulate(config: ClusterConfig, problem: MatmulProblem, functional: bool = False,
             conflict_trace: Optional[Callable] = None, seq_trace: Optional[Callable] = None,
             rng_seed: Optional[int] = None) -> RunStats:
    """Run one matmul on one cluster configuration.

    With ``functional`` set, random FP64 inputs (seeded by ``config.seed``)
    are moved through the DMA and TCDM and the result is attached as
    ``stats.result`` together with the inputs.
    """
    data = None
    if functional:
        rng = np.random.default_rng(config.seed if rng_seed is None else rng_seed)
        data = {"A": rng.standard_normal((problem.M, problem.K)),
                "B": rng.standard_normal((problem.K, problem.N)),
                "C": np.full((problem.M, problem.N), np.nan)}
    cl = Cluster(config, problem, functional, conflict_trace, seq_trace, data)
    stats = cl.run()
    if functional:
        stats.data = data
    return stats


def run_with_data(config: ClusterConfig, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Functional run on given inputs; returns the C matrix written back by the DMA."""
    M, K = A.shape
    N = B.shape[1]
    data = {"A": A, "B": B, "C": np.full((M, N), np.nan)}
    Cluster(config, MatmulProblem(M, N, K, unroll=config.unroll), True, data=data).run()
    return data["C"]


def functional_check(problem: MatmulProblem, config: Optional[ClusterConfig] = None,
                     A: Optional[np.ndarray] = None, B: Optional[np.ndarray] = None,
                     seed: int = 0) -> float:
    """Max |C - reference| for a functional run; 0.0 when bitwise equal.

    Random standard-normal inputs are drawn from ``seed`` unless given.
    """
    from .kernels import reference_matmul

    config = config or PRESETS["Zonl48dobu"]
    rng = np.random.default_rng(seed)
    if A is None:
        A = rng.standard_normal((problem.M, problem.K))
    if B is None:
        B = rng.standard_normal((problem.K, problem.N))
    C = run_with_data(config, A, B)
    ref = reference_matmul(A, B)
    if not np.array_equal(np.isnan(C), np.isnan(ref)):
        return float("inf")
    diff = np.abs(C - ref)
    return float(np.nanmax(diff)) if diff.size else 0.0
