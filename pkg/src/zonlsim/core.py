"""Single-issue control core feeding an FPU through the FREP sequencer."""

from __future__ import annotations

import enum
from dataclasses import dataclass, fields
from fractions import Fraction
from typing import Optional, Sequence

from .isa import Instruction, Kind, Op, N_STREAMS, WRITE_STREAM
from .memory import Tcdm
from .sequencer import Sequencer
from .streams import StreamUnit


class Outcome(enum.Enum):
    ISSUED_COMPUTE = "IssuedCompute"
    ISSUED_OTHER = "IssuedOther"
    STALL_STARVED = "StreamStarved"
    STALL_RAW = "Raw"
    STALL_WB = "WbBlocked"
    IDLE_LOOP = "LoopMgmt"
    IDLE = "Idle"


@dataclass
class CoreCounters:
    busy: int = 0
    loop_overhead: int = 0
    conflict_stall: int = 0
    raw_stall: int = 0
    startup: int = 0

    def total(self) -> int:
        return self.busy + self.loop_overhead + self.conflict_stall + self.raw_stall + self.startup

    def copy(self) -> "CoreCounters":
        return CoreCounters(**{f.name: getattr(self, f.name) for f in fields(self)})

    def __sub__(self, other: "CoreCounters") -> "CoreCounters":
        return CoreCounters(**{f.name: getattr(self, f.name) - getattr(other, f.name) for f in fields(self)})


def fma(a: float, b: float, c: float) -> float:
    """Fused multiply-add with a single rounding."""
    return float(Fraction(a) * Fraction(b) + Fraction(c))


class Barrier:
    """Cluster-wide barrier with a fixed release latency."""

    def __init__(self, n_parties: int, latency: int = 1):
        self.n = n_parties
        self.latency = latency
        self.arrived = 0
        self.generation = 0
        self.release_at: Optional[int] = None
        self.releases: list[int] = []

    def arrive(self, cycle: int) -> int:
        gen = self.generation
        self.arrived += 1
        if self.arrived == self.n:
            self.release_at = cycle + self.latency
        return gen

    def tick(self, cycle: int):
        if self.release_at is not None and cycle >= self.release_at:
            self.release_at = None
            self.arrived = 0
            self.generation += 1
            self.releases.append(cycle)


class Core:
    """A compute core: in-order front end, sequencer, FPU pipeline, 3 streams.

    Per cycle the front end runs first (so a freshly buffered instruction can
    issue in the same cycle), then the FPU issue stage, then the streams
    present their memory requests.
    """

    def __init__(self, cid: int, program: Sequence[Instruction], tcdm: Tcdm, barrier: Barrier,
                 seq_capacity: int = 32, seq_depth: int = 2, fpu_latency: int = 3,
                 stream_depth: int = 4, functional: bool = False, seq_trace=None):
        self.id = cid
        self.program = list(program)
        self.pc = 0
        self.tcdm = tcdm
        self.barrier = barrier
        self.seq = Sequencer(seq_capacity, seq_depth, trace=seq_trace)
        self.latency = fpu_latency
        self.streams = [StreamUnit(cid * N_STREAMS + s, tcdm, stream_depth,
                                   wb_slack=fpu_latency if s == WRITE_STREAM else 0)
                        for s in range(N_STREAMS)]
        self.functional = functional
        self.reg_ready: dict[int, int] = {}
        self.regs: dict[int, float] = {}
        self.last_issue = -1
        self.fe_wait = 0
        self.fe_loop = False
        self.barrier_gen: Optional[int] = None
        self.phase_started = False
        self.counters = CoreCounters()
        self.outcomes = None  # optional list for debugging

    @property
    def finished(self) -> bool:
        return (self.pc >= len(self.program) and not self.fe_wait and self.seq.idle
                and self._drained(1 << 62))

    def _drained(self, cycle: int) -> bool:
        return self.last_issue + self.latency <= cycle and all(s.drained for s in self.streams)

    # -- front end --------------------------------------------------------
    def frontend(self, cycle: int):
        if self.fe_wait:
            self.fe_wait -= 1
            return
        self.fe_loop = False
        prog = self.program
        seq = self.seq
        while self.pc < len(prog):
            inst = prog[self.pc]
            kind = inst.kind
            if kind is Kind.FREP_CFG:
                if not seq.push(inst):
                    return
                self.pc += 1
                continue  # consumed by the sequencer without an issue slot
            if kind is Kind.FP_COMPUTE or (kind is Kind.OTHER and inst.uses_int_rf):
                if seq.push(inst):
                    self.pc += 1
                return
            if kind is Kind.INT_LOOP_MGMT:
                self.pc += 1
                self.fe_wait = inst.penalty
                self.fe_loop = True
                return
            if kind is Kind.SSR_CFG:
                self.pc += 1
                if inst.ssr is not None:
                    sid, cfg = inst.ssr
                    self.streams[sid].configure(cfg)
                    self.phase_started = False
                return
            op = inst.op
            if op is Op.DELAY:
                self.pc += 1
                self.fe_wait = inst.cycles - 1
                return
            if op is Op.FENCE:
                if not (seq.idle and self._drained(cycle)):
                    return
                self.pc += 1
                continue
            if op is Op.BARRIER:
                if self.barrier_gen is None:
                    self.barrier_gen = self.barrier.arrive(cycle)
                    return
                if self.barrier.generation == self.barrier_gen:
                    return
                self.barrier_gen = None
                self.phase_started = False
                self.pc += 1
                continue
            # NOP and unknown pseudo-ops take one front-end cycle
            self.pc += 1
            return

    # -- FPU issue --------------------------------------------------------
    def issue(self, cycle: int) -> Outcome:
        c = self.counters
        seq = self.seq
        head = seq.peek()
        if head is None:
            if self.fe_loop:
                c.loop_overhead += 1
                return Outcome.IDLE_LOOP
            c.startup += 1
            return Outcome.IDLE
        if head.kind is not Kind.FP_COMPUTE:
            seq.step(cycle)
            c.loop_overhead += 1
            return Outcome.ISSUED_OTHER
        acc = head.acc_src
        if acc is not None and self.reg_ready.get(acc, 0) > cycle:
            c.raw_stall += 1
            return Outcome.STALL_RAW
        streams = self.streams
        for s in head.reads_streams:
            if not streams[s].avail:
                if self.phase_started:
                    c.conflict_stall += 1
                else:
                    c.startup += 1
                return Outcome.STALL_STARVED
        ws = head.writes_stream
        if ws is not None and not streams[ws].can_push():
            if self.phase_started:
                c.conflict_stall += 1
            else:
                c.startup += 1
            return Outcome.STALL_WB
        seq.step(cycle)
        if self.functional:
            ops = [streams[s].pop() for s in sorted(head.reads_streams)]
            if head.op is Op.FMUL:
                val = ops[0] * ops[1]
            elif head.op is Op.FADD:
                val = ops[0] + ops[1]
            else:
                val = fma(ops[0], ops[1], self.regs[acc])
        else:
            for s in head.reads_streams:
                streams[s].avail -= 1
            val = None
        if ws is not None:
            streams[ws].push(cycle + self.latency, val)
        else:
            self.reg_ready[head.rd] = cycle + self.latency
            if self.functional:
                self.regs[head.rd] = val
        self.last_issue = cycle
        self.phase_started = True
        c.busy += 1
        return Outcome.ISSUED_COMPUTE

    def core_step(self, cycle: int) -> Outcome:
        """Front end plus issue for one cycle (memory handled by the cluster)."""
        self.frontend(cycle)
        out = self.issue(cycle)
        if self.outcomes is not None:
            self.outcomes.append(out)
        return out
