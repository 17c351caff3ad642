"""Abstract instruction model.

Instructions are structured records rather than bit encodings: the simulator
only needs to know what an instruction touches (streams, accumulator
registers, integer register file) and, for loop/stream configuration, the
payload it carries.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Optional


class ConfigError(ValueError):
    """Raised for malformed descriptors and unsupported configurations."""


class Kind(enum.Enum):
    FP_COMPUTE = "FpCompute"
    FREP_CFG = "FrepCfg"
    SSR_CFG = "SsrCfg"
    INT_LOOP_MGMT = "IntLoopMgmt"
    OTHER = "Other"


class Op(enum.Enum):
    FMUL = "fmul"
    FMADD = "fmadd"
    FADD = "fadd"
    NOP = "nop"
    FREP = "frep"
    SCFGW = "scfgw"
    ADDI = "addi"
    BNE = "bne"
    FMV_X_D = "fmv.x.d"
    FMV_D_X = "fmv.d.x"
    # pseudo-ops used by the generated programs
    DELAY = "delay"
    FENCE = "fence"
    BARRIER = "barrier"


class Direction(enum.Enum):
    READ = "read"
    WRITE = "write"


# Stream registers: S0/S1 read (ft0/ft1), S2 write (ft2).
S0, S1, S2 = 0, 1, 2
N_STREAMS = 3
STREAM_REGS = {"ft0": S0, "ft1": S1, "ft2": S2}
READ_STREAMS = (S0, S1)
WRITE_STREAM = S2

_FP_COMPUTE_OPS = {Op.FMUL: 2, Op.FMADD: 3, Op.FADD: 2}
_INT_OPS = {Op.ADDI, Op.BNE}
_INT_RF_FP_OPS = {Op.FMV_X_D, Op.FMV_D_X}
_PSEUDO_OPS = {Op.DELAY, Op.FENCE, Op.BARRIER, Op.NOP}


@dataclass(frozen=True)
class FrepConfig:
    """Hardware loop descriptor: body length and iteration count."""

    max_inst: int
    max_rpt: int

    def __post_init__(self):
        if self.max_inst < 1 or self.max_rpt < 1:
            raise ConfigError(f"FREP needs max_inst >= 1 and max_rpt >= 1, got {self}")


@dataclass(frozen=True)
class StreamDim:
    bound: int
    stride: int


@dataclass(frozen=True)
class StreamConfig:
    """Affine address pattern of up to 4 nested levels, innermost first."""

    base: int
    dims: tuple[StreamDim, ...]
    direction: Direction = Direction.READ

    def __post_init__(self):
        if not 1 <= len(self.dims) <= 4:
            raise ConfigError(f"stream needs 1..4 dimensions, got {len(self.dims)}")
        if any(d.bound < 1 for d in self.dims):
            raise ConfigError("stream bounds must be >= 1")
        if self.base % 8 or any(d.stride % 8 for d in self.dims):
            raise ConfigError("stream base and strides must be 8-byte aligned")

    @property
    def n_elements(self) -> int:
        n = 1
        for d in self.dims:
            n *= d.bound
        return n

    def addresses(self) -> Iterator[int]:
        """Addresses in issue order (innermost dimension varies fastest)."""
        bounds = [range(d.bound) for d in reversed(self.dims)]
        strides = [d.stride for d in reversed(self.dims)]
        for idx in itertools.product(*bounds):
            yield self.base + sum(i * s for i, s in zip(idx, strides))

    def address_list(self) -> list[int]:
        # vectorised form of addresses(), used on the hot path
        addrs = [self.base]
        for d in self.dims:
            addrs = [a + i * d.stride for i in range(d.bound) for a in addrs]
        return addrs

    def span(self) -> tuple[int, int]:
        lo = self.base + sum(min(0, (d.bound - 1) * d.stride) for d in self.dims)
        hi = self.base + sum(max(0, (d.bound - 1) * d.stride) for d in self.dims)
        return lo, hi


@dataclass(frozen=True, eq=False)
class Instruction:
    kind: Kind
    op: Op
    reads_streams: frozenset = frozenset()
    writes_stream: Optional[int] = None
    uses_int_rf: bool = False
    frep: Optional[FrepConfig] = None
    rd: Optional[int] = None        # accumulator written (None when writing a stream)
    acc_src: Optional[int] = None   # accumulator read (fmadd rs3)
    penalty: int = 0                # extra cycles (taken branch)
    cycles: int = 1                 # DELAY length
    ssr: Optional[tuple[int, StreamConfig]] = None
    text: str = field(default="", compare=False)

    def __post_init__(self):
        if (self.frep is not None) != (self.kind is Kind.FREP_CFG):
            raise ConfigError("frep payload present iff kind is FrepCfg")
        if self.kind is Kind.FP_COMPUTE:
            if len(self.reads_streams) > 2 or not self.reads_streams <= set(READ_STREAMS):
                raise ConfigError(f"compute reads at most S0/S1, got {set(self.reads_streams)}")
            if self.writes_stream not in (None, WRITE_STREAM):
                raise ConfigError("compute writes only S2")

    def __str__(self):
        return self.text or self.op.value


def _reg(name: str) -> Optional[int]:
    """Accumulator index for c<i> / ft<i> (i >= 3) names."""
    if name.startswith("c") and name[1:].isdigit():
        return int(name[1:])
    if name.startswith("ft") and name[2:].isdigit() and int(name[2:]) >= 3:
        return 100 + int(name[2:])
    raise ConfigError(f"unknown FP register {name!r}")


def classify(desc: Mapping) -> Instruction:
    """Partially decode a raw descriptor such as
    ``{"op": "fmadd", "rd": "ft2", "rs1": "ft0", "rs2": "ft1", "rs3": "c3"}``.
    """
    try:
        op = Op(desc["op"])
    except (KeyError, ValueError):
        raise ConfigError(f"malformed descriptor {dict(desc)!r}") from None
    text = desc.get("text") or _render(desc)

    if op is Op.FREP:
        cfg = FrepConfig(int(desc.get("max_inst", 0)), int(desc.get("max_rpt", 0)))
        return Instruction(Kind.FREP_CFG, op, frep=cfg, text=text)

    if op in _FP_COMPUTE_OPS:
        srcs = [desc.get(f"rs{i}") for i in range(1, _FP_COMPUTE_OPS[op] + 1)]
        if any(s is None for s in srcs) or "rd" not in desc:
            raise ConfigError(f"{op.value} needs rd and {_FP_COMPUTE_OPS[op]} sources")
        reads, acc_src = set(), None
        for s in srcs:
            if s in STREAM_REGS:
                if STREAM_REGS[s] == WRITE_STREAM:
                    raise ConfigError("ft2 is a write-only stream register")
                reads.add(STREAM_REGS[s])
            else:
                if acc_src is not None:
                    raise ConfigError("at most one accumulator source is modeled")
                acc_src = _reg(s)
        rd = desc["rd"]
        if rd in STREAM_REGS:
            if STREAM_REGS[rd] != WRITE_STREAM:
                raise ConfigError("ft0/ft1 are read-only stream registers")
            return Instruction(Kind.FP_COMPUTE, op, frozenset(reads), WRITE_STREAM,
                               acc_src=acc_src, text=text)
        return Instruction(Kind.FP_COMPUTE, op, frozenset(reads), None, rd=_reg(rd),
                           acc_src=acc_src, text=text)

    if op is Op.SCFGW:
        ssr = desc.get("ssr")
        return Instruction(Kind.SSR_CFG, op, uses_int_rf=True, ssr=ssr, text=text)

    if op in _INT_OPS:
        return Instruction(Kind.INT_LOOP_MGMT, op, uses_int_rf=True,
                           penalty=int(desc.get("penalty", 0)), text=text)

    if op in _INT_RF_FP_OPS:
        return Instruction(Kind.OTHER, op, uses_int_rf=True, text=text)

    if op is Op.DELAY:
        n = int(desc.get("cycles", 1))
        if n < 1:
            raise ConfigError("delay needs cycles >= 1")
        return Instruction(Kind.OTHER, op, cycles=n, text=text)
    return Instruction(Kind.OTHER, op, text=text)


def _render(desc: Mapping) -> str:
    op = desc["op"]
    if op == "frep":
        return f"frep {desc.get('max_rpt')}, {desc.get('max_inst')}"
    regs = [desc[k] for k in ("rd", "rs1", "rs2", "rs3") if k in desc]
    return f"{op} {', '.join(regs)}" if regs else str(op)


# Convenience constructors used by the kernel generator.

def fmul(acc: int) -> Instruction:
    return classify({"op": "fmul", "rd": f"c{acc}", "rs1": "ft0", "rs2": "ft1"})


def fmadd(acc: int, to_stream: bool = False) -> Instruction:
    rd = "ft2" if to_stream else f"c{acc}"
    return classify({"op": "fmadd", "rd": rd, "rs1": "ft0", "rs2": "ft1", "rs3": f"c{acc}"})


def frep(max_inst: int, max_rpt: int) -> Instruction:
    return classify({"op": "frep", "max_inst": max_inst, "max_rpt": max_rpt})


def addi() -> Instruction:
    return classify({"op": "addi", "text": "addi t0, t0, -1"})


def bne(penalty: int) -> Instruction:
    return classify({"op": "bne", "penalty": penalty, "text": "bne t0, zero, outer"})


def scfgw(stream: Optional[int] = None, cfg: Optional[StreamConfig] = None, what: str = "") -> Instruction:
    ssr = (stream, cfg) if cfg is not None else None
    return classify({"op": "scfgw", "ssr": ssr, "text": f"scfgw {what}".rstrip()})


def delay(cycles: int) -> Instruction:
    return classify({"op": "delay", "cycles": cycles, "text": f"delay {cycles}"})


def fence() -> Instruction:
    return classify({"op": "fence", "text": "fpu_fence"})


def barrier() -> Instruction:
    return classify({"op": "barrier", "text": "cluster_barrier"})
