"""Banked TCDM, core/DMA interconnect arbitration and the DMA engine."""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .isa import ConfigError

DMA = -1  # requester id of the DMA engine
DMA_BEAT_BYTES = 64


class Interconnect(enum.Enum):
    FULLY_CONNECTED = "fc"
    DOBU = "dobu"


class Policy(enum.Enum):
    ROUND_ROBIN = "round-robin"
    DMA_PRIORITY = "dma-priority"
    CORE_PRIORITY = "core-priority"


@dataclass(frozen=True)
class TcdmConfig:
    total_bytes: int = 128 * 1024
    banks_per_hyperbank: int = 32
    n_hyperbanks: int = 1
    interconnect: Interconnect = Interconnect.FULLY_CONNECTED
    banks_per_superbank: int = 8
    word_bytes: int = 8

    def __post_init__(self):
        if self.interconnect is Interconnect.FULLY_CONNECTED and self.n_hyperbanks != 1:
            raise ConfigError("a fully-connected TCDM has a single hyperbank")
        if self.banks_per_hyperbank % self.banks_per_superbank:
            raise ConfigError("hyperbank width must be a multiple of the superbank width")
        if self.total_bytes % (self.n_banks * self.word_bytes):
            raise ConfigError("capacity must split evenly into bank rows")

    @property
    def n_banks(self) -> int:
        return self.banks_per_hyperbank * self.n_hyperbanks

    @property
    def hyperbank_bytes(self) -> int:
        return self.total_bytes // self.n_hyperbanks

    @property
    def rows_per_bank(self) -> int:
        return self.total_bytes // (self.n_banks * self.word_bytes)

    @property
    def row_bytes(self) -> int:
        """Bytes spanned by one row across a hyperbank's banks."""
        return self.banks_per_hyperbank * self.word_bytes

    @classmethod
    def baseline32(cls) -> "TcdmConfig":
        return cls(128 * 1024, 32, 1, Interconnect.FULLY_CONNECTED)

    @classmethod
    def fc64(cls) -> "TcdmConfig":
        return cls(128 * 1024, 64, 1, Interconnect.FULLY_CONNECTED)

    @classmethod
    def dobu64(cls) -> "TcdmConfig":
        return cls(128 * 1024, 32, 2, Interconnect.DOBU)

    @classmethod
    def dobu48(cls) -> "TcdmConfig":
        return cls(96 * 1024, 24, 2, Interconnect.DOBU)


def map_addr(addr: int, cfg: TcdmConfig) -> tuple[int, int, int]:
    """Byte address -> (hyperbank, bank within hyperbank, row)."""
    if addr < 0 or addr >= cfg.total_bytes:
        raise ConfigError(f"address {addr:#x} outside the {cfg.total_bytes} B TCDM")
    if addr % cfg.word_bytes:
        raise ConfigError(f"address {addr:#x} is not word aligned")
    hb, off = divmod(addr, cfg.hyperbank_bytes)
    row, bank = divmod(off // cfg.word_bytes, cfg.banks_per_hyperbank)
    return hb, bank, row


def global_bank(addr: int, cfg: TcdmConfig) -> int:
    hb, bank, _ = map_addr(addr, cfg)
    return hb * cfg.banks_per_hyperbank + bank


class MemRequest:
    """A bank access attempt. ``granted`` is written by the arbiter."""

    __slots__ = ("requester", "addr", "is_write", "width_bits", "bank", "granted")

    def __init__(self, requester: int, addr: int, is_write: bool, bank: int, width_bits: int = 64):
        self.requester = requester
        self.addr = addr
        self.is_write = is_write
        self.width_bits = width_bits
        self.bank = bank  # global bank id; first bank of the superbank for DMA beats
        self.granted = False

    @property
    def is_dma(self) -> bool:
        return self.requester == DMA

    def __repr__(self):
        who = "dma" if self.is_dma else f"core{self.requester // 3}.p{self.requester % 3}"
        return f"MemRequest({who}, {self.addr:#x}, {'W' if self.is_write else 'R'}, bank={self.bank})"


@dataclass
class BankGrant:
    bank: int
    winner: int
    losers: list


class Tcdm:
    """Per-cycle arbitration over single-ported banks.

    Core requests reach banks through the crossbar (and, for Dobu, the
    hyperbank demux); a DMA beat claims a whole superbank through the mux in
    front of it and wins or loses atomically.
    """

    def __init__(self, cfg: TcdmConfig, policy: Policy = Policy.ROUND_ROBIN, n_requesters: int = 24,
                 functional: bool = False, trace: Optional[Callable] = None):
        self.cfg = cfg
        self.policy = policy
        self.n_requesters = n_requesters
        self.rr_ptr = [n_requesters - 1] * cfg.n_banks
        self.mux_last_dma = [False] * (cfg.n_banks // cfg.banks_per_superbank)
        self.conflicts = [0] * cfg.n_banks  # lost requests per bank
        self.conflict_cycles = 0
        self.data = np.zeros(cfg.total_bytes // cfg.word_bytes) if functional else None
        self.trace = trace

    def bank_of(self, addr: int) -> int:
        return global_bank(addr, self.cfg)

    def request(self, requester: int, addr: int, is_write: bool) -> MemRequest:
        if requester == DMA:
            if addr % DMA_BEAT_BYTES:
                raise ConfigError(f"DMA beat {addr:#x} is not superbank aligned")
            return MemRequest(DMA, addr, is_write, self.bank_of(addr), 512)
        return MemRequest(requester, addr, is_write, self.bank_of(addr))

    def arbitrate(self, cycle: int, requests: Sequence[MemRequest], collect: bool = True):
        """Grant at most one requester per bank. Sets ``req.granted``.

        Returns the list of BankGrant records when ``collect`` is set,
        otherwise the number of lost requests.
        """
        sb_w = self.cfg.banks_per_superbank
        by_bank: dict[int, list] = {}
        dmas = []
        for r in requests:
            if r.requester == DMA:
                dmas.append(r)
            else:
                lst = by_bank.get(r.bank)
                if lst is None:
                    by_bank[r.bank] = [r]
                else:
                    lst.append(r)
        records: dict[int, BankGrant] = {}
        dma_lost_at: list[int] = []
        lost = 0
        any_conflict = False

        for d in dmas:
            sb = d.bank // sb_w
            banks = range(sb * sb_w, sb * sb_w + sb_w)
            contended = [b for b in banks if b in by_bank]
            if not contended:
                d.granted = True
                if collect:
                    for b in banks:
                        records[b] = BankGrant(b, DMA, [])
                continue
            any_conflict = True
            if self.policy is Policy.DMA_PRIORITY:
                dma_wins = True
            elif self.policy is Policy.CORE_PRIORITY:
                dma_wins = False
            else:
                dma_wins = not self.mux_last_dma[sb]
            self.mux_last_dma[sb] = dma_wins
            if dma_wins:
                d.granted = True
                for b in banks:
                    losers = by_bank.pop(b, ())
                    for r in losers:
                        r.granted = False
                    if losers:
                        lost += len(losers)
                        self._record_loss(cycle, b, DMA, losers)
                    if collect:
                        records[b] = BankGrant(b, DMA, [r.requester for r in losers])
            else:
                d.granted = False
                lost += 1
                self.conflicts[contended[0]] += 1
                if self.trace is not None:
                    self.trace(cycle, contended[0], by_bank[contended[0]][0].requester, 1)
                dma_lost_at.append(contended[0])

        n = self.n_requesters
        rr = self.rr_ptr
        for b, reqs in by_bank.items():
            if len(reqs) == 1:
                w = reqs[0]
                w.granted = True
                losers = ()
            else:
                any_conflict = True
                p = rr[b]
                w = min(reqs, key=lambda r: (r.requester - p - 1) % n)
                rr[b] = w.requester
                w.granted = True
                losers = [r for r in reqs if r is not w]
                for r in losers:
                    r.granted = False
                lost += len(losers)
                self._record_loss(cycle, b, w.requester, losers)
            if collect:
                records[b] = BankGrant(b, w.requester, [r.requester for r in losers])
        if collect:
            for b in dma_lost_at:
                records[b].losers.append(DMA)
        if any_conflict:
            self.conflict_cycles += 1
        if collect:
            return [records[b] for b in sorted(records)]
        return lost

    def _record_loss(self, cycle, bank, winner, losers):
        self.conflicts[bank] += len(losers)
        if self.trace is not None:
            self.trace(cycle, bank, winner, len(losers))

    # functional data access
    def read(self, addr: int) -> float:
        return float(self.data[addr >> 3])

    def write(self, addr: int, value: float):
        self.data[addr >> 3] = value


class DmaTransfer:
    """One descriptor: ``len`` bytes moved in 64 B superbank beats.

    ``dst`` is the TCDM side. Beats are ``stride`` bytes apart (64 for a
    contiguous block). Functional mode: ``payload`` supplies 8 words per
    beat for inbound transfers; ``sink(beat, words)`` receives outbound data.
    """

    def __init__(self, dst: int, length: int, to_tcdm: bool = True, stride: int = DMA_BEAT_BYTES,
                 src: int = 0, payload: Optional[list] = None, sink: Optional[Callable] = None,
                 beats: Optional[list[int]] = None, tag: str = ""):
        if beats is None:
            if dst % DMA_BEAT_BYTES or length % DMA_BEAT_BYTES or stride % DMA_BEAT_BYTES or length <= 0:
                raise ConfigError(f"DMA descriptor not superbank aligned: dst={dst:#x} len={length}")
            beats = [dst + i * stride for i in range(length // DMA_BEAT_BYTES)]
        elif any(b % DMA_BEAT_BYTES for b in beats):
            raise ConfigError("DMA beat addresses must be superbank aligned")
        self.src = src
        self.beats = beats
        self.to_tcdm = to_tcdm
        self.payload = payload
        self.sink = sink
        self.tag = tag
        self.next_beat = 0
        self.start_cycle: Optional[int] = None
        self.done_cycle: Optional[int] = None

    @property
    def n_beats(self) -> int:
        return len(self.beats)

    @property
    def done(self) -> bool:
        return self.next_beat == len(self.beats)


class DmaEngine:
    """Issues one 512-bit beat per cycle; a losing beat retries unchanged."""

    def __init__(self, tcdm: Tcdm):
        self.tcdm = tcdm
        self.queue: deque[DmaTransfer] = deque()
        self.pending: Optional[MemRequest] = None
        self.completions: list[tuple[int, DmaTransfer]] = []
        self.busy_cycles = 0
        self.beats_granted = 0
        self.beats_lost = 0
        self._bank_cache: dict[int, int] = {}

    def submit(self, xfer: DmaTransfer):
        self.queue.append(xfer)

    @property
    def idle(self) -> bool:
        return not self.queue

    def gen_request(self, cycle: int) -> Optional[MemRequest]:
        if not self.queue:
            return None
        x = self.queue[0]
        if x.start_cycle is None:
            x.start_cycle = cycle
        if self.pending is None:
            addr = x.beats[x.next_beat]
            bank = self._bank_cache.get(addr)
            if bank is None:
                bank = self._bank_cache[addr] = self.tcdm.request(DMA, addr, x.to_tcdm).bank
            self.pending = MemRequest(DMA, addr, x.to_tcdm, bank, 512)
        self.busy_cycles += 1
        return self.pending

    def resolve(self, cycle: int):
        req = self.pending
        if req is None:
            return
        if not req.granted:
            self.beats_lost += 1
            return
        x = self.queue[0]
        data = self.tcdm.data
        if data is not None:
            w0 = req.addr >> 3
            if x.to_tcdm:
                if x.payload is not None:
                    data[w0:w0 + 8] = x.payload[x.next_beat]
            elif x.sink is not None:
                x.sink(x.next_beat, data[w0:w0 + 8].copy())
        x.next_beat += 1
        self.beats_granted += 1
        self.pending = None
        if x.done:
            x.done_cycle = cycle
            self.completions.append((cycle, x))
            self.queue.popleft()


def dma_transfer(tcdm: Tcdm, descriptor: dict, max_cycles: int = 1_000_000,
                 other_requests: Optional[Callable[[int], list]] = None) -> DmaTransfer:
    """Run a single descriptor to completion against ``tcdm``.

    ``other_requests(cycle)`` may inject competing core requests (each call
    returns fresh MemRequests) to model a mis-scheduled transfer.
    """
    direction = descriptor.get("direction", "in")
    xfer = DmaTransfer(descriptor["dst"], descriptor["len"], to_tcdm=direction == "in",
                       stride=descriptor.get("stride", DMA_BEAT_BYTES), src=descriptor.get("src", 0))
    eng = DmaEngine(tcdm)
    eng.submit(xfer)
    cycle = 0
    while not eng.idle:
        if cycle >= max_cycles:
            raise RuntimeError("DMA transfer did not complete")
        reqs = list(other_requests(cycle)) if other_requests else []
        d = eng.gen_request(cycle)
        tcdm.arbitrate(cycle, reqs + [d], collect=False)
        eng.resolve(cycle)
        cycle += 1
    return xfer
