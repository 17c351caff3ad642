"""Stream-register address generators (one unit per stream register)."""

from __future__ import annotations

from collections import deque
from typing import Optional

from .isa import ConfigError, Direction, StreamConfig
from .memory import MemRequest, Tcdm


class IntegrityError(RuntimeError):
    """Simulator bookkeeping went inconsistent (a bug, not a config issue)."""


class StreamUnit:
    """Read streams prefetch into a queue of ``depth`` elements; write streams
    drain FPU results to memory. At most one request per unit per cycle; a
    request that loses arbitration is re-issued unchanged the next cycle.
    """

    def __init__(self, requester: int, tcdm: Tcdm, depth: int = 4, wb_slack: int = 0):
        if depth < 1:
            raise ConfigError("stream queue depth must be >= 1")
        self.requester = requester
        self.tcdm = tcdm
        self.depth = depth
        self.wb_cap = depth + wb_slack
        self.cfg: Optional[StreamConfig] = None
        self.addrs: list[int] = []
        self.banks: list[int] = []
        self.n = 0
        self.next = 0          # elements granted so far
        self.avail = 0         # read: elements queued for the FPU
        self.values: deque = deque()
        self.wbq: deque = deque()  # write: (ready_cycle, value)
        self.pending = False
        self.is_write = False
        self.req = MemRequest(requester, 0, False, 0)
        self.conflicts = 0
        self.requests = 0

    def configure(self, cfg: StreamConfig):
        if self.pending or self.avail or self.wbq:
            raise IntegrityError("stream reconfigured while active")
        tc = self.tcdm.cfg
        lo, hi = cfg.span()
        if lo < 0 or hi >= tc.total_bytes:
            raise ConfigError(f"stream footprint [{lo:#x}, {hi:#x}] outside the TCDM")
        self.cfg = cfg
        self.addrs = cfg.address_list()
        if any(a % tc.word_bytes for a in (cfg.base, *(d.stride for d in cfg.dims))):
            raise ConfigError("stream addresses must be word aligned")
        hb_bytes, bph, wb = tc.hyperbank_bytes, tc.banks_per_hyperbank, tc.word_bytes
        self.banks = [(a // hb_bytes) * bph + (a % hb_bytes) // wb % bph for a in self.addrs]
        self.n = len(self.addrs)
        self.next = 0
        self.is_write = cfg.direction is Direction.WRITE
        self.req.is_write = self.is_write
        self.values.clear()

    @property
    def done(self) -> bool:
        return self.next == self.n and not self.pending

    @property
    def drained(self) -> bool:
        return self.done and not self.wbq if self.is_write else self.done

    # -- FPU side ---------------------------------------------------------
    def pop(self):
        if not self.avail:
            raise IntegrityError("FPU consumed an element that was not granted")
        self.avail -= 1
        return self.values.popleft() if self.values else None

    def can_push(self) -> bool:
        return len(self.wbq) < self.wb_cap

    def push(self, ready_cycle: int, value=None):
        self.wbq.append((ready_cycle, value))

    # -- memory side ------------------------------------------------------
    def gen_request(self, cycle: int) -> Optional[MemRequest]:
        if self.pending:
            return self.req
        i = self.next
        if i == self.n:
            return None
        if self.is_write:
            if not self.wbq or self.wbq[0][0] > cycle:
                return None
        elif self.avail >= self.depth:
            return None
        req = self.req
        req.addr = self.addrs[i]
        req.bank = self.banks[i]
        self.pending = True
        self.requests += 1
        return req

    def on_grant(self):
        if not self.pending:
            raise IntegrityError("grant for a request that was never issued")
        self.pending = False
        self.next += 1
        data = self.tcdm.data
        if self.is_write:
            _, value = self.wbq.popleft()
            if data is not None:
                data[self.req.addr >> 3] = value
        else:
            self.avail += 1
            if data is not None:
                self.values.append(float(data[self.req.addr >> 3]))

    def on_conflict(self):
        if not self.pending:
            raise IntegrityError("conflict for a request that was never issued")
        self.conflicts += 1

    def resolve(self):
        if self.pending:
            if self.req.granted:
                self.on_grant()
            else:
                self.on_conflict()
