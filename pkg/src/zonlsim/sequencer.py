"""FREP sequencer: ring-buffer replay of dynamically built loop nests.

Loop-body instructions are stored in a ring buffer when pushed by the
control core. FREP instructions register a loop controller whose base
pointer is the ring buffer's write pointer at registration time. Issue walks
the buffer one instruction per cycle; the starting/ending loop detectors
update the active loop index in the same cycle, so nests whose loops share
first or last instructions replay without bubbles.

Pointers are absolute (monotonic) indices; the physical slot is
``ptr % capacity``.
"""

from __future__ import annotations

from collections import deque
from typing import Callable, Optional

from .isa import ConfigError, FrepConfig, Instruction, Kind


class LoopState:
    __slots__ = ("cfg", "base_ptr", "end_ptr", "inst_cnt", "iter_cnt")

    def __init__(self, cfg: FrepConfig, base_ptr: int):
        self.cfg = cfg
        self.base_ptr = base_ptr
        # each body instruction is stored once, so the body spans max_inst slots
        self.end_ptr = base_ptr + cfg.max_inst
        self.inst_cnt = 0
        self.iter_cnt = 0

    @property
    def last_inst(self) -> bool:
        return self.inst_cnt == self.cfg.max_inst - 1

    @property
    def last_iter(self) -> bool:
        return self.iter_cnt == self.cfg.max_rpt - 1

    def __repr__(self):
        return (f"LoopState(base={self.base_ptr}, inst={self.inst_cnt}/{self.cfg.max_inst}, "
                f"iter={self.iter_cnt}/{self.cfg.max_rpt})")


def detect_starting_loops(raddr: int, loops: list[LoopState], loop_idx: int) -> int:
    """Innermost loop starting at ``raddr``; ``loop_idx`` if none starts there."""
    j = loop_idx
    while j + 1 < len(loops) and loops[j + 1].base_ptr == raddr:
        j += 1
    return j


def detect_ending_loops(loops: list[LoopState], loop_idx: int) -> int:
    """Innermost non-ending loop: one less than the outermost loop that ends
    on the current instruction. -1 means the whole nest ends."""
    j = loop_idx
    while j >= 0:
        lp = loops[j]
        if lp.inst_cnt != lp.cfg.max_inst - 1 or lp.iter_cnt != lp.cfg.max_rpt - 1:
            break
        j -= 1
    return j


TraceHook = Callable[[Optional[int], int, int, Instruction], None]


class Sequencer:
    """One nest at a time; up to ``max_depth`` loops per nest.

    Once every registered loop has its body captured, further pushes are
    refused until the nest retires (the control core stalls). A depth-1
    sequencer is the baseline FREP.
    """

    def __init__(self, capacity: int = 32, max_depth: int = 2, trace: Optional[TraceHook] = None):
        if capacity < 1 or max_depth < 1:
            raise ConfigError("sequencer capacity and depth must be >= 1")
        self.capacity = capacity
        self.max_depth = max_depth
        self.entries: list[Optional[Instruction]] = [None] * capacity
        self.wptr = 0
        self.raddr = 0
        self.loops: list[LoopState] = []
        self.loop_idx = -1
        self.bypass: deque[Instruction] = deque()
        self.trace = trace

    # -- input side -------------------------------------------------------
    def push(self, inst: Instruction) -> bool:
        """Accept an instruction from the control core; False means stall."""
        if inst.uses_int_rf:
            self.bypass.append(inst)
            return True
        loops = self.loops
        if inst.kind is Kind.FREP_CFG:
            cfg = inst.frep
            if cfg.max_inst > self.capacity:
                raise ConfigError(f"loop body of {cfg.max_inst} exceeds ring buffer of {self.capacity}")
            if loops:
                wptr = self.wptr
                if wptr >= loops[-1].end_ptr:
                    if any(wptr < lp.end_ptr for lp in loops):
                        raise ConfigError("sibling loops inside one nest are not supported")
                    return False  # wait for the current nest to retire
                if len(loops) >= self.max_depth:
                    raise ConfigError(f"loop nest deeper than {self.max_depth}")
                if wptr + cfg.max_inst > loops[-1].end_ptr:
                    raise ConfigError("overlapping, non-nested loop registration")
            self.loops.append(LoopState(cfg, self.wptr))
            return True
        if loops and self.wptr >= loops[0].end_ptr:
            return False
        oldest = loops[0].base_ptr if loops and loops[0].base_ptr < self.raddr else self.raddr
        if self.wptr - oldest >= self.capacity:
            return False
        self.entries[self.wptr % self.capacity] = inst
        self.wptr += 1
        return True

    # -- output side ------------------------------------------------------
    def peek(self) -> Optional[Instruction]:
        if self.bypass:
            return self.bypass[0]
        if self.raddr < self.wptr:
            return self.entries[self.raddr % self.capacity]
        return None

    @property
    def idle(self) -> bool:
        return not self.bypass and self.raddr == self.wptr and not self.loops

    def step(self, cycle: Optional[int] = None) -> Optional[Instruction]:
        """Issue one instruction (or nothing if empty) and advance the nest."""
        if self.bypass:
            inst = self.bypass.popleft()
            if self.trace:
                self.trace(cycle, -1, self.loop_idx, inst)
            return inst
        raddr = self.raddr
        if raddr == self.wptr:
            return None
        inst = self.entries[raddr % self.capacity]
        loops = self.loops
        if not loops:
            self.raddr = raddr + 1
            if self.trace:
                self.trace(cycle, raddr, -1, inst)
            return inst

        li = detect_starting_loops(raddr, loops, self.loop_idx)
        if self.trace:
            self.trace(cycle, raddr, li, inst)
        if li < 0:
            self.loop_idx = li
            self.raddr = raddr + 1
            return inst

        inel = detect_ending_loops(loops, li)
        wrap_inel = False
        inner_last = True
        i = li
        while i >= 0 and inner_last:
            lp = loops[i]
            was_last_iter = lp.iter_cnt == lp.cfg.max_rpt - 1
            if lp.inst_cnt == lp.cfg.max_inst - 1:
                lp.inst_cnt = 0
                lp.iter_cnt = 0 if was_last_iter else lp.iter_cnt + 1
                if i == inel:
                    wrap_inel = True
            else:
                lp.inst_cnt += 1
            inner_last = was_last_iter
            i -= 1

        if inel < 0:
            loops.clear()
            self.loop_idx = -1
            self.raddr = raddr + 1
        elif wrap_inel:
            self.loop_idx = inel
            self.raddr = loops[inel].base_ptr
        else:
            self.loop_idx = inel
            self.raddr = raddr + 1
        return inst

    def check_invariants(self):
        for lp in self.loops:
            assert 0 <= lp.inst_cnt < lp.cfg.max_inst, lp
            assert 0 <= lp.iter_cnt < lp.cfg.max_rpt, lp
        assert len(self.loops) <= self.max_depth
        for a, b in zip(self.loops, self.loops[1:]):
            assert a.base_ptr <= b.base_ptr and b.end_ptr <= a.end_ptr
        assert -1 <= self.loop_idx < max(1, len(self.loops))
