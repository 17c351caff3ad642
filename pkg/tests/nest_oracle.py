"""Loop-nest generator and a software reference expansion for sequencer tests."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Optional

from zonlsim import isa
from zonlsim.sequencer import Sequencer


@dataclass
class Nest:
    iters: int
    pre: list = field(default_factory=list)
    inner: Optional["Nest"] = None
    post: list = field(default_factory=list)

    def body_len(self) -> int:
        return len(self.pre) + (self.inner.body_len() if self.inner else 0) + len(self.post)

    def depth(self) -> int:
        return 1 + (self.inner.depth() if self.inner else 0)

    def static(self) -> list:
        """Program order as pushed by the control core."""
        out = [isa.frep(self.body_len(), self.iters)] + self.pre
        if self.inner:
            out += self.inner.static()
        return out + self.post

    def dynamic(self) -> list:
        once = self.pre + (self.inner.dynamic() if self.inner else []) + self.post
        return once * self.iters


def _insts(n: int) -> list:
    return [isa.fmul(i % 8) for i in range(n)]


def random_nest(rng: random.Random, max_depth: int = 4, max_body: int = 16, max_iters: int = 64,
                max_dynamic: int = 4000) -> Nest:
    """Random imperfect nest. Shared first/last instructions between levels
    (empty pre/post) are drawn often on purpose."""
    depth = rng.randint(1, max_depth)
    sizes = []
    room = max_body - 1  # keep at least one instruction for the innermost body
    for _ in range(depth - 1):
        pre = min(room, rng.choice([0, 0, 1, rng.randint(1, 3)]))
        room -= pre
        post = min(room, rng.choice([0, 0, 1, rng.randint(1, 3)]))
        room -= post
        sizes.append((pre, post))
    sizes.append((rng.randint(1, room + 1), 0))
    nest = None
    for pre, post in reversed(sizes):
        nest = Nest(1, _insts(pre), nest, _insts(post))
    # iteration counts: keep the dynamic length bounded
    node, levels = nest, []
    while node:
        levels.append(node)
        node = node.inner
    for lp in levels:
        lp.iters = rng.randint(1, max_iters)
    while len_dynamic(nest) > max_dynamic:
        lp = rng.choice(levels)
        lp.iters = max(1, lp.iters // 2)
    return nest


def len_dynamic(n: Nest) -> int:
    return n.iters * (len(n.pre) + len(n.post) + (len_dynamic(n.inner) if n.inner else 0))


def run_sequencer(program: list, capacity: int = 32, max_depth: int = 4, max_cycles: int = 10**7):
    """Drive a sequencer the way the core does: FREP configs are consumed
    for free, at most one other instruction is pushed per cycle, then one
    instruction issues. Returns [(cycle, inst)]."""
    seq = Sequencer(capacity, max_depth)
    pc = 0
    issued = []
    cycle = 0
    while pc < len(program) or not seq.idle:
        while pc < len(program):
            inst = program[pc]
            if inst.kind is isa.Kind.FREP_CFG:
                if not seq.push(inst):
                    break
                pc += 1
                continue
            if seq.push(inst):
                pc += 1
            break
        got = seq.step(cycle)
        seq.check_invariants()
        if got is not None:
            issued.append((cycle, got))
        cycle += 1
        if cycle > max_cycles:
            raise RuntimeError("sequencer made no progress")
    return issued
