"""Matmul kernel and double-buffered tile schedule generation.

Data layout: each tile buffer holds A, B and C in three 8-bank groups (one
superbank each). Inside a group, a "group row" is the 64 B slice of one
TCDM row that falls in those 8 banks, i.e. exactly one DMA beat.

    A (tm x K):  word (r, k) -> group row (r // 8) * K + k, bank r % 8
    B (K x tn):  word (k, n) -> group row k * NG + n // 8,  bank n % 8
    C (tm x tn): word (r, n) -> group row r * NG + n // 8,  bank n % 8

with NG = ceil(tn / 8). Core c owns tile rows c, c + 8, ... so its A reads
always hit bank c of the A group. B and C accesses of different cores are
spread over the 8 banks of their groups by starting core c ``c`` cycles
after core 0, which keeps the 8 lockstep cores on distinct banks.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import isa
from .isa import ConfigError, Direction, Instruction, Kind, StreamConfig, StreamDim
from .memory import Interconnect, TcdmConfig

N_GROUPS_PER_BUFFER = 3  # A, B, C
GROUP_A, GROUP_B, GROUP_C = 0, 1, 2


class Variant(enum.Enum):
    BASELINE_LOOP = "baseline"   # inner FREP, outer loop managed by integer code
    INNER_FREP = "inner-frep"    # inner FREP, outer loop unrolled in the program
    ZONL_NEST = "zonl"           # outer and inner loops both mapped to FREP


@dataclass(frozen=True)
class MatmulProblem:
    M: int
    N: int
    K: int
    tile_m: Optional[int] = None
    tile_n: Optional[int] = None
    tile_k: Optional[int] = None
    unroll: int = 8

    def __post_init__(self):
        if min(self.M, self.N, self.K) < 1:
            raise ConfigError("matrix dimensions must be positive")
        if self.K < 2:
            raise ConfigError("K >= 2 is required to peel the first and last iterations")
        if self.tile_k not in (None, self.K):
            raise ConfigError("tiling along K is not supported; tile_k must equal K")
        if not 1 <= self.unroll <= 8:
            raise ConfigError("unroll must be between 1 and 8 (one 8-bank group per matrix)")

    @classmethod
    def parse(cls, text: str, **kw) -> "MatmulProblem":
        try:
            m, n, k = (int(x) for x in text.lower().split("x"))
        except ValueError:
            raise ConfigError(f"size must look like MxNxK, got {text!r}") from None
        return cls(m, n, k, **kw)

    @property
    def flops(self) -> int:
        return 2 * self.M * self.N * self.K


@dataclass(frozen=True)
class BufferLayout:
    """Where one of the two tile buffers lives in the TCDM."""

    index: int
    hyperbank: int
    group_base: tuple[int, int, int]  # byte address of group row 0 for A, B, C
    rows: int                         # group rows available per matrix
    row_bytes: int

    def addr(self, group: int, grow: int, bank: int = 0) -> int:
        if grow >= self.rows:
            raise ConfigError(f"group row {grow} exceeds buffer capacity of {self.rows} rows")
        return self.group_base[group] + grow * self.row_bytes + bank * 8


def buffer_layouts(tcdm: TcdmConfig) -> tuple[BufferLayout, BufferLayout]:
    """Place the two tile buffers.

    Dobu: one buffer per hyperbank. Fully connected with at least 6 groups:
    the buffers use disjoint superbanks. Otherwise both buffers share the
    same three superbanks and split the rows.
    """
    sb_bytes = tcdm.banks_per_superbank * tcdm.word_bytes
    groups = tcdm.banks_per_hyperbank // tcdm.banks_per_superbank
    if groups < N_GROUPS_PER_BUFFER:
        raise ConfigError("a hyperbank needs at least 3 superbanks (A, B, C)")
    rows = tcdm.rows_per_bank
    rb = tcdm.row_bytes
    out = []
    for b in range(2):
        if tcdm.interconnect is Interconnect.DOBU and tcdm.n_hyperbanks >= 2:
            base = b * tcdm.hyperbank_bytes
            gb = tuple(base + g * sb_bytes for g in range(3))
            out.append(BufferLayout(b, b, gb, rows, rb))
        elif groups >= 2 * N_GROUPS_PER_BUFFER:
            off = b * (groups // 2)
            gb = tuple((off + g) * sb_bytes for g in range(3))
            out.append(BufferLayout(b, 0, gb, rows, rb))
        else:
            half = rows // 2
            gb = tuple(b * half * rb + g * sb_bytes for g in range(3))
            out.append(BufferLayout(b, 0, gb, half, rb))
    return out[0], out[1]


@dataclass
class Tile:
    index: int
    m0: int
    tm: int
    n0: int
    tn: int
    K: int
    buffer: int
    hyperbank: int
    load_a: bool = True
    load_b: bool = True

    @property
    def ng(self) -> int:
        return -(-self.tn // 8)

    def a_rows(self) -> int:
        return -(-self.tm // 8) * self.K

    def b_rows(self) -> int:
        return self.K * self.ng

    def c_rows(self) -> int:
        return self.tm * self.ng


@dataclass
class TileSchedule:
    problem: MatmulProblem
    tiles: list[Tile]
    layouts: tuple[BufferLayout, BufferLayout]
    order: str = "m-outer"

    def dma_in_beats(self, t: int) -> int:
        tile = self.tiles[t]
        return tile.a_rows() * tile.load_a + tile.b_rows() * tile.load_b

    def dma_out_beats(self, t: int) -> int:
        return self.tiles[t].c_rows()

    @property
    def total_beats(self) -> int:
        return sum(self.dma_in_beats(t) + self.dma_out_beats(t) for t in range(len(self.tiles)))


# ---------------------------------------------------------------------------
# tiling

def _candidates(dim: int) -> list[int]:
    c = list(range(8, dim + 1, 8))
    if dim not in c:
        c.append(dim)
    return c


TILE_OVERHEAD_ESTIMATE = 40  # cycles per tile, used only to rank tilings


def gen_schedule(problem: MatmulProblem, tcdm: TcdmConfig, n_cores: int = 8) -> TileSchedule:
    """Pick tile sizes and order, assign alternating buffers.

    Tiles cover M x N with the full K. Whenever the problem can be split, at
    least two tiles are used so that transfers overlap computation.
    """
    layouts = buffer_layouts(tcdm)
    cap = min(lay.rows for lay in layouts)
    M, N, K = problem.M, problem.N, problem.K
    if K > cap:
        raise ConfigError(f"K={K} does not fit a {cap}-row buffer group")

    def fits(tm, tn):
        ng = -(-tn // 8)
        return -(-tm // 8) * K <= cap and K * ng <= cap and tm * ng <= cap

    if problem.tile_m or problem.tile_n:
        tm = problem.tile_m or M
        tn = problem.tile_n or N
        if not fits(tm, tn):
            raise ConfigError(f"tile {tm}x{tn}x{K} exceeds buffer capacity")
        choice = (tm, tn)
    else:
        best = None
        splittable = M > 8 or N > 8
        for tm in _candidates(M):
            for tn in _candidates(N):
                if not fits(tm, tn):
                    continue
                n_tiles = -(-M // tm) * -(-N // tn)
                if splittable and n_tiles < 2:
                    continue
                est = 0
                for m0 in range(0, M, tm):
                    rows = -(-min(tm, M - m0) // n_cores)
                    for n0 in range(0, N, tn):
                        est += rows * min(tn, N - n0) * K + TILE_OVERHEAD_ESTIMATE
                beats = _order_tiles(M, N, K, tm, tn)[1]
                key = (est, beats, -tn)
                if best is None or key < best[0]:
                    best = (key, (tm, tn))
        if best is None:
            raise ConfigError(f"no tiling of {M}x{N}x{K} fits the TCDM")
        choice = best[1]

    tm, tn = choice
    coords, _, order = _order_tiles(M, N, K, tm, tn)
    tiles = []
    for t, (m0, n0) in enumerate(coords):
        lay = layouts[t % 2]
        tile = Tile(t, m0, min(tm, M - m0), n0, min(tn, N - n0), K, lay.index, lay.hyperbank)
        if t >= 2:
            prev = tiles[t - 2]
            tile.load_a = (prev.m0, prev.tm) != (tile.m0, tile.tm)
            tile.load_b = (prev.n0, prev.tn) != (tile.n0, tile.tn)
        tiles.append(tile)
    return TileSchedule(problem, tiles, layouts, order)


def _order_tiles(M, N, K, tm, tn):
    ms = list(range(0, M, tm))
    ns = list(range(0, N, tn))
    best = None
    for order, coords in (("m-outer", [(m, n) for m in ms for n in ns]),
                          ("n-outer", [(m, n) for n in ns for m in ms])):
        beats = 0
        for t, (m0, n0) in enumerate(coords):
            tmm, tnn = min(tm, M - m0), min(tn, N - n0)
            ng = -(-tnn // 8)
            same_a = t >= 2 and coords[t - 2][0] == m0
            same_b = t >= 2 and coords[t - 2][1] == n0
            beats += (0 if same_a else -(-tmm // 8) * K) + (0 if same_b else K * ng) + tmm * ng
        if best is None or beats < best[1]:
            best = (coords, beats, order)
    return best


# ---------------------------------------------------------------------------
# per-core programs

@dataclass
class Block:
    """Rows x column-groups of one core sharing an unroll width."""

    rows: int
    groups: int
    g0: int
    width: int


def core_blocks(tile: Tile, core: int, n_cores: int = 8, unroll: int = 8) -> list[Block]:
    rows = len(range(core, tile.tm, n_cores))
    if rows == 0:
        return []
    full, rest = divmod(tile.tn, unroll)
    blocks = []
    if full:
        blocks.append(Block(rows, full, 0, unroll))
    if rest:
        blocks.append(Block(rows, 1, full * unroll, rest))
    return blocks


def stream_configs(tile: Tile, lay: BufferLayout, core: int, blk: Block,
                   n_cores: int = 8) -> tuple[StreamConfig, StreamConfig, StreamConfig]:
    if n_cores != 8:
        raise ConfigError("the data layout assumes 8 compute cores")
    rb = lay.row_bytes
    K, ng, u = tile.K, tile.ng, blk.width
    col_g, col_b = divmod(blk.g0, 8)
    a = StreamConfig(
        lay.addr(GROUP_A, 0, core),
        (StreamDim(u, 0), StreamDim(K, rb), StreamDim(blk.groups, 0), StreamDim(blk.rows, K * rb)),
        Direction.READ)
    b = StreamConfig(
        lay.addr(GROUP_B, col_g, col_b),
        (StreamDim(u, 8), StreamDim(K, ng * rb), StreamDim(blk.groups, rb), StreamDim(blk.rows, 0)),
        Direction.READ)
    c = StreamConfig(
        lay.addr(GROUP_C, core * ng + col_g, col_b),
        (StreamDim(u, 8), StreamDim(blk.groups, rb), StreamDim(blk.rows, 8 * ng * rb)),
        Direction.WRITE)
    return a, b, c


def footprint(cfg: StreamConfig, lay: BufferLayout) -> set[tuple[int, int]]:
    """(group, group row) pairs touched by a stream; raises if an address
    falls outside the buffer's three groups."""
    out = set()
    rb = lay.row_bytes
    for addr in set(cfg.address_list()):
        for g, base in enumerate(lay.group_base):
            off = addr - base
            grow, inrow = divmod(off, rb)
            if 0 <= off and inrow < 64 and grow < lay.rows:
                out.add((g, grow))
                break
        else:
            raise ConfigError(f"stream address {addr:#x} outside buffer {lay.index}")
    return out


def _ssr_setup(cfgs) -> list[Instruction]:
    """One config write for the base and two per dimension; the last write
    of each stream commits its pattern."""
    out = []
    for sid, cfg in enumerate(cfgs):
        n = 1 + 2 * len(cfg.dims)
        out.extend(isa.scfgw(what=f"ssr{sid}.{i}") for i in range(n - 1))
        out.append(isa.scfgw(sid, cfg, f"ssr{sid}.commit"))
    return out


def block_body(K: int, u: int) -> tuple[list[Instruction], list[Instruction], list[Instruction]]:
    """Peeled dot-product body: (first, middle, last) instruction groups."""
    first = [isa.fmul(j) for j in range(u)]
    middle = [isa.fmadd(j) for j in range(u)] if K > 2 else []
    last = [isa.fmadd(j, to_stream=True) for j in range(u)]
    return first, middle, last


def block_program(K: int, blk: Block, variant: Variant, branch_penalty: int = 1) -> list[Instruction]:
    first, middle, last = block_body(K, blk.width)
    inner = ([isa.frep(len(middle), K - 2)] + middle) if middle else []
    iters = blk.rows * blk.groups
    if variant is Variant.ZONL_NEST:
        body_len = len(first) + len(middle) + len(last)
        return [isa.frep(body_len, iters)] + first + inner + last
    one = first + inner + last
    if variant is Variant.INNER_FREP:
        return one * iters
    # the closing branch falls through on the last iteration: no taken penalty
    taken = [isa.addi(), isa.bne(branch_penalty)]
    return (one + taken) * (iters - 1) + one + [isa.addi(), isa.bne(0)]


def gen_kernel(problem: MatmulProblem, tile: Tile, lay: BufferLayout, core: int, variant: Variant,
               n_cores: int = 8, branch_penalty: int = 1, stagger: bool = True) -> list[Instruction]:
    """Instruction stream of one core for one tile, ending with an FPU fence."""
    prog: list[Instruction] = []
    if stagger and core % 8:
        prog.append(isa.delay(core % 8))
    for i, blk in enumerate(core_blocks(tile, core, n_cores, problem.unroll)):
        if i:
            prog.append(isa.fence())
        prog += _ssr_setup(stream_configs(tile, lay, core, blk, n_cores))
        prog += block_program(tile.K, blk, variant, branch_penalty)
    prog.append(isa.fence())
    return prog


def core_program(problem: MatmulProblem, sched: TileSchedule, core: int, variant: Variant,
                 n_cores: int = 8, branch_penalty: int = 1, stagger: bool = True) -> list[Instruction]:
    prog = [isa.barrier()]
    for tile in sched.tiles:
        prog += gen_kernel(problem, tile, sched.layouts[tile.buffer], core, variant,
                           n_cores, branch_penalty, stagger)
        prog.append(isa.barrier())
    return prog


# ---------------------------------------------------------------------------
# inspection and reference expansion

def expand(program: list[Instruction]) -> list[Instruction]:
    """Reference software expansion of FREP loops: the dynamic instruction
    sequence the program executes (FREP configs themselves excluded)."""
    out: list[Instruction] = []

    def run(pc: int, end: int):
        # expands program[pc:end] where 'end' counts buffered instructions
        while pc < len(program) and end > 0:
            inst = program[pc]
            if inst.kind is Kind.FREP_CFG:
                body_start = pc + 1
                body_end, count = _body_extent(program, body_start, inst.frep.max_inst)
                for _ in range(inst.frep.max_rpt):
                    run(body_start, inst.frep.max_inst)
                end -= count
                pc = body_end
                continue
            out.append(inst)
            if inst.kind is not Kind.INT_LOOP_MGMT and inst.kind is not Kind.SSR_CFG \
                    and inst.kind is not Kind.OTHER:
                end -= 1
            pc += 1

    run(0, 1 << 62)
    return out


def _body_extent(program, start, n_inst):
    """Index after the loop body holding ``n_inst`` buffered instructions."""
    pc, seen = start, 0
    while seen < n_inst:
        if program[pc].kind is not Kind.FREP_CFG:
            seen += 1
        pc += 1
    return pc, seen


def dump(program: list[Instruction]) -> str:
    lines = []
    depth_ends: list[int] = []
    counted = 0
    for inst in program:
        indent = "    " * len(depth_ends)
        lines.append(f"{indent}{inst}")
        if inst.kind is Kind.FREP_CFG:
            depth_ends.append(counted + inst.frep.max_inst)
        elif inst.kind is Kind.FP_COMPUTE:
            counted += 1
            while depth_ends and counted >= depth_ends[-1]:
                depth_ends.pop()
    return "\n".join(lines) + "\n"


def reference_matmul(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Order-preserving triple loop: fmul for k=0 then fused multiply-adds."""
    from .core import fma

    M, K = A.shape
    _, N = B.shape
    C = np.empty((M, N))
    for i in range(M):
        for j in range(N):
            acc = float(A[i, 0]) * float(B[0, j])
            for k in range(1, K):
                acc = fma(float(A[i, k]), float(B[k, j]), acc)
            C[i, j] = acc
    return C
