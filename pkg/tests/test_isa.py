import pytest
from hypothesis import given
from hypothesis import strategies as st

from zonlsim import isa
from zonlsim.isa import (ConfigError, Direction, FrepConfig, Kind, Op, S0, S1, S2, StreamConfig,
                         StreamDim, classify)


def test_fmadd_to_write_stream():
    inst = classify({"op": "fmadd", "rd": "ft2", "rs1": "ft0", "rs2": "ft1", "rs3": "c3"})
    assert inst.kind is Kind.FP_COMPUTE
    assert inst.reads_streams == {S0, S1}
    assert inst.writes_stream == S2
    assert inst.acc_src == 3 and inst.rd is None


def test_frep_carries_payload():
    inst = classify({"op": "frep", "max_inst": 1, "max_rpt": 30})
    assert inst.kind is Kind.FREP_CFG
    assert inst.frep == FrepConfig(1, 30)


def test_loop_counter_update_is_int_loop_mgmt():
    inst = classify({"op": "addi"})
    assert inst.kind is Kind.INT_LOOP_MGMT and inst.uses_int_rf


@pytest.mark.parametrize("desc", [
    {"op": "frep", "max_inst": 0, "max_rpt": 3},
    {"op": "frep", "max_inst": 2, "max_rpt": 0},
    {"op": "fmadd", "rd": "c0", "rs1": "ft0"},
    {"op": "fmul", "rd": "ft0", "rs1": "ft0", "rs2": "ft1"},
    {"op": "fmul", "rd": "c0", "rs1": "ft2", "rs2": "ft1"},
    {"op": "bogus"},
    {},
    {"op": "delay", "cycles": 0},
])
def test_malformed_descriptors_rejected(desc):
    with pytest.raises(ConfigError):
        classify(desc)


def test_frep_payload_iff_frep_kind():
    with pytest.raises(ConfigError):
        isa.Instruction(Kind.FP_COMPUTE, Op.FMUL, frep=FrepConfig(1, 1))
    with pytest.raises(ConfigError):
        isa.Instruction(Kind.FREP_CFG, Op.FREP)


def test_int_rf_fp_moves_flagged():
    inst = classify({"op": "fmv.x.d", "rd": "a0", "rs1": "c1"})
    assert inst.kind is Kind.OTHER and inst.uses_int_rf


regs = st.sampled_from(["ft0", "ft1", "c0", "c5", "ft4"])


@given(st.sampled_from(["fmul", "fadd", "fmadd"]), st.sampled_from(["ft2", "c1", "c7"]), regs, regs, regs)
def test_classify_total_and_round_trips(op, rd, r1, r2, r3):
    desc = {"op": op, "rd": rd, "rs1": r1, "rs2": r2}
    if op == "fmadd":
        desc["rs3"] = r3
    srcs = [desc[k] for k in ("rs1", "rs2", "rs3") if k in desc]
    accs = [s for s in srcs if s not in ("ft0", "ft1")]
    if len(accs) > 1:
        with pytest.raises(ConfigError):
            classify(desc)
        return
    a, b = classify(desc), classify(desc)
    assert (a.kind, a.reads_streams, a.writes_stream, a.rd, a.acc_src) == \
           (b.kind, b.reads_streams, b.writes_stream, b.rd, b.acc_src)
    assert a.kind is Kind.FP_COMPUTE
    assert a.reads_streams == {isa.STREAM_REGS[s] for s in srcs if s in ("ft0", "ft1")}
    assert (a.writes_stream == S2) == (rd == "ft2")
    assert len(a.reads_streams) <= 2


dims = st.lists(st.builds(StreamDim, st.integers(1, 6), st.integers(-8, 8).map(lambda s: 8 * s)),
                min_size=1, max_size=4)


@given(st.integers(0, 4096).map(lambda b: 8 * b), dims)
def test_stream_addresses_are_affine_expansion(base, ds):
    cfg = StreamConfig(base, tuple(ds))
    want = []

    def rec(level, addr):
        if level < 0:
            want.append(addr)
            return
        for i in range(ds[level].bound):
            rec(level - 1, addr + i * ds[level].stride)

    rec(len(ds) - 1, base)
    assert list(cfg.addresses()) == want
    assert cfg.address_list() == want
    assert cfg.n_elements == len(want)
    lo, hi = cfg.span()
    assert lo == min(want) and hi == max(want)
    assert all(a % 8 == 0 for a in want)


@pytest.mark.parametrize("kw", [dict(base=4, dims=(StreamDim(2, 8),)),
                                dict(base=0, dims=(StreamDim(2, 12),)),
                                dict(base=0, dims=()),
                                dict(base=0, dims=(StreamDim(0, 8),)),
                                dict(base=0, dims=(StreamDim(1, 8),) * 5)])
def test_bad_stream_configs(kw):
    with pytest.raises(ConfigError):
        StreamConfig(direction=Direction.READ, **kw)
