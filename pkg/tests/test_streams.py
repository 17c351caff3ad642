import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zonlsim.isa import ConfigError, Direction, StreamConfig, StreamDim
from zonlsim.memory import Tcdm, TcdmConfig
from zonlsim.streams import IntegrityError, StreamUnit


def drive(unit, tcdm, consume_every=1, max_cycles=10_000, block_banks=()):
    """Run a read stream, consuming one element every ``consume_every`` cycles.
    Returns the granted addresses in order and per-cycle request counts."""
    got, per_cycle = [], []
    cycle = 0
    while not unit.done:
        if cycle % consume_every == 0 and unit.avail:
            unit.pop()
        req = unit.gen_request(cycle)
        per_cycle.append(0 if req is None else 1)
        if req is not None:
            req.granted = req.bank not in block_banks or cycle % 2 == 1
            addr = req.addr
            unit.resolve()
            if req.granted:
                got.append(addr)
        cycle += 1
        assert cycle < max_cycles
    return got, per_cycle


dims = st.lists(st.builds(StreamDim, st.integers(1, 5), st.integers(0, 6).map(lambda s: 8 * s)),
                min_size=1, max_size=4)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 64).map(lambda b: 8 * b), dims, st.integers(1, 3))
def test_granted_sequence_is_affine_expansion(base, ds, every):
    tcdm = Tcdm(TcdmConfig.baseline32())
    u = StreamUnit(0, tcdm, depth=4)
    cfg = StreamConfig(base, tuple(ds))
    u.configure(cfg)
    got, per_cycle = drive(u, tcdm, every)
    assert got == list(cfg.addresses())
    assert max(per_cycle) <= 1


def test_bound_one_issues_one_request():
    tcdm = Tcdm(TcdmConfig.baseline32())
    u = StreamUnit(0, tcdm)
    u.configure(StreamConfig(64, (StreamDim(1, 8),)))
    got, per_cycle = drive(u, tcdm)
    assert got == [64] and sum(per_cycle) == 1 and u.done


def test_conflict_retries_same_address():
    tcdm = Tcdm(TcdmConfig.baseline32())
    u = StreamUnit(0, tcdm)
    u.configure(StreamConfig(0, (StreamDim(4, 8),)))
    r0 = u.gen_request(0)
    a0 = r0.addr
    r0.granted = False
    u.resolve()
    r1 = u.gen_request(1)
    assert r1.addr == a0 and u.conflicts == 1


def test_full_queue_stops_requests():
    tcdm = Tcdm(TcdmConfig.baseline32())
    u = StreamUnit(0, tcdm, depth=2)
    u.configure(StreamConfig(0, (StreamDim(10, 8),)))
    for c in range(2):
        u.gen_request(c).granted = True
        u.resolve()
    assert u.avail == 2
    assert u.gen_request(2) is None
    u.pop()
    assert u.gen_request(3) is not None


def test_fpu_cannot_read_ungranted_element():
    u = StreamUnit(0, Tcdm(TcdmConfig.baseline32()))
    u.configure(StreamConfig(0, (StreamDim(2, 8),)))
    with pytest.raises(IntegrityError):
        u.pop()


def test_grant_without_request_is_an_integrity_fault():
    u = StreamUnit(0, Tcdm(TcdmConfig.baseline32()))
    u.configure(StreamConfig(0, (StreamDim(2, 8),)))
    with pytest.raises(IntegrityError):
        u.on_grant()
    with pytest.raises(IntegrityError):
        u.on_conflict()


def test_out_of_range_rejected_at_configure():
    u = StreamUnit(0, Tcdm(TcdmConfig.baseline32()))
    with pytest.raises(ConfigError):
        u.configure(StreamConfig(128 * 1024 - 8, (StreamDim(2, 8),)))
    with pytest.raises(ConfigError):
        u.configure(StreamConfig(8, (StreamDim(3, -8),)))


def test_write_stream_waits_for_result_latency():
    tcdm = Tcdm(TcdmConfig.baseline32(), functional=True)
    u = StreamUnit(2, tcdm, depth=4, wb_slack=3)
    u.configure(StreamConfig(0, (StreamDim(2, 8),), Direction.WRITE))
    assert u.gen_request(0) is None
    u.push(3, 1.5)
    assert u.gen_request(2) is None
    r = u.gen_request(3)
    r.granted = True
    u.resolve()
    assert tcdm.read(0) == 1.5 and not u.drained
    u.push(4, 2.5)
    u.gen_request(4).granted = True
    u.resolve()
    assert u.drained and tcdm.read(8) == 2.5


def test_write_capacity_includes_pipeline_slack():
    u = StreamUnit(2, Tcdm(TcdmConfig.baseline32()), depth=4, wb_slack=3)
    u.configure(StreamConfig(0, (StreamDim(16, 8),), Direction.WRITE))
    for i in range(7):
        assert u.can_push()
        u.push(100, None)
    assert not u.can_push()


def test_reconfigure_while_busy_is_a_fault():
    u = StreamUnit(0, Tcdm(TcdmConfig.baseline32()))
    u.configure(StreamConfig(0, (StreamDim(4, 8),)))
    u.gen_request(0)
    with pytest.raises(IntegrityError):
        u.configure(StreamConfig(0, (StreamDim(4, 8),)))
