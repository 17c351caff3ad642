import json
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zonlsim.cli import load_config, main
from zonlsim.cluster import (PRESETS, Cluster, ClusterConfig, RunStats, SequencerKind,
                             functional_check, preset, run_with_data, simulate)
from zonlsim.core import CoreCounters
from zonlsim.experiments import (CSV_COLUMNS, Summary, csv_text, outer_iteration_periods, report,
                                 sample_sizes, summarize, sweep)
from zonlsim.isa import ConfigError
from zonlsim.kernels import MatmulProblem, Variant, core_blocks
from zonlsim.memory import Interconnect, Policy, TcdmConfig


@pytest.mark.parametrize("name,banks,ic,seq", [
    ("Base32fc", 32, Interconnect.FULLY_CONNECTED, SequencerKind.BASE),
    ("Zonl32fc", 32, Interconnect.FULLY_CONNECTED, SequencerKind.ZONL),
    ("Zonl64fc", 64, Interconnect.FULLY_CONNECTED, SequencerKind.ZONL),
    ("Zonl64dobu", 64, Interconnect.DOBU, SequencerKind.ZONL),
    ("Zonl48dobu", 48, Interconnect.DOBU, SequencerKind.ZONL),
])
def test_presets(name, banks, ic, seq):
    cfg = preset(name)
    assert (cfg.tcdm.n_banks, cfg.tcdm.interconnect, cfg.sequencer) == (banks, ic, seq)
    assert cfg.n_cores == 8 and cfg.unroll == 8
    assert cfg.kernel_variant is (Variant.BASELINE_LOOP if seq is SequencerKind.BASE else Variant.ZONL_NEST)


def test_preset_aliases_and_unknown():
    assert preset("Zonl48db") is PRESETS["Zonl48dobu"]
    with pytest.raises(ConfigError):
        preset("Zonl16fc")


def test_config_dict_round_trip():
    for cfg in PRESETS.values():
        assert ClusterConfig.from_dict(cfg.to_dict()) == cfg


def test_yaml_config_file(tmp_path):
    p = tmp_path / "mine.yaml"
    p.write_text("preset: Zonl48dobu\nfpu_latency: 4\npolicy: dma-priority\ntcdm:\n  banks_per_hyperbank: 32\n")
    cfg = load_config(str(p))
    assert cfg.name == "mine" and cfg.fpu_latency == 4 and cfg.policy is Policy.DMA_PRIORITY
    assert cfg.tcdm.n_banks == 64 and cfg.tcdm.total_bytes == TcdmConfig.dobu48().total_bytes
    bad = tmp_path / "bad.yaml"
    bad.write_text("frobnicate: 1\n")
    with pytest.raises(ConfigError):
        load_config(str(bad))


def test_zonl_kernel_needs_nesting_sequencer():
    with pytest.raises(ConfigError):
        ClusterConfig(sequencer=SequencerKind.BASE, variant=Variant.ZONL_NEST)


small = st.tuples(st.integers(1, 24), st.integers(1, 24), st.integers(2, 12))


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(sorted(PRESETS)), small)
def test_accounting_closure(name, size):
    s = simulate(preset(name), MatmulProblem(*size))
    for c in s.per_core:
        assert c.total() == s.total_cycles
    assert 0.0 <= s.utilization <= 1.0
    assert s.busy == size[0] * size[1] * size[2]
    assert sum(s.breakdown().values()) == pytest.approx(1.0)


def test_deterministic_runs():
    a = simulate(preset("Base32fc"), MatmulProblem(24, 40, 16))
    b = simulate(preset("Base32fc"), MatmulProblem(24, 40, 16))
    assert a == b


def test_zero_cycle_run_has_no_utilization():
    s = RunStats("x", 8, 8, 8, 0, 0, [CoreCounters()], [0], 0, 0, 0, 0, 0, (8, 8, 8), (0, 0))
    with pytest.raises(ValueError):
        s.utilization


def test_table_anchor_conflicts():
    assert simulate(preset("Zonl48dobu"), MatmulProblem(32, 32, 32)).conflict_stall == 0
    assert simulate(preset("Base32fc"), MatmulProblem(32, 32, 32)).conflict_stall > 0


# -- functional mode --------------------------------------------------------

def test_identity_times_b_is_b():
    rng = np.random.default_rng(3)
    B = rng.standard_normal((16, 24))
    C = run_with_data(preset("Zonl48dobu"), np.eye(16), B)
    assert np.array_equal(C, B)


def test_zeros():
    assert functional_check(MatmulProblem(8, 16, 4), A=np.zeros((8, 4)), B=np.zeros((4, 16))) == 0.0


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_random_16_cubed_bitwise(name):
    assert functional_check(MatmulProblem(16, 16, 16), preset(name), seed=7) == 0.0


@pytest.mark.parametrize("size", [(13, 21, 5), (3, 9, 2), (40, 24, 9)])
def test_ragged_sizes_bitwise(size):
    assert functional_check(MatmulProblem(*size), preset("Base32fc"), seed=1) == 0.0


# -- timing model -----------------------------------------------------------

def closed_form_tile_cycles(tile, fpu_latency=3, n_cores=8):
    """Stagger + stream setup + paced compute + fill/drain, slowest core."""
    worst = 0
    for c in range(n_cores):
        blocks = core_blocks(tile, c, n_cores)
        if not blocks:
            continue
        t = c
        for b in blocks:
            setup = (1 + 2 * 4) * 2 + (1 + 2 * 3)
            t += setup + b.rows * b.groups * (b.width + (tile.K - 1) * max(b.width, fpu_latency)) \
                + 1 + fpu_latency
        worst = max(worst, t)
    return worst


@pytest.mark.parametrize("seed", range(3))
def test_analytic_cycle_count_conflict_free(seed):
    rng = random.Random(seed)
    for name in ("Zonl48dobu", "Zonl64dobu", "Zonl64fc"):
        size = (8 * rng.randint(1, 10), 8 * rng.randint(1, 10), rng.randint(4, 96))
        cl = Cluster(preset(name), MatmulProblem(*size))
        stats = cl.run()
        assert stats.conflicts == 0
        rel = cl.barrier.releases
        sched = cl.sched
        for i, tile in enumerate(sched.tiles):
            est = closed_form_tile_cycles(tile)
            beats = (sched.dma_in_beats(i + 1) if i + 1 < len(sched.tiles) else 0) + \
                (sched.dma_out_beats(i - 1) if i else 0)
            measured = rel[i + 1] - rel[i]
            assert measured >= est - 1
            if beats + 64 < est:  # compute bound
                assert abs(measured - est) <= 1, (name, size, i)


def test_baseline_iteration_period():
    K = 16
    base = ClusterConfig("b", sequencer=SequencerKind.BASE, tcdm=TcdmConfig.dobu48(), branch_penalty=2)
    periods = outer_iteration_periods(base, MatmulProblem(32, 32, K))
    assert set(periods) == {8 * K + 2 + 2}


# -- sweeps and reports -----------------------------------------------------

def test_sample_sizes_reproducible_and_in_domain():
    a, b = sample_sizes(50, 11), sample_sizes(50, 11)
    assert a == b and len(a) == 50
    assert all(x in range(8, 129, 8) for t in a for x in t)
    assert sample_sizes(50, 12) != a


def test_summary_statistics():
    s = Summary.of([1, 2, 3, 4, 100])
    assert (s.min, s.median, s.max) == (1, 3, 100)
    assert (s.p25, s.p75) == (2, 4)
    assert s.outliers == (100.0,) and s.whisker_hi == 4
    with pytest.raises(ValueError):
        Summary.of([])


def test_empty_report_has_header_only(tmp_path):
    paths = report([], tmp_path)
    assert paths["csv"].read_text() == ",".join(CSV_COLUMNS) + "\n"
    assert json.loads(paths["json"].read_text())["summary"] == {}


def test_report_cardinality_and_quartiles(tmp_path):
    runs = []
    for name in sorted(PRESETS):
        runs += sweep(preset(name), sizes=[(8, 8, 8), (16, 8, 8)])
    paths = report(runs, tmp_path)
    lines = paths["csv"].read_text().splitlines()
    assert len(lines) == 1 + 5 * 2
    doc = json.loads(paths["json"].read_text())
    assert sorted(doc["summary"]) == sorted(PRESETS)
    box = paths["box"].read_text().splitlines()
    assert len(box) == 1 + 5
    med = summarize(runs)["Base32fc"].median
    assert doc["summary"]["Base32fc"]["median"] == med


def test_csv_is_order_independent():
    runs = sweep(preset("Zonl48dobu"), sizes=[(16, 8, 8), (8, 8, 8)])
    assert csv_text(runs) == csv_text(list(reversed(runs)))


# -- CLI ----------------------------------------------------------------------

def test_cli_simulate_functional(capsys, tmp_path):
    trace = tmp_path / "t.csv"
    assert main(["simulate", "--config", "Base32fc", "--size", "16x16x8", "--functional",
                 "--trace", str(trace)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["bitwise_equal"] and out["max_abs_error"] == 0.0
    rows = trace.read_text().splitlines()
    assert rows[0] == "cycle,bank,winner,n_losers"
    assert len(rows) - 1 > 0


def test_cli_sweep_and_trace(tmp_path, capsys):
    assert main(["sweep", "--config", "Zonl48dobu", "--n", "2", "--seed", "3", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "sweep.csv").exists() and (tmp_path / "sweep_box.dat").exists()
    out = tmp_path / "seq.csv"
    assert main(["trace", "--config", "Zonl48dobu", "--size", "8x8x4", "--kind", "sequencer",
                 "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "core,cycle,raddr,loop_idx,op"
    assert len(lines) - 1 == 8 * 8 * 4


def test_cli_errors(capsys):
    assert main(["simulate", "--config", "Nope", "--size", "8x8x8"]) == 2
    assert main(["simulate", "--config", "Base32fc", "--size", "8x8x1"]) == 2
