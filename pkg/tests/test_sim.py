import pytest

from conftest import rec, taken_branch_trace
from btblab.core import ALIGNED4, BYTE, BranchKind
from btblab.models import build_model
from btblab.models.conv import ConvBtb
from btblab.sim import (Metrics, SimConfig, compare, compare_csv,
                        offset_histogram, run)
from btblab.trace import (GeneratorSpec, TraceFile, TraceHeader, gen_records,
                          generate)

WORKED_PC = 0x168
WORKED_TARGET = 0x178


class TestRun:
    def test_steady_hit_metrics(self):
        trace = taken_branch_trace([(0x1000, 0x2000)], repeats=1000, gap=9)
        m = ConvBtb(entries=64)
        metrics = run(m, trace, SimConfig(warmup_records=1))
        assert metrics.taken_btb_misses == 0
        assert metrics.instructions == 999 * 10
        assert metrics.taken_branches == 999
        assert metrics.mpki == 0.0

    def test_cold_miss_counted_without_warmup(self):
        trace = taken_branch_trace([(0x1000, 0x2000)], repeats=5)
        metrics = run(ConvBtb(entries=64), trace, SimConfig(warmup_records=0))
        assert metrics.taken_btb_misses == 1

    def test_warmup_excludes_events(self):
        trace = taken_branch_trace([(0x1000, 0x2000)], repeats=10)
        metrics = run(ConvBtb(entries=64), trace, SimConfig(warmup_records=5))
        assert metrics.measured_records == 5
        assert metrics.taken_btb_misses == 0  # the cold miss fell in warmup

    def test_lru_round_robin_thrash_rate_is_one(self):
        pairs = [(0x1000 + 4 * i, 0x8000) for i in range(9)]
        trace = taken_branch_trace(pairs, repeats=20)
        metrics = run(ConvBtb(entries=8, assoc=8), trace,
                      SimConfig(warmup_records=9))
        assert metrics.taken_miss_rate == 1.0

    def test_fitting_working_set_rate_is_zero(self):
        pairs = [(0x1000 + 4 * i, 0x8000) for i in range(8)]
        trace = taken_branch_trace(pairs, repeats=20)
        metrics = run(ConvBtb(entries=8, assoc=8), trace,
                      SimConfig(warmup_records=8))
        assert metrics.taken_miss_rate == 0.0

    def test_monotone_capacity(self):
        spec = GeneratorSpec(static_branches=300, records=6000,
                             pattern="uniform", seed=12)
        records = list(gen_records(spec))
        small = run(ConvBtb(entries=64), records, SimConfig(warmup_records=0))
        large = run(ConvBtb(entries=128), records, SimConfig(warmup_records=0))
        assert large.taken_btb_misses <= small.taken_btb_misses

    @pytest.mark.parametrize("name", ["conv", "rbtb", "pdede", "btbx"])
    def test_accounting_identity(self, name):
        spec = GeneratorSpec(static_branches=400, records=5000,
                             pattern="uniform", seed=3, taken_rate=0.7)
        trace = generate(spec)
        model = build_model(name, budget_kb=0.9)
        metrics = run(model, trace, SimConfig(debug=True))
        assert metrics.taken_hits + metrics.taken_btb_misses == metrics.taken_branches

    def test_not_taken_never_allocates(self):
        trace = [rec(0x1000, 0x2000, taken=False)] * 10
        m = ConvBtb(entries=64)
        metrics = run(m, trace, SimConfig(warmup_records=0))
        assert metrics.taken_branches == 0
        assert m.occupancy_items()[0][1] == 0
        assert metrics.instructions == 10  # still instructions, just no events

    def test_wrong_target_counts_as_miss(self):
        # same pc committed with alternating indirect targets: each lookup
        # sees the previous target, so every measured branch is a miss
        a = rec(0x1000, 0x2000, BranchKind.INDIRECT)
        b = rec(0x1000, 0x3000, BranchKind.INDIRECT)
        metrics = run(ConvBtb(entries=64), [a, b] * 10, SimConfig(warmup_records=2))
        assert metrics.taken_btb_misses == metrics.taken_branches == 18
        assert metrics.wrong_target_misses == 18

    def test_ras_pairing_clean(self):
        call = rec(0x1000, 0x5000, BranchKind.CALL)
        ret = rec(0x5008, 0x1004, BranchKind.RETURN)  # back to call site + 4
        metrics = run(ConvBtb(entries=64), [call, ret] * 20,
                      SimConfig(warmup_records=0))
        assert metrics.ras_mispredicts == 0
        assert metrics.ras_underflows == 0

    def test_ras_underflow_counted(self):
        ret = rec(0x5008, 0x1004, BranchKind.RETURN)
        metrics = run(ConvBtb(entries=64), [ret] * 5, SimConfig(warmup_records=0))
        assert metrics.ras_underflows == 5

    def test_ras_mispredict_counted(self):
        call = rec(0x1000, 0x5000, BranchKind.CALL)
        ret = rec(0x5008, 0x2000, BranchKind.RETURN)  # not the call site
        metrics = run(ConvBtb(entries=64), [call, ret] * 5,
                      SimConfig(warmup_records=0))
        assert metrics.ras_mispredicts == 5
        assert metrics.taken_btb_misses == 2  # one cold miss per pc, no more

    def test_isa_mode_mismatch_rejected(self):
        trace = TraceFile(TraceHeader(isa_mode=1, record_count=0), [])
        with pytest.raises(ValueError, match="isa_mode"):
            run(ConvBtb(entries=64), trace, SimConfig(isa=ALIGNED4))

    def test_replay_determinism(self):
        spec = GeneratorSpec(static_branches=200, records=4000,
                             pattern="zipf", seed=5)
        trace = generate(spec)
        a = run(build_model("btbx", budget_kb=0.9), trace, SimConfig())
        b = run(build_model("btbx", budget_kb=0.9), trace, SimConfig())
        assert a.to_dict() == b.to_dict()

    def test_occupancy_reported(self):
        trace = taken_branch_trace([(0x1000, 0x1010)], repeats=100)
        metrics = run(build_model("btbx", sets=8), trace,
                      SimConfig(warmup_records=10))
        assert 0 < metrics.occupancy_by_way["way1"] <= 1.0
        assert metrics.occupancy_by_way["xc"] == 0.0


class TestOffsetHistogram:
    def test_all_returns_collapse_to_zero_width(self):
        trace = [rec(0x1000 + 8 * i, 0x9000, BranchKind.RETURN) for i in range(50)]
        hist = offset_histogram(trace, ALIGNED4)
        assert hist.fraction(0) == 1.0

    def test_worked_pair_single_bucket(self):
        hist = offset_histogram([rec(WORKED_PC, WORKED_TARGET)], ALIGNED4)
        assert hist.counts == {3: 1}

    def test_cumulative_ends_at_exactly_one(self):
        trace = generate(GeneratorSpec(static_branches=500, records=5000, seed=1))
        hist = offset_histogram(trace)
        assert hist.rows()[-1][3] == 1.0

    def test_cumulative_curve_monotone(self):
        trace = generate(GeneratorSpec(static_branches=500, records=5000, seed=1))
        rows = offset_histogram(trace).rows()
        cum = [r[3] for r in rows]
        assert cum == sorted(cum)

    def test_not_taken_excluded(self):
        trace = [rec(0x1000, 0x2000, taken=False), rec(0x1000, 0x2000)]
        assert offset_histogram(trace, ALIGNED4).total == 1

    def test_csv_shape(self):
        text = offset_histogram([rec(WORKED_PC, WORKED_TARGET)], ALIGNED4).csv()
        lines = text.strip().split("\n")
        assert lines[0] == "stored_width,count,fraction,cumulative"
        assert lines[1] == "3,1,1.000000,1.000000"

    def test_byte_mode_counts_alignment_bits(self):
        hist = offset_histogram([rec(0x1000, 0x1004)], BYTE)
        assert hist.counts == {3: 1}


class TestCompare:
    def test_empty_trace_all_zero_rows(self):
        results = compare(["conv", "btbx"], [], budget_kb=0.9)
        for _, metrics in results:
            assert metrics.taken_branches == 0
            assert metrics.mpki == 0.0

    def test_duplicate_model_rows_identical(self):
        trace = generate(GeneratorSpec(static_branches=100, records=2000, seed=4))
        results = compare(["btbx", "btbx"], trace, budget_kb=0.9)
        assert results[0][1].to_dict() == results[1][1].to_dict()

    def test_declaration_order_preserved(self, monkeypatch):
        monkeypatch.setenv("BTBLAB_THREADS", "2")
        trace = generate(GeneratorSpec(static_branches=50, records=500, seed=4))
        results = compare(["pdede", "conv", "btbx"], trace, budget_kb=0.9)
        assert [name for name, _ in results] == ["pdede", "conv", "btbx"]

    def test_capacity_ordering_between_organizations(self):
        # working set sized between conv (116) and the offset BTB (260) at
        # the smallest budget; a fifth of branches hop one page so the page
        # table (32 slots vs 40 live pages) stays under pressure
        spec = GeneratorSpec(
            static_branches=200, records=20_000,
            width_buckets=((1, 4, 0.8), (11, 11, 0.2)),
            kind_mix=((BranchKind.CONDITIONAL, 1.0),),
            taken_rate=1.0, pattern="round_robin", seed=7)
        trace = generate(spec)
        config = SimConfig(warmup_records=4000)
        results = dict(compare(["conv", "pdede", "btbx"], trace, 0.9, config))
        conv, pdede, btbx = (results[n].taken_miss_rate
                             for n in ("conv", "pdede", "btbx"))
        assert conv > pdede > btbx

    def test_csv_schema(self):
        trace = generate(GeneratorSpec(static_branches=50, records=500, seed=4))
        results = compare(["conv"], trace, budget_kb=0.9)
        lines = compare_csv(results, 0.9).strip().split("\n")
        assert lines[0] == ("model,budget_kb,instructions,taken_branches,"
                            "taken_btb_misses,taken_miss_rate,mpki")
        assert lines[1].startswith("conv,0.9,")


class TestMetrics:
    def test_mpki_identity(self):
        m = Metrics(instructions=5000, taken_branches=400, taken_btb_misses=37)
        assert m.mpki == 37 * 1000 / 5000

    def test_empty_is_zero(self):
        assert Metrics().mpki == 0.0
        assert Metrics().taken_miss_rate == 0.0

    def test_dict_keys_stable(self):
        keys = list(Metrics().to_dict())
        assert keys[:6] == ["instructions", "taken_branches", "taken_btb_misses",
                            "mpki", "hits_by_source", "occupancy_by_way"]
