"""Drive a BTB model over a branch trace and account for taken-branch misses.

Every record gets a lookup (the front-end probes on the predicted path),
but only taken branches update the BTB at commit and only taken branches
inside the measured window count toward hits/misses.  A hit means the BTB
both found the branch and would have steered fetch correctly: for returns
that is a matching return-type entry (the target itself comes from the
RAS), for everything else a matching target.  A tag hit whose target is
wrong counts as a miss and is also reported separately.

MPKI denominators come from the per-record gap field: each record stands
for itself plus `gap` preceding non-branch instructions.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .core import (ALIGNED4, BranchKind, BranchRecord, IsaProfile,
                   ReturnAddressStack, mode_for_profile, required_offset_width)
from .models import build_model
from .models.base import BtbModel
from .trace import TraceFile


@dataclass
class SimConfig:
    isa: IsaProfile = ALIGNED4
    warmup_records: Optional[int] = None   # None: 10% of the trace
    measure_records: Optional[int] = None  # None: everything after warmup
    ras_capacity: int = 64
    debug: bool = False                    # verify model invariants per commit

    def __post_init__(self):
        if self.warmup_records is not None and self.warmup_records < 0:
            raise ValueError("warmup_records must be >= 0")
        if self.measure_records is not None and self.measure_records < 0:
            raise ValueError("measure_records must be >= 0")


@dataclass
class Metrics:
    instructions: int = 0
    taken_branches: int = 0
    taken_btb_misses: int = 0
    hits_by_source: Dict[str, int] = field(default_factory=dict)
    occupancy_by_way: Dict[str, float] = field(default_factory=dict)
    measured_records: int = 0
    wrong_target_misses: int = 0
    ras_underflows: int = 0
    ras_mispredicts: int = 0

    @property
    def mpki(self) -> float:
        if self.instructions == 0:
            return 0.0
        return self.taken_btb_misses * 1000.0 / self.instructions

    @property
    def taken_hits(self) -> int:
        return sum(self.hits_by_source.values())

    @property
    def taken_miss_rate(self) -> float:
        if self.taken_branches == 0:
            return 0.0
        return self.taken_btb_misses / self.taken_branches

    def to_dict(self) -> dict:
        return {
            "instructions": self.instructions,
            "taken_branches": self.taken_branches,
            "taken_btb_misses": self.taken_btb_misses,
            "mpki": self.mpki,
            "hits_by_source": dict(sorted(self.hits_by_source.items())),
            "occupancy_by_way": self.occupancy_by_way,
            "measured_records": self.measured_records,
            "wrong_target_misses": self.wrong_target_misses,
            "ras_underflows": self.ras_underflows,
            "ras_mispredicts": self.ras_mispredicts,
        }


def _records_of(trace: Union[TraceFile, Sequence[BranchRecord]],
                config: SimConfig) -> Sequence[BranchRecord]:
    if isinstance(trace, TraceFile):
        if trace.header.isa_mode != mode_for_profile(config.isa):
            raise ValueError(
                f"trace isa_mode {trace.header.isa_mode} does not match the "
                f"configured profile (mode {mode_for_profile(config.isa)})")
        return trace.records
    return trace


def run(model: BtbModel, trace: Union[TraceFile, Sequence[BranchRecord]],
        config: Optional[SimConfig] = None) -> Metrics:
    config = config or SimConfig()
    records = _records_of(trace, config)
    total = len(records)
    warmup = config.warmup_records if config.warmup_records is not None else total // 10
    end = total if config.measure_records is None else min(
        total, warmup + config.measure_records)

    metrics = Metrics()
    ras = ReturnAddressStack(config.ras_capacity)
    occ_sums: Dict[str, float] = {}
    occ_caps: Dict[str, int] = {}
    instr_bytes = 1 << config.isa.align_shift if config.isa.align_shift else 4

    for i, rec in enumerate(records):
        measured = warmup <= i < end
        pred = model.lookup(rec.pc)
        if measured:
            metrics.measured_records += 1
            metrics.instructions += rec.gap + 1
        if rec.taken:
            if measured:
                metrics.taken_branches += 1
                if pred is None:
                    metrics.taken_btb_misses += 1
                elif rec.kind is BranchKind.RETURN:
                    if pred.kind is BranchKind.RETURN:
                        metrics.hits_by_source[pred.source] = \
                            metrics.hits_by_source.get(pred.source, 0) + 1
                    else:
                        metrics.taken_btb_misses += 1
                        metrics.wrong_target_misses += 1
                elif pred.target == rec.target:
                    metrics.hits_by_source[pred.source] = \
                        metrics.hits_by_source.get(pred.source, 0) + 1
                else:
                    metrics.taken_btb_misses += 1
                    metrics.wrong_target_misses += 1
            model.commit_update(rec)
            if config.debug:
                model.check_invariants()
            if rec.kind.is_call:
                ras.push(rec.pc + instr_bytes)
            elif rec.kind is BranchKind.RETURN:
                popped = ras.pop()
                if measured:
                    if popped is None:
                        metrics.ras_underflows += 1
                    elif popped != rec.target:
                        metrics.ras_mispredicts += 1
        if measured:
            for name, valid, cap in model.occupancy_items():
                occ_sums[name] = occ_sums.get(name, 0.0) + valid
                occ_caps[name] = cap

    if metrics.measured_records:
        metrics.occupancy_by_way = {
            name: occ_sums[name] / (occ_caps[name] * metrics.measured_records)
            for name in occ_sums
        }
    assert metrics.taken_hits + metrics.taken_btb_misses == metrics.taken_branches
    return metrics


@dataclass
class OffsetHistogram:
    """Stored-offset-width distribution over dynamic taken branches."""

    counts: Dict[int, int]
    total: int

    def fraction(self, width: int) -> float:
        return self.counts.get(width, 0) / self.total if self.total else 0.0

    def cumulative_at(self, width: int) -> float:
        if not self.total:
            return 0.0
        return sum(c for w, c in self.counts.items() if w <= width) / self.total

    def rows(self) -> List[Tuple[int, int, float, float]]:
        rows = []
        running = 0
        for width in sorted(self.counts):
            count = self.counts[width]
            running += count
            rows.append((width, count, count / self.total, running / self.total))
        return rows

    def csv(self) -> str:
        lines = ["stored_width,count,fraction,cumulative"]
        for width, count, frac, cum in self.rows():
            lines.append(f"{width},{count},{frac:.6f},{cum:.6f}")
        return "\n".join(lines) + "\n"


def offset_histogram(trace: Union[TraceFile, Sequence[BranchRecord]],
                     isa: Optional[IsaProfile] = None) -> OffsetHistogram:
    """Bucket every dynamic taken branch by its required stored width.

    Returns are counted at width 0 regardless of target: their targets come
    from the RAS, so a BTB entry stores no offset bits for them.
    """
    if isinstance(trace, TraceFile):
        isa = trace.isa
        records = trace.records
    else:
        isa = isa or ALIGNED4
        records = trace
    counts: Dict[int, int] = {}
    total = 0
    for rec in records:
        if not rec.taken:
            continue
        if rec.kind is BranchKind.RETURN:
            width = 0
        else:
            width = required_offset_width(rec.pc, rec.target, isa)
        counts[width] = counts.get(width, 0) + 1
        total += 1
    return OffsetHistogram(counts, total)


def _worker_count(n_jobs: int) -> int:
    cap = os.environ.get("BTBLAB_THREADS")
    if cap:
        try:
            limit = max(1, int(cap))
        except ValueError:
            limit = 1
        return min(n_jobs, limit)
    return min(n_jobs, os.cpu_count() or 1)


def compare(model_names: Sequence[str],
            trace: Union[TraceFile, Sequence[BranchRecord]],
            budget_kb: float,
            config: Optional[SimConfig] = None) -> List[Tuple[str, Metrics]]:
    """Run several organizations at the same budget over one trace.

    Workers share nothing (each builds its own model) and results come back
    in declaration order regardless of completion order.
    """
    config = config or SimConfig()
    records = _records_of(trace, config)

    def job(name: str) -> Metrics:
        model = build_model(name, budget_kb=budget_kb, isa=config.isa)
        return run(model, records, config)

    if len(model_names) <= 1:
        return [(name, job(name)) for name in model_names]
    with ThreadPoolExecutor(max_workers=_worker_count(len(model_names))) as pool:
        futures = [(name, pool.submit(job, name)) for name in model_names]
        return [(name, fut.result()) for name, fut in futures]


COMPARE_CSV_HEADER = ("model,budget_kb,instructions,taken_branches,"
                      "taken_btb_misses,taken_miss_rate,mpki")


def compare_csv(results: Sequence[Tuple[str, Metrics]], budget_kb: float) -> str:
    lines = [COMPARE_CSV_HEADER]
    for name, m in results:
        lines.append(f"{name},{budget_kb:g},{m.instructions},{m.taken_branches},"
                     f"{m.taken_btb_misses},{m.taken_miss_rate:.6f},{m.mpki:.6f}")
    return "\n".join(lines) + "\n"
