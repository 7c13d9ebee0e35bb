"""BTB organizations that deduplicate page (and region) numbers.

Both keep full reconstruction exact: main entries hold the in-page byte
offset plus a pointer into a side table, and the side tables hold real page
or region numbers (partitioned bit ranges, never hashes), so a fresh hit
always rebuilds the original target.  Eviction from a side table bumps a
per-slot generation counter; main entries snapshot the generation they
linked against, so a dangling pointer is detected and surfaces as a miss
rather than a wrong target.

The region-aware variant additionally reserves half the ways of each main
set for same-page branches (target page recoverable from the PC), which
need neither pointer.
"""

from __future__ import annotations

from typing import Optional

from ..core import ALIGNED4, BranchKind, BranchRecord, IsaProfile, xor_fold
from .base import (BtbModel, InvariantError, LruState, Prediction, RecencyLru,
                   UpdateOutcome, select_victim)

PAGE_SHIFT = 12
NO_PAGE = -1  # page_ptr sentinel for entries that need no page (returns)


class RBtb(BtbModel):
    """Main table plus a fully-associative page table of full page numbers.

    Every non-return entry points at the page slot holding its target's page
    number; branches sharing a target page share the slot.
    """

    name = "rbtb"

    def __init__(self, main_entries: int, page_entries: int, assoc: int = 8,
                 isa: IsaProfile = ALIGNED4, tag_bits: int = 12,
                 page_shift: int = PAGE_SHIFT):
        if main_entries < 1 or page_entries < 1:
            raise ValueError("main_entries and page_entries must be >= 1")
        self.isa = isa
        self.tag_bits = tag_bits
        self.page_shift = page_shift
        self.assoc = next(a for a in range(min(assoc, main_entries), 0, -1)
                          if main_entries % a == 0)
        self.sets = main_entries // self.assoc
        self.main_entries = main_entries
        self.page_entries = page_entries
        self.reset()

    def reset(self):
        ways, sets = self.assoc, self.sets
        self._valid = [[False] * ways for _ in range(sets)]
        self._tag = [[0] * ways for _ in range(sets)]
        self._kind = [[BranchKind.CONDITIONAL] * ways for _ in range(sets)]
        self._in_off = [[0] * ways for _ in range(sets)]
        self._page_ptr = [[NO_PAGE] * ways for _ in range(sets)]
        self._page_gen = [[0] * ways for _ in range(sets)]
        self._lru = [LruState(ways) for _ in range(sets)]
        self._valid_count = 0
        n = self.page_entries
        self._pt_page = [0] * n
        self._pt_valid = [False] * n
        self._pt_gen = [0] * n
        self._pt_lru = RecencyLru(n)
        self._pt_map = {}  # page number -> slot, the associative-search result
        self._pt_valid_count = 0
        self.page_searches = 0  # associative searches at allocation, for tests

    def _index_tag(self, pc: int):
        line = pc >> self.isa.align_shift
        return line % self.sets, xor_fold(line // self.sets, self.tag_bits)

    def _probe(self, s: int, tag: int) -> Optional[int]:
        valid, tags = self._valid[s], self._tag[s]
        for way in range(self.assoc):
            if valid[way] and tags[way] == tag:
                return way
        return None

    def _ensure_page(self, page: int):
        """Find or allocate the slot for a page number (associative search);
        eviction bumps the slot generation, orphaning old dependents."""
        self.page_searches += 1
        slot = self._pt_map.get(page)
        if slot is not None:
            self._pt_lru.touch(slot)
            return slot, self._pt_gen[slot]
        if self._pt_valid_count < self.page_entries:
            slot = self._pt_valid.index(False)
            self._pt_valid_count += 1
        else:
            slot = self._pt_lru.oldest()
            del self._pt_map[self._pt_page[slot]]
        self._pt_gen[slot] += 1
        self._pt_page[slot] = page
        self._pt_valid[slot] = True
        self._pt_map[page] = slot
        self._pt_lru.touch(slot)
        return slot, self._pt_gen[slot]

    def _resolve(self, s: int, way: int) -> Optional[int]:
        ptr = self._page_ptr[s][way]
        if ptr == NO_PAGE:
            return None
        if not self._pt_valid[ptr] or self._pt_gen[ptr] != self._page_gen[s][way]:
            return None
        return self._pt_page[ptr]

    def lookup(self, pc: int) -> Optional[Prediction]:
        s, tag = self._index_tag(pc)
        way = self._probe(s, tag)
        if way is None:
            return None
        kind = self._kind[s][way]
        if kind is BranchKind.RETURN:
            self._lru[s].touch(way)
            return Prediction(None, kind, f"way{way}")
        page = self._resolve(s, way)
        if page is None:
            return None  # dangling page pointer: miss, never a wrong target
        self._lru[s].touch(way)
        return Prediction((page << self.page_shift) | self._in_off[s][way],
                          kind, f"way{way}")

    def _write(self, s: int, way: int, tag: int, record: BranchRecord):
        self._tag[s][way] = tag
        self._kind[s][way] = record.kind
        if record.kind is BranchKind.RETURN:
            self._in_off[s][way] = 0
            self._page_ptr[s][way] = NO_PAGE
            self._page_gen[s][way] = 0
        else:
            slot, gen = self._ensure_page(record.target >> self.page_shift)
            self._in_off[s][way] = record.target & ((1 << self.page_shift) - 1)
            self._page_ptr[s][way] = slot
            self._page_gen[s][way] = gen

    def commit_update(self, record: BranchRecord) -> UpdateOutcome:
        s, tag = self._index_tag(record.pc)
        way = self._probe(s, tag)
        if way is not None:
            self._lru[s].touch(way)
            kind = self._kind[s][way]
            if record.kind is BranchKind.RETURN:
                if kind is BranchKind.RETURN:
                    return UpdateOutcome("hit", "main", way)
            elif (kind == record.kind
                  and self._in_off[s][way] == (record.target & ((1 << self.page_shift) - 1))
                  and self._resolve(s, way) == record.target >> self.page_shift):
                return UpdateOutcome("hit", "main", way)
            self._write(s, way, tag, record)
            return UpdateOutcome("rewrite", "main", way)
        way = select_victim(self._valid[s], self._lru[s], range(self.assoc))
        victim_valid = self._valid[s][way]
        if not victim_valid:
            self._valid_count += 1
        self._valid[s][way] = True
        self._write(s, way, tag, record)
        self._lru[s].touch(way)
        return UpdateOutcome("alloc", "main", way, victim_valid)

    def occupancy_items(self):
        return [("main", self._valid_count, self.main_entries),
                ("page", self._pt_valid_count, self.page_entries)]

    def check_invariants(self):
        if sum(v.count(True) for v in self._valid) != self._valid_count:
            raise InvariantError("main valid count drift")
        if self._pt_valid.count(True) != self._pt_valid_count:
            raise InvariantError("page valid count drift")
        for lru in self._lru:
            lru.check()
        for slot in range(self.page_entries):
            if self._pt_valid[slot] != (self._pt_map.get(self._pt_page[slot]) == slot):
                raise InvariantError(f"page map out of sync at slot {slot}")


class PdedeBtb(BtbModel):
    """Page/region-deduplicating BTB with same-page way reservation.

    Half the ways of each main set accept only same-page branches (target
    page equals the branch's own, so nothing but the in-page offset is
    stored).  Different-page branches go to the general ways and carry a
    pointer chain: main entry -> page slot (low page bits within the region,
    16-way set-associative on a page-number hash) -> region slot (the high
    page bits, tiny and fully associative).
    """

    name = "pdede"

    PAGE_ASSOC = 16

    def __init__(self, main_entries: int, page_entries: int,
                 region_entries: int = 4, assoc: int = 8,
                 isa: IsaProfile = ALIGNED4, tag_bits: int = 12,
                 page_shift: int = PAGE_SHIFT, region_pages_log2: int = 8):
        if main_entries < assoc:
            raise ValueError(f"need at least {assoc} main entries")
        self.isa = isa
        self.tag_bits = tag_bits
        self.page_shift = page_shift
        self.region_pages_log2 = region_pages_log2
        self.assoc = assoc
        self.reserved_ways = assoc // 2  # ways [0, reserved) are same-page only
        self.sets = main_entries // assoc
        self.main_entries = self.sets * assoc
        self.page_assoc = min(self.PAGE_ASSOC, page_entries)
        self.page_sets = max(1, page_entries // self.page_assoc)
        self.page_entries = self.page_sets * self.page_assoc
        self.region_entries = region_entries
        self.reset()

    def reset(self):
        ways, sets = self.assoc, self.sets
        self._valid = [[False] * ways for _ in range(sets)]
        self._tag = [[0] * ways for _ in range(sets)]
        self._kind = [[BranchKind.CONDITIONAL] * ways for _ in range(sets)]
        self._same = [[True] * ways for _ in range(sets)]
        self._in_off = [[0] * ways for _ in range(sets)]
        self._page_ptr = [[NO_PAGE] * ways for _ in range(sets)]
        self._page_gen = [[0] * ways for _ in range(sets)]
        self._lru = [LruState(ways) for _ in range(sets)]
        self._valid_count = 0
        pa, ps = self.page_assoc, self.page_sets
        self._pt_low = [[0] * pa for _ in range(ps)]
        self._pt_rptr = [[0] * pa for _ in range(ps)]
        self._pt_rgen = [[0] * pa for _ in range(ps)]
        self._pt_valid = [[False] * pa for _ in range(ps)]
        self._pt_gen = [[0] * pa for _ in range(ps)]
        self._pt_lru = [LruState(pa) for _ in range(ps)]
        self._pt_valid_count = 0
        n = self.region_entries
        self._rt_region = [0] * n
        self._rt_valid = [False] * n
        self._rt_gen = [0] * n
        self._rt_lru = LruState(n)
        self._rt_valid_count = 0
        self.page_probes = 0  # side-table references, for tests

    # -- side tables ----------------------------------------------------

    def _page_set(self, page: int) -> int:
        if self.page_sets == 1:
            return 0
        return xor_fold(page, 30) % self.page_sets

    def _ensure_region(self, region: int):
        for slot in range(self.region_entries):
            if self._rt_valid[slot] and self._rt_region[slot] == region:
                self._rt_lru.touch(slot)
                return slot, self._rt_gen[slot]
        slot = select_victim(self._rt_valid, self._rt_lru, range(self.region_entries))
        if not self._rt_valid[slot]:
            self._rt_valid_count += 1
        self._rt_gen[slot] += 1
        self._rt_region[slot] = region
        self._rt_valid[slot] = True
        self._rt_lru.touch(slot)
        return slot, self._rt_gen[slot]

    def _page_slot_number(self, ps: int, slot: int) -> Optional[int]:
        """Page number held by a page slot, or None if its region link died."""
        rptr = self._pt_rptr[ps][slot]
        if not self._rt_valid[rptr] or self._rt_gen[rptr] != self._pt_rgen[ps][slot]:
            return None
        return ((self._rt_region[rptr] << self.region_pages_log2)
                | self._pt_low[ps][slot])

    def _ensure_page(self, page: int):
        self.page_probes += 1
        ps = self._page_set(page)
        low = page & ((1 << self.region_pages_log2) - 1)
        for slot in range(self.page_assoc):
            if (self._pt_valid[ps][slot] and self._pt_low[ps][slot] == low
                    and self._page_slot_number(ps, slot) == page):
                self._pt_lru[ps].touch(slot)
                return ps, slot, self._pt_gen[ps][slot]
        rslot, rgen = self._ensure_region(page >> self.region_pages_log2)
        slot = select_victim(self._pt_valid[ps], self._pt_lru[ps],
                             range(self.page_assoc))
        if not self._pt_valid[ps][slot]:
            self._pt_valid_count += 1
        self._pt_gen[ps][slot] += 1
        self._pt_low[ps][slot] = low
        self._pt_rptr[ps][slot] = rslot
        self._pt_rgen[ps][slot] = rgen
        self._pt_valid[ps][slot] = True
        self._pt_lru[ps].touch(slot)
        return ps, slot, self._pt_gen[ps][slot]

    def _resolve(self, s: int, way: int) -> Optional[int]:
        ptr = self._page_ptr[s][way]
        if ptr == NO_PAGE:
            return None
        ps, slot = divmod(ptr, self.page_assoc)
        if not self._pt_valid[ps][slot] or self._pt_gen[ps][slot] != self._page_gen[s][way]:
            return None
        return self._page_slot_number(ps, slot)

    # -- main table -------------------------------------------------------

    def _index_tag(self, pc: int):
        line = pc >> self.isa.align_shift
        return line % self.sets, xor_fold(line // self.sets, self.tag_bits)

    def _probe(self, s: int, tag: int) -> Optional[int]:
        valid, tags = self._valid[s], self._tag[s]
        for way in range(self.assoc):
            if valid[way] and tags[way] == tag:
                return way
        return None

    def lookup(self, pc: int) -> Optional[Prediction]:
        s, tag = self._index_tag(pc)
        way = self._probe(s, tag)
        if way is None:
            return None
        kind = self._kind[s][way]
        if kind is BranchKind.RETURN:
            self._lru[s].touch(way)
            return Prediction(None, kind, f"way{way}")
        if self._same[s][way]:
            # Page bits come straight from the PC; no side-table access.
            target = ((pc >> self.page_shift) << self.page_shift) | self._in_off[s][way]
            self._lru[s].touch(way)
            return Prediction(target, kind, f"way{way}")
        page = self._resolve(s, way)
        if page is None:
            return None  # stale page or region link: miss, never a wrong target
        self._lru[s].touch(way)
        return Prediction((page << self.page_shift) | self._in_off[s][way],
                          kind, f"way{way}")

    def _write(self, s: int, way: int, tag: int, record: BranchRecord,
               same: bool):
        if same is False and way < self.reserved_ways:
            raise InvariantError(f"different-page entry written to reserved way {way}")
        self._tag[s][way] = tag
        self._kind[s][way] = record.kind
        if record.kind is BranchKind.RETURN:
            self._same[s][way] = True
            self._in_off[s][way] = 0
            self._page_ptr[s][way] = NO_PAGE
            return
        self._same[s][way] = same
        self._in_off[s][way] = record.target & ((1 << self.page_shift) - 1)
        if same:
            self._page_ptr[s][way] = NO_PAGE
        else:
            ps, slot, gen = self._ensure_page(record.target >> self.page_shift)
            self._page_ptr[s][way] = ps * self.page_assoc + slot
            self._page_gen[s][way] = gen

    def commit_update(self, record: BranchRecord) -> UpdateOutcome:
        pc, target = record.pc, record.target
        same = (record.kind is BranchKind.RETURN
                or (pc >> self.page_shift) == (target >> self.page_shift))
        s, tag = self._index_tag(pc)
        way = self._probe(s, tag)
        if way is not None:
            if not same and way < self.reserved_ways:
                # Target moved off-page but a reserved way cannot hold the
                # pointer: drop the entry and re-allocate in a general way.
                self._valid[s][way] = False
                self._valid_count -= 1
                return self._allocate(record, same, migrated=True)
            self._lru[s].touch(way)
            if self._entry_matches(s, way, record, same):
                return UpdateOutcome("hit", "main", way)
            self._write(s, way, tag, record, same)
            return UpdateOutcome("rewrite", "main", way)
        return self._allocate(record, same)

    def _entry_matches(self, s: int, way: int, record: BranchRecord,
                       same: bool) -> bool:
        if self._kind[s][way] != record.kind:
            return False
        if record.kind is BranchKind.RETURN:
            return True
        if self._same[s][way] != same:
            return False
        if self._in_off[s][way] != (record.target & ((1 << self.page_shift) - 1)):
            return False
        if same:
            return True
        return self._resolve(s, way) == record.target >> self.page_shift

    def _allocate(self, record: BranchRecord, same: bool,
                  migrated: bool = False) -> UpdateOutcome:
        s, tag = self._index_tag(record.pc)
        if same:
            # Invalid-first over all ways naturally prefers the reserved
            # (lowest-index) half before spilling into general ways.
            way = select_victim(self._valid[s], self._lru[s], range(self.assoc))
        else:
            way = select_victim(self._valid[s], self._lru[s],
                                range(self.reserved_ways, self.assoc))
        victim_valid = self._valid[s][way]
        if not victim_valid:
            self._valid_count += 1
        self._valid[s][way] = True
        self._write(s, way, tag, record, same)
        self._lru[s].touch(way)
        return UpdateOutcome("migrate" if migrated else "alloc", "main",
                             way, victim_valid)

    def occupancy_items(self):
        return [("main", self._valid_count, self.main_entries),
                ("page", self._pt_valid_count, self.page_entries),
                ("region", self._rt_valid_count, self.region_entries)]

    def check_invariants(self):
        count = 0
        for s in range(self.sets):
            self._lru[s].check()
            for way in range(self.assoc):
                if not self._valid[s][way]:
                    continue
                count += 1
                if way < self.reserved_ways and not self._same[s][way]:
                    raise InvariantError(
                        f"set {s} reserved way {way} holds a different-page entry")
        if count != self._valid_count:
            raise InvariantError("main valid count drift")
        if sum(v.count(True) for v in self._pt_valid) != self._pt_valid_count:
            raise InvariantError("page valid count drift")
