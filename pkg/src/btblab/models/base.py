"""Shared lookup/update contract and true-LRU bookkeeping for all BTB models.

Every organization exposes the same two entry points: `lookup(pc)` is the
front-end probe (it may refresh recency on a valid hit but never allocates
or evicts), and `commit_update(record)` is the only path that changes
contents, driven by taken branches at commit.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from typing import Optional

from ..core import BranchKind, BranchRecord


class InvariantError(AssertionError):
    """Internal model state violated a structural invariant (a bug)."""


@dataclass(slots=True, frozen=True)
class Prediction:
    """A BTB hit: target is None when the entry says "take it from the RAS"
    (only ever the case for return-type entries)."""

    target: Optional[int]
    kind: BranchKind
    source: str

    @property
    def from_ras(self) -> bool:
        return self.target is None


@dataclass(slots=True, frozen=True)
class UpdateOutcome:
    """What one commit-stage update did.

    kind: "hit" (recency only), "rewrite" (target refreshed in place),
    "migrate" (entry moved between slots/structures), "alloc" (fresh fill).
    """

    kind: str
    structure: str
    way: Optional[int] = None
    victim_valid: bool = False

    def event(self) -> str:
        way = "-" if self.way is None else str(self.way)
        return f"{self.kind}:{self.structure}:{way}"


class LruState:
    """True-LRU recency for one set: counters hold a permutation of
    0..ways-1 with higher meaning more recently used."""

    __slots__ = ("counters",)

    def __init__(self, ways: int):
        self.counters = list(range(ways))

    def touch(self, way: int) -> None:
        counters = self.counters
        old = counters[way]
        for i, c in enumerate(counters):
            if c > old:
                counters[i] = c - 1
        counters[way] = len(counters) - 1

    def oldest(self, candidates) -> int:
        counters = self.counters
        return min(candidates, key=counters.__getitem__)

    def check(self) -> None:
        if sorted(self.counters) != list(range(len(self.counters))):
            raise InvariantError(f"recency counters not a permutation: {self.counters}")


class RecencyLru:
    """True LRU over many slots with O(1) touch and oldest-slot queries;
    recency order is identical to counter-based LRU.  Suits large
    fully-associative tables where per-touch counter sweeps would dominate."""

    __slots__ = ("_order",)

    def __init__(self, slots: int):
        self._order = OrderedDict((i, None) for i in range(slots))

    def touch(self, slot: int) -> None:
        self._order.move_to_end(slot)

    def oldest(self) -> int:
        return next(iter(self._order))


def select_victim(valid, lru: LruState, eligible) -> int:
    """Victim way among `eligible`: any invalid way first (lowest index),
    otherwise the least recently used of the eligible ways.  Recency of
    ineligible ways never matters for the choice."""
    if not eligible:
        raise InvariantError("victim selection over an empty eligible set")
    for way in eligible:
        if not valid[way]:
            return way
    return lru.oldest(eligible)


class BtbModel:
    """Interface shared by the four organizations."""

    name = "?"

    def lookup(self, pc: int) -> Optional[Prediction]:
        raise NotImplementedError

    def commit_update(self, record: BranchRecord) -> UpdateOutcome:
        raise NotImplementedError

    def reset(self) -> None:
        raise NotImplementedError

    def occupancy_items(self):
        """[(structure name, currently valid entries, capacity), ...]"""
        raise NotImplementedError

    def occupancy(self) -> dict:
        return {name: (valid / cap if cap else 0.0)
                for name, valid, cap in self.occupancy_items()}

    def check_invariants(self) -> None:
        pass
