"""Bit-exact storage accounting for the four BTB organizations.

Per-entry overhead everywhere is valid(1) + tag(12) + type(2) + lru(3) =
18 bits; that split is the unique common choice that makes a conventional
full-target entry come to 64 bits (1+12+2+46+3) and an asymmetric-way set
come to 224 bits (8x18 + 80 offset bits) at the same time.  The companion
full-target buffer uses valid(1) + tag(15) + type(2) + target(46) = 64-bit
entries and is direct-mapped, so it carries no lru bits.

Budgets are carried in bits internally; 1 KB = 8192 bits, and displayed KB
values round half-up at the precision carried by each preset row.
"""

from __future__ import annotations

import decimal
import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .core import IsaProfile, ALIGNED4

log = logging.getLogger(__name__)

BITS_PER_KB = 8192

PER_ENTRY_OVERHEAD_BITS = 18       # valid 1 + tag 12 + type 2 + lru 3
XC_ENTRY_BITS = 64                 # valid 1 + tag 15 + type 2 + target 46

ALIGNED4_WAY_WIDTHS = (0, 4, 5, 7, 9, 11, 19, 25)   # sum 80
BYTE_WAY_WIDTHS = (0, 5, 6, 7, 9, 12, 20, 27)       # sum 86


class GeometryError(ValueError):
    """Structurally impossible geometry (zero or non-power-of-two sets...)."""


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class BtbxGeometry:
    """Asymmetric-way BTB shape: 8 ways of fixed, non-decreasing offset widths
    plus a tiny direct-mapped companion holding full targets."""

    sets: int
    way_widths: tuple = ALIGNED4_WAY_WIDTHS
    tag_bits: int = 12
    type_bits: int = 2
    valid_bits: int = 1
    lru_bits: int = 3
    xc_entry_bits: int = XC_ENTRY_BITS

    def __post_init__(self):
        if not _is_pow2(self.sets):
            raise GeometryError(f"sets must be a power of two, got {self.sets}")
        if len(self.way_widths) != 8:
            raise GeometryError("exactly 8 way widths required")
        if any(b > a for a, b in zip(self.way_widths[1:], self.way_widths)):
            raise GeometryError(f"way widths must be non-decreasing: {self.way_widths}")

    @property
    def ways(self) -> int:
        return len(self.way_widths)

    @property
    def xc_entries(self) -> int:
        # One companion entry per 8 sets; tiny test geometries keep a single
        # slot rather than rounding down to an unusable zero.
        return max(1, self.sets // 8)

    @property
    def entry_overhead_bits(self) -> int:
        return self.valid_bits + self.tag_bits + self.type_bits + self.lru_bits

    @property
    def set_bits(self) -> int:
        return self.ways * self.entry_overhead_bits + sum(self.way_widths)

    @property
    def branch_capacity(self) -> int:
        return self.sets * self.ways + self.xc_entries


@dataclass(frozen=True)
class ConvGeometry:
    """Conventional BTB entry: full target plus the common overhead."""

    target_bits: int = 46
    tag_bits: int = 12
    type_bits: int = 2
    valid_bits: int = 1
    lru_bits: int = 3

    @property
    def entry_bits(self) -> int:
        return (self.valid_bits + self.tag_bits + self.type_bits
                + self.target_bits + self.lru_bits)


def conv_geometry(isa: IsaProfile = ALIGNED4) -> ConvGeometry:
    # Byte-aligned mode needs the 48-bit target; the tag shrinks so the
    # entry stays 64 bits.
    target = isa.max_stored_target_bits
    return ConvGeometry(target_bits=target, tag_bits=64 - 6 - target)


def arm64_geometry(sets: int = 512) -> BtbxGeometry:
    return BtbxGeometry(sets=sets, way_widths=ALIGNED4_WAY_WIDTHS)


def x86_geometry(sets: int = 512) -> BtbxGeometry:
    """Way widths re-sized for byte-granular offsets (set costs 230 bits)."""
    return BtbxGeometry(sets=sets, way_widths=BYTE_WAY_WIDTHS)


def geometry_for_isa(isa: IsaProfile, sets: int) -> BtbxGeometry:
    if isa.align_shift == 0:
        return x86_geometry(sets)
    return arm64_geometry(sets)


def btbx_total_bits(g: BtbxGeometry) -> int:
    """Total storage: all sets plus the direct-mapped companion."""
    return g.sets * g.set_bits + g.xc_entries * g.xc_entry_bits


def conv_capacity(budget_bits: int, g: Optional[ConvGeometry] = None) -> int:
    """Whole entries a conventional BTB fits in the budget."""
    if budget_bits <= 0:
        raise ValueError(f"budget_bits must be positive, got {budget_bits}")
    g = g or ConvGeometry()
    return budget_bits // g.entry_bits


def kb(bits: int) -> float:
    return bits / BITS_PER_KB


def round_kb(value: float, places: int) -> float:
    """Round half-up at a fixed number of decimals (display convention)."""
    q = decimal.Decimal(10) ** -places
    return float(decimal.Decimal(repr(value)).quantize(q, rounding=decimal.ROUND_HALF_UP))


@dataclass(frozen=True)
class PdedePreset:
    """Published per-budget split for the page/region-deduplicating design.

    Its per-field bit layout is not fully itemized anywhere, so capacities
    are preset lookups rather than re-derived; the functional model is
    parameterized independently.  Region storage is fixed (4 entries,
    0.0107 KB) across budgets.
    """

    budget_kb: float
    page_btb_kb: float
    main_btb_kb: float
    avg_entry_bits: float
    branch_capacity: int
    page_entries: int
    region_entries: int = 4

    @property
    def main_entries(self) -> int:
        return self.branch_capacity

    @property
    def page_ptr_bits(self) -> int:
        return max(1, (self.page_entries - 1).bit_length())


@dataclass(frozen=True)
class BudgetPreset:
    """One canonical budget row: geometry, exact bits, display precision."""

    sets: int
    kb_decimals: int

    def geometry(self, isa: IsaProfile = ALIGNED4) -> BtbxGeometry:
        return geometry_for_isa(isa, self.sets)

    def total_bits(self, isa: IsaProfile = ALIGNED4) -> int:
        return btbx_total_bits(self.geometry(isa))

    def budget_kb(self, isa: IsaProfile = ALIGNED4) -> float:
        return kb(self.total_bits(isa))

    def kb_label(self, isa: IsaProfile = ALIGNED4) -> str:
        rounded = round_kb(self.budget_kb(isa), self.kb_decimals)
        text = f"{rounded:.{self.kb_decimals}f}"
        return text


# The seven canonical budget points (256 .. 16K main entries).
STANDARD_PRESETS = (
    BudgetPreset(sets=32, kb_decimals=1),
    BudgetPreset(sets=64, kb_decimals=1),
    BudgetPreset(sets=128, kb_decimals=1),
    BudgetPreset(sets=256, kb_decimals=2),
    BudgetPreset(sets=512, kb_decimals=1),
    BudgetPreset(sets=1024, kb_decimals=0),
    BudgetPreset(sets=2048, kb_decimals=0),
)

# Page-dedup presets keyed by the same canonical budgets.  Page table halves
# along with the main table; pointer width tracks log2(page entries), which
# is why the average entry grows half a bit per doubling.
PDEDE_PRESETS = (
    PdedePreset(0.90625, 0.078, 0.817, 32.0, 210, 32),
    PdedePreset(1.8125, 0.156, 1.645, 32.5, 415, 64),
    PdedePreset(3.625, 0.312, 3.3, 33.0, 820, 128),
    PdedePreset(7.25, 0.625, 6.6, 33.5, 1617, 256),
    PdedePreset(14.5, 1.25, 13.2, 34.0, 3190, 512),
    PdedePreset(29.0, 2.5, 26.5, 34.5, 6292, 1024),
    PdedePreset(58.0, 5.0, 53.0, 35.0, 12405, 2048),
)

BUDGET_MATCH_TOLERANCE_KB = 0.01


def standard_budgets_kb(isa: IsaProfile = ALIGNED4) -> list:
    return [p.budget_kb(isa) for p in STANDARD_PRESETS]


def match_preset(budget_kb: float, isa: IsaProfile = ALIGNED4) -> Optional[BudgetPreset]:
    for preset in STANDARD_PRESETS:
        if abs(preset.budget_kb(isa) - budget_kb) <= BUDGET_MATCH_TOLERANCE_KB:
            return preset
    return None


def pdede_preset_for(budget_kb: float) -> Optional[PdedePreset]:
    for preset in PDEDE_PRESETS:
        if abs(preset.budget_kb - budget_kb) <= BUDGET_MATCH_TOLERANCE_KB:
            return preset
    return None


def btbx_geometry_for_budget(budget_kb: float,
                             isa: IsaProfile = ALIGNED4) -> Optional[BtbxGeometry]:
    """Geometry for a budget: exact preset match, else the largest that fits."""
    preset = match_preset(budget_kb, isa)
    if preset is not None:
        return preset.geometry(isa)
    budget_bits = int(budget_kb * BITS_PER_KB)
    best = None
    sets = 8
    while True:
        g = geometry_for_isa(isa, sets)
        if btbx_total_bits(g) > budget_bits:
            break
        best = g
        sets *= 2
    return best


@dataclass(frozen=True)
class StorageReport:
    """Storage total for one organization at one configuration."""

    total_bits: int
    branch_capacity: int
    breakdown: dict = field(default_factory=dict)

    @property
    def total_kb(self) -> float:
        return self.total_bits / BITS_PER_KB


def btbx_storage_report(g: BtbxGeometry) -> StorageReport:
    main = g.sets * g.set_bits
    xc = g.xc_entries * g.xc_entry_bits
    return StorageReport(
        total_bits=main + xc,
        branch_capacity=g.branch_capacity,
        breakdown={"main_bits": main, "xc_bits": xc},
    )


@dataclass(frozen=True)
class CapacityRow:
    """One row of the cross-organization branch-capacity comparison."""

    budget_kb: float
    budget_label: str
    budget_bits: int
    btbx: Optional[int]
    pdede: Optional[int]
    conv: int
    extrapolated: bool = False

    @property
    def ratio_conv(self) -> Optional[float]:
        if self.btbx is None or self.conv == 0:
            return None
        return self.btbx / self.conv

    @property
    def ratio_pdede(self) -> Optional[float]:
        if self.btbx is None or not self.pdede:
            return None
        return self.btbx / self.pdede


def capacity_table(budgets_kb: Optional[Iterable] = None,
                   isa: IsaProfile = ALIGNED4) -> list:
    """Branch counts per organization at each budget.

    Canonical budgets use preset geometries and the published page-dedup
    capacities; anything else is flagged extrapolated, with the pdede column
    left empty (there is no preset to quote) and a warning emitted.
    """
    if budgets_kb is None:
        budgets_kb = standard_budgets_kb(isa)
    conv_g = conv_geometry(isa)
    rows = []
    for budget in budgets_kb:
        preset = match_preset(budget, isa)
        if preset is not None:
            bits = preset.total_bits(isa)
            label = preset.kb_label(isa)
            geometry = preset.geometry(isa)
            btbx = geometry.branch_capacity
            # page-dedup capacities were published for the aligned-mode
            # budgets only; byte-mode rows leave the column empty
            pdede_preset = pdede_preset_for(preset.budget_kb(isa))
            pdede = pdede_preset.branch_capacity if pdede_preset else None
            extrapolated = False
        else:
            bits = int(budget * BITS_PER_KB)
            label = f"{budget:g}"
            geometry = btbx_geometry_for_budget(budget, isa)
            btbx = geometry.branch_capacity if geometry else None
            pdede = None
            extrapolated = True
            log.warning("budget %.5g KB matches no preset: pdede column omitted, "
                        "other columns extrapolated", budget)
        rows.append(CapacityRow(
            budget_kb=kb(bits),
            budget_label=label,
            budget_bits=bits,
            btbx=btbx,
            pdede=pdede,
            conv=conv_capacity(bits, conv_g),
            extrapolated=extrapolated,
        ))
    return rows


CAPACITY_CSV_HEADER = "budget_kb,btbx,pdede,conv,ratio_conv,ratio_pdede"


def capacity_table_csv(rows: Iterable) -> str:
    """Render capacity rows with the stable CSV schema."""
    lines = [CAPACITY_CSV_HEADER]
    for row in rows:
        btbx = "" if row.btbx is None else str(row.btbx)
        pdede = "" if row.pdede is None else str(row.pdede)
        rc = "" if row.ratio_conv is None else f"{row.ratio_conv:.4f}"
        rp = "" if row.ratio_pdede is None else f"{row.ratio_pdede:.4f}"
        lines.append(f"{row.budget_label},{btbx},{pdede},{row.conv},{rc},{rp}")
    return "\n".join(lines) + "\n"
