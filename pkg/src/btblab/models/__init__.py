"""Functional BTB models behind one lookup/commit-update interface."""

from __future__ import annotations

from typing import Optional

from ..core import ALIGNED4, IsaProfile
from .. import storage
from .base import (BtbModel, InvariantError, LruState, Prediction,
                   UpdateOutcome, select_victim)
from .btbx import BtbX, select_victim_restricted_lru
from .conv import ConvBtb
from .paged import PdedeBtb, RBtb

MODEL_NAMES = ("conv", "rbtb", "pdede", "btbx")

RBTB_PAGE_ENTRY_BITS = 37  # valid + full 36-bit page number


class ConfigError(ValueError):
    """A model/budget combination that cannot be resolved."""


def _match_preset(budget_kb: float, isa: IsaProfile) -> storage.BudgetPreset:
    preset = storage.match_preset(budget_kb, isa)
    if preset is None:
        budgets = ", ".join(f"{b:g}" for b in storage.standard_budgets_kb(isa))
        raise ConfigError(f"budget {budget_kb:g} KB matches no preset geometry "
                          f"(within 0.01 KB); presets: {budgets}")
    return preset


def build_model(name: str, budget_kb: Optional[float] = None,
                sets: Optional[int] = None,
                isa: IsaProfile = ALIGNED4) -> BtbModel:
    """Instantiate a model sized for a canonical storage budget.

    Budgets resolve only to preset geometries (exact within 0.01 KB) so a
    typo cannot silently configure a different structure; `sets` sizes the
    set-associative models directly instead.
    """
    if name not in MODEL_NAMES:
        raise ConfigError(f"unknown model {name!r}; choose from {', '.join(MODEL_NAMES)}")
    if (budget_kb is None) == (sets is None):
        raise ConfigError("specify exactly one of budget_kb or sets")

    if name == "btbx":
        if sets is not None:
            return BtbX(storage.geometry_for_isa(isa, sets), isa)
        return BtbX(_match_preset(budget_kb, isa).geometry(isa), isa)

    if name == "conv":
        if sets is not None:
            return ConvBtb(sets * 8, isa=isa)
        preset = _match_preset(budget_kb, isa)
        entries = storage.conv_capacity(preset.total_bits(isa),
                                        storage.conv_geometry(isa))
        return ConvBtb(entries, isa=isa,
                       tag_bits=storage.conv_geometry(isa).tag_bits)

    # The paged organizations are preset-driven; direct --sets sizing would
    # leave their side tables unspecified.
    if sets is not None:
        raise ConfigError(f"model {name!r} is sized by --budget-kb, not --sets")
    preset = _match_preset(budget_kb, isa)
    row = storage.STANDARD_PRESETS.index(preset)
    pp = storage.PDEDE_PRESETS[row]
    if name == "pdede":
        return PdedeBtb(pp.main_entries, pp.page_entries, pp.region_entries,
                        isa=isa)
    # rbtb: same page-table size as the pdede preset, fully associative;
    # the remaining bits buy pointer-carrying main entries.
    budget_bits = preset.total_bits(isa)
    page_bits = pp.page_entries * RBTB_PAGE_ENTRY_BITS
    entry_bits = (18 + (12 - isa.align_shift)
                  + max(1, (pp.page_entries - 1).bit_length()))
    main_entries = (budget_bits - page_bits) // entry_bits
    return RBtb(main_entries, pp.page_entries, isa=isa)


__all__ = [
    "BtbModel", "BtbX", "ConfigError", "ConvBtb", "InvariantError",
    "LruState", "MODEL_NAMES", "PdedeBtb", "Prediction", "RBtb",
    "UpdateOutcome", "build_model", "select_victim",
    "select_victim_restricted_lru",
]
