"""Address arithmetic, ISA profiles, the target-offset codec, and the RAS.

The offset codec is the storage trick everything else builds on: instead of
keeping a full target address per branch, keep only the target's low-order
bits up to (and including) the most significant bit where the target differs
from the branch PC.  The full target is rebuilt by concatenation with the
PC's untouched high bits, so no adder is needed on the recovery path.  On an
ISA with fixed 4-byte instruction alignment the two trailing zero bits are
never stored, saving two more bits per entry.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import IntEnum
from typing import NamedTuple, Optional


class BranchKind(IntEnum):
    """Dynamic branch categories; values double as the on-disk trace codes."""

    CONDITIONAL = 0
    UNCONDITIONAL_DIRECT = 1
    CALL = 2
    RETURN = 3
    INDIRECT = 4
    INDIRECT_CALL = 5

    @property
    def always_taken(self) -> bool:
        return self is not BranchKind.CONDITIONAL

    @property
    def is_call(self) -> bool:
        return self in (BranchKind.CALL, BranchKind.INDIRECT_CALL)


KIND_NAMES = {
    BranchKind.CONDITIONAL: "cond",
    BranchKind.UNCONDITIONAL_DIRECT: "uncond",
    BranchKind.CALL: "call",
    BranchKind.RETURN: "ret",
    BranchKind.INDIRECT: "ind",
    BranchKind.INDIRECT_CALL: "ind_call",
}
KINDS_BY_NAME = {name: kind for kind, name in KIND_NAMES.items()}


@dataclass(frozen=True)
class IsaProfile:
    """Address-space shape a trace and all models agree on.

    align_shift is log2 of the instruction alignment in bytes: 2 for a
    fixed-width 4-byte-aligned ISA, 0 for a variable-length (byte-aligned)
    one.  Aligned mode never stores the guaranteed-zero low bits of a
    target, so the widest storable offset is va_bits - align_shift.
    """

    va_bits: int = 48
    align_shift: int = 2

    def __post_init__(self):
        if not 32 <= self.va_bits <= 64:
            raise ValueError(f"va_bits {self.va_bits} outside [32, 64]")
        if not 0 <= self.align_shift <= 2:
            raise ValueError(f"align_shift {self.align_shift} outside [0, 2]")

    @property
    def max_stored_target_bits(self) -> int:
        return self.va_bits - self.align_shift

    def valid_address(self, value: int) -> bool:
        if value < 0 or value >= (1 << self.va_bits):
            return False
        return value & ((1 << self.align_shift) - 1) == 0

    def check_address(self, value: int, what: str = "address") -> int:
        if not self.valid_address(value):
            raise ValueError(f"{what} {value:#x} invalid for {self.va_bits}-bit "
                             f"space with {1 << self.align_shift}-byte alignment")
        return value


# Trace isa_mode codes: 0 = 4-byte aligned instructions, 1 = byte-aligned.
ALIGNED4 = IsaProfile(va_bits=48, align_shift=2)
BYTE = IsaProfile(va_bits=48, align_shift=0)

_MODE_CODES = {0: ALIGNED4, 1: BYTE}
_MODE_NAMES = {0: "aligned4", 1: "byte"}


def profile_for_mode(mode: int) -> IsaProfile:
    try:
        return _MODE_CODES[mode]
    except KeyError:
        raise ValueError(f"unknown isa_mode code {mode}") from None


def mode_for_profile(isa: IsaProfile) -> int:
    for code, prof in _MODE_CODES.items():
        if prof.align_shift == isa.align_shift:
            return code
    raise ValueError(f"no trace mode for align_shift {isa.align_shift}")


def mode_name(mode: int) -> str:
    return _MODE_NAMES[mode]


class OffsetEncoding(NamedTuple):
    """A stored target offset: the width kept and the bit pattern itself."""

    stored_width: int
    bits: int


@dataclass(slots=True)
class BranchRecord:
    """One dynamic branch event.

    gap counts the non-branch instructions committed since the previous
    record, which is what MPKI denominators are built from.
    """

    pc: int
    target: int
    kind: BranchKind
    taken: bool
    gap: int = 0

    def validate(self, isa: IsaProfile) -> None:
        isa.check_address(self.pc, "pc")
        isa.check_address(self.target, "target")
        if self.gap < 0:
            raise ValueError(f"negative gap {self.gap}")
        if self.kind.always_taken and not self.taken:
            raise ValueError(f"{KIND_NAMES[self.kind]} branch at {self.pc:#x} "
                             "marked not-taken")


def required_offset_width(pc: int, target: int, isa: IsaProfile = ALIGNED4) -> int:
    """Minimum stored offset width for this pc/target pair.

    The governing position is the most significant bit where pc and target
    differ (1-based from the LSB); alignment bits below it are never stored.
    Zero when pc == target.
    """
    n = (pc ^ target).bit_length()
    if n == 0:
        return 0
    return n - isa.align_shift


def encode_offset(pc: int, target: int, isa: IsaProfile = ALIGNED4) -> OffsetEncoding:
    """Encode target relative to pc as (stored_width, low offset bits)."""
    width = required_offset_width(pc, target, isa)
    bits = (target >> isa.align_shift) & ((1 << width) - 1)
    return OffsetEncoding(width, bits)


def decode_target(pc: int, enc: OffsetEncoding, isa: IsaProfile = ALIGNED4) -> int:
    """Rebuild a full target by splicing stored offset bits into the pc.

    Pure concatenation: the pc keeps every bit above the stored region, the
    offset (shifted back up by the alignment) supplies the rest.
    """
    n = enc.stored_width + isa.align_shift
    return (pc & ~((1 << n) - 1)) | (enc.bits << isa.align_shift)


def xor_fold(value: int, bits: int) -> int:
    """Fold an arbitrarily wide value down to `bits` bits by repeated XOR.

    Used to hash full tags (and page numbers) into the short fields hardware
    actually stores; deterministic so aliasing is reproducible run to run.
    """
    if bits <= 0:
        return 0
    mask = (1 << bits) - 1
    acc = 0
    while value:
        acc ^= value & mask
        value >>= bits
    return acc


class ReturnAddressStack:
    """Fixed-capacity LIFO of return addresses.

    Pushing past capacity silently overwrites the oldest entry; popping when
    empty returns None and bumps `underflows` instead of raising, so a
    simulation can keep going and report the event.
    """

    def __init__(self, capacity: int = 64):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._stack = deque(maxlen=capacity)
        self.underflows = 0

    def push(self, return_address: int) -> None:
        self._stack.append(return_address)

    def pop(self) -> Optional[int]:
        if not self._stack:
            self.underflows += 1
            return None
        return self._stack.pop()

    def reset(self) -> None:
        self._stack.clear()
        self.underflows = 0

    def __len__(self) -> int:
        return len(self._stack)
