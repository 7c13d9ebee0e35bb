"""btblab: trace-driven simulation and storage accounting for BTB designs."""

__version__ = "0.1.0"

from .core import (ALIGNED4, BYTE, BranchKind, BranchRecord, IsaProfile,
                   OffsetEncoding, ReturnAddressStack, decode_target,
                   encode_offset, required_offset_width)
from .models import BtbX, ConvBtb, PdedeBtb, RBtb, build_model
from .sim import Metrics, SimConfig, compare, offset_histogram, run
from .storage import (BtbxGeometry, ConvGeometry, btbx_total_bits,
                      capacity_table, conv_capacity, x86_geometry)
from .trace import (GeneratorSpec, TraceFile, generate, load_trace,
                    read_trace, save_trace, write_trace)

__all__ = [
    "ALIGNED4", "BYTE", "BranchKind", "BranchRecord", "BtbX", "BtbxGeometry",
    "ConvBtb", "ConvGeometry", "GeneratorSpec", "IsaProfile", "Metrics",
    "OffsetEncoding", "PdedeBtb", "RBtb", "ReturnAddressStack", "SimConfig",
    "TraceFile", "btbx_total_bits", "build_model", "capacity_table",
    "compare", "conv_capacity", "decode_target", "encode_offset", "generate",
    "load_trace", "offset_histogram", "read_trace", "required_offset_width",
    "run", "save_trace", "write_trace", "x86_geometry",
]
