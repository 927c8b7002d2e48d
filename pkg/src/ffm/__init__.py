"""FFM: a complex-decay recurrent memory cell on a small numpy autodiff core."""

from .aggregator import DecayParams, RecurrentState, chunked_scan, gamma_pow, scan, step
from .cell import CellParams, VariantFlags, context_period, forward, informed_init, init, trace_durability

__all__ = [
    "CellParams",
    "DecayParams",
    "RecurrentState",
    "VariantFlags",
    "chunked_scan",
    "context_period",
    "forward",
    "gamma_pow",
    "informed_init",
    "init",
    "scan",
    "step",
    "trace_durability",
]

__version__ = "0.1.0"
