"""
Negative-sample memory bank.
"""

from cl_uap.membank.bank import (
    MemoryBank,
    build_membank,
    load_membank,
    sample_negatives,
    save_membank,
)

__all__ = [
    "MemoryBank",
    "build_membank",
    "load_membank",
    "sample_negatives",
    "save_membank",
]
