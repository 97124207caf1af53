"""Allocator tuning for workloads that repeatedly create and drop large arrays.

glibc serves big requests with fresh mmap pages and hands them back on free,
so every training step pays the page-fault cost again. Raising the mmap and
trim thresholds keeps freed blocks in the heap for reuse.
"""

from __future__ import annotations

import ctypes
import sys

_M_TRIM_THRESHOLD = -1
_M_MMAP_THRESHOLD = -3
_done = False


def keep_freed_memory() -> bool:
    """Apply the thresholds once per process; returns False where unsupported."""
    global _done
    if _done:
        return True
    if not sys.platform.startswith("linux"):
        return False
    try:
        libc = ctypes.CDLL("libc.so.6")
        ok = libc.mallopt(_M_MMAP_THRESHOLD, 1 << 30) == 1
        ok = libc.mallopt(_M_TRIM_THRESHOLD, (1 << 31) - 1) == 1 and ok
    except (OSError, AttributeError):
        return False
    _done = ok
    return ok
