"""
Blocked evaluation with an ordered reduction.

Work over `n` items is cut into fixed-size blocks. Blocks may be evaluated on
a thread pool, but partial results are always combined in block order, so the
floating-point result is the same for every worker count.
"""

import concurrent.futures
import logging
import os
from typing import Callable, List, Optional, TypeVar

import numpy as np

logger = logging.getLogger(__name__)

T = TypeVar("T")

DEFAULT_BLOCK = 512

_default_workers = 1


def set_default_workers(workers: Optional[int]) -> int:
    """Set the worker count used when callers pass workers=None; 0 or None means os.cpu_count()."""
    global _default_workers
    _default_workers = int(workers) if workers else (os.cpu_count() or 1)
    logger.debug("default worker count set to %d", _default_workers)
    return _default_workers


def get_default_workers() -> int:
    return _default_workers


def block_ranges(n: int, block: int = DEFAULT_BLOCK) -> List[range]:
    """Consecutive index ranges of at most `block` items covering [0, n)."""
    block = max(1, int(block))
    return [range(start, min(start + block, n)) for start in range(0, n, block)]


def map_blocks(func: Callable[[range], T], n: int, block: int = DEFAULT_BLOCK,
               workers: Optional[int] = None) -> List[T]:
    """Evaluate func on every block; results are returned in block order."""
    ranges = block_ranges(n, block)
    workers = _default_workers if workers is None else max(1, int(workers))
    if workers == 1 or len(ranges) <= 1:
        return [func(r) for r in ranges]
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(func, ranges))


def ordered_sum(parts: List[T]):
    """Left-to-right sum of partial results (scalars or equally shaped arrays)."""
    if not parts:
        return 0.0
    total = parts[0] if np.isscalar(parts[0]) else np.array(parts[0], dtype=float, copy=True)
    for part in parts[1:]:
        total = total + part
    return total


def blocked_sum(func: Callable[[range], T], n: int, block: int = DEFAULT_BLOCK,
                workers: Optional[int] = None):
    """Sum of func over blocks, reduced in block order."""
    return ordered_sum(map_blocks(func, n, block, workers))
