"""Bounded worker pool.

Jobs run in threads behind an asyncio semaphore, and results come back in
submission order so any reduction over them is bit-stable.
"""

import asyncio
import logging
import os

logger = logging.getLogger(__name__)

DEFAULT_THREADS = 4


def worker_count():
    """
    Returns the worker cap from CURVLAB_THREADS.

    Returns:
        int: Number of concurrent jobs (at least 1).
    """
    raw = os.getenv("CURVLAB_THREADS")
    if not raw:
        return DEFAULT_THREADS
    try:
        return max(1, int(raw))
    except ValueError:
        logger.warning("[workers] ⚠️ Ignoring CURVLAB_THREADS=%r (not an integer).", raw)
        return DEFAULT_THREADS


async def _gather_ordered(func, items, limit):
    sem = asyncio.Semaphore(limit)

    async def job(item):
        async with sem:
            return await asyncio.to_thread(func, item)

    return await asyncio.gather(*(job(item) for item in items))


def run_ordered(func, items, max_workers=None):
    """
    Applies func to every item using at most max_workers threads.

    Args:
        func (callable): Pure function of one item.
        items (iterable): Inputs; their order fixes the output order.
        max_workers (int | None): Cap on concurrent jobs (CURVLAB_THREADS if None).

    Returns:
        list: func(item) for each item, in input order.
    """
    items = list(items)
    if not items:
        return []
    limit = max_workers if max_workers is not None else worker_count()
    if limit <= 1 or len(items) == 1:
        return [func(item) for item in items]
    try:
        asyncio.get_running_loop()
    except RuntimeError:
        return asyncio.run(_gather_ordered(func, items, limit))
    # Already inside an event loop: stay sequential rather than nest loops.
    return [func(item) for item in items]


def ordered_sum(values):
    """Sums values left to right, the reduction order every report relies on."""
    total = 0.0
    for value in values:
        total += value
    return total
