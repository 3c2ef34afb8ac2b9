"""Ordered thread fan-out capped by DF_LAB_THREADS."""

import os
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from tqdm import tqdm

logger = logging.getLogger(__name__)

T = TypeVar('T')
R = TypeVar('R')


def max_threads() -> int:
    """Parallelism cap from DF_LAB_THREADS (defaults to the CPU count)."""
    raw = os.getenv('DF_LAB_THREADS')
    if raw:
        try:
            value = int(raw)
        except ValueError:
            logger.warning(f"⚠️ Ignoring non-integer DF_LAB_THREADS={raw!r}")
        else:
            if value >= 1:
                return value
            logger.warning(f"⚠️ Ignoring DF_LAB_THREADS={value} (< 1)")
    return os.cpu_count() or 1


def progress_enabled(show_progress: bool = True) -> bool:
    """Progress bars are on unless disabled by argument or DF_LAB_NO_PROGRESS."""
    return show_progress and os.getenv('DF_LAB_NO_PROGRESS', '0') not in ('1', 'true', 'yes')


def ordered_map(
    fn: Callable[[T], R],
    items: Iterable[T],
    threads: Optional[int] = None,
    desc: Optional[str] = None,
    show_progress: bool = False
) -> List[R]:
    """
    Apply fn to every item concurrently and return results in input order.

    Args:
        fn: Pure function of one item
        items: Work items
        threads: Worker cap (None = DF_LAB_THREADS)
        desc: Progress bar label
        show_progress: Show a tqdm bar

    Returns:
        List of results, ordered like items
    """
    items = list(items)
    workers = min(threads or max_threads(), max(len(items), 1))
    bar = progress_enabled(show_progress)

    if workers == 1:
        return [fn(item) for item in tqdm(items, desc=desc, disable=not bar)]

    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, item) for item in items]
        return [f.result() for f in tqdm(futures, desc=desc, disable=not bar)]
