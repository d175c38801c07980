"""
Ordered parallel map over replications.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def ordered_map(fn: Callable[[T], R], items: Iterable[T], workers: int = 1) -> List[R]:
    """
    Apply fn to every item, returning results in input order.

    NumPy/SciPy linear algebra releases the GIL, so threads give real
    speed-ups for the SVD-heavy replication loops. Output order and content
    do not depend on the number of workers.

    Args:
        fn (Callable): Function applied to each item.
        items (Iterable): Inputs.
        workers (int): Thread count; 1 runs inline.

    Returns:
        List: fn(item) for each item, in order.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]

    logger.debug("Mapping %d items over %d threads", len(items), workers)
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(fn, items))
