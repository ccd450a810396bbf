from __future__ import annotations

import asyncio
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


async def map_in_executor(fn: Callable[[T], R], items: Sequence[T], workers: int) -> List[R]:
    """Run `fn` over `items` on a thread pool; results keep the input order.

    Context variables and `no_grad` state do not cross into the workers, so
    `fn` must set up whatever it needs itself.
    """
    loop = asyncio.get_running_loop()
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(await asyncio.gather(*(loop.run_in_executor(pool, fn, item) for item in items)))


def run_parallel(fn: Callable[[T], R], items: Sequence[T], workers: int = 1) -> List[R]:
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    return asyncio.run(map_in_executor(fn, items, workers))
