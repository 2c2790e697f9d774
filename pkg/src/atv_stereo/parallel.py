"""Worker-count resolution and an order-preserving thread map.

Every parallel kernel in the package writes disjoint output slices, so
results do not depend on the worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")

ENV_VAR = "ATV_STEREO_THREADS"


def resolve_workers(workers: int | None = None) -> int:
    """Explicit value, else ``$ATV_STEREO_THREADS``, else the CPU count."""
    if workers is None:
        env = os.environ.get(ENV_VAR)
        if env:
            try:
                workers = int(env)
            except ValueError:
                raise ValueError(f"{ENV_VAR} must be an integer, got {env!r}") from None
        else:
            workers = os.cpu_count() or 1
    if workers < 1:
        raise ValueError(f"worker count must be >= 1, got {workers}")
    return workers


def pmap(fn: Callable[[T], R], items: Iterable[T], workers: int | None = None) -> list[R]:
    items = list(items)
    n = min(resolve_workers(workers), max(len(items), 1))
    if n == 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
