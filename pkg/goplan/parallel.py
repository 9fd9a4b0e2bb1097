from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")

THREADS_ENV_VAR = "GOPLAN_THREADS"

_log = logging.getLogger("goplan.parallel")


def thread_limit() -> int:
    raw = os.environ.get(THREADS_ENV_VAR, "")
    if raw.strip() == "":
        return 1
    try:
        value = int(raw)
    except ValueError:
        _log.warning(f"Ignoring non-integer {THREADS_ENV_VAR}={raw!r}")
        return 1
    return max(1, value)


def parallel_map(func: Callable[[T], R], items: Sequence[T]) -> list[R]:
    """Map in item order, on at most GOPLAN_THREADS worker threads."""
    workers = min(thread_limit(), len(items))
    if workers <= 1:
        return [func(item) for item in items]

    with ThreadPoolExecutor(
        max_workers=workers, thread_name_prefix="goplan.worker"
    ) as pool:
        return list(pool.map(func, items))
