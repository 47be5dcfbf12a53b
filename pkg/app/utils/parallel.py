"""Process pool for independent per-vehicle work"""

from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")

_shared: dict[str, Any] = {}


def _install(payload: dict[str, Any]) -> None:
    _shared.clear()
    _shared.update(payload)


def shared() -> dict[str, Any]:
    """Read-only data installed in the current worker"""
    return _shared


def parallel_map(
    func: Callable[[T], R],
    items: Iterable[T],
    workers: int = 1,
    payload: dict[str, Any] | None = None,
) -> list[R]:
    """
    Apply a module-level function to every item, preserving input order

    The payload is sent once per worker process and read back with shared().
    With a single worker everything runs in the calling process.
    """
    items = list(items)
    payload = payload or {}
    if workers <= 1 or len(items) <= 1:
        _install(payload)
        try:
            return [func(item) for item in items]
        finally:
            _shared.clear()

    chunksize = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(
        max_workers=workers, initializer=_install, initargs=(payload,)
    ) as pool:
        return list(pool.map(func, items, chunksize=chunksize))
