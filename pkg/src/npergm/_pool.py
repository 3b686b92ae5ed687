"""Process pool for per-round work items.

The graph is shipped to each worker once through the pool initializer;
tasks only carry round indices. Results come back in round order
regardless of scheduling.
"""

from __future__ import annotations

import os
from collections.abc import Callable, Iterable
from concurrent.futures import ProcessPoolExecutor

_GRAPH = None


def _init(graph) -> None:
    global _GRAPH
    _GRAPH = graph


def _call(args):
    func, k, extra = args
    return func(_GRAPH, k, *extra)


def default_workers() -> int:
    return os.cpu_count() or 1


def map_rounds(func: Callable, graph, rounds: Iterable[int], workers: int | None, *extra) -> list:
    """``[func(graph, k, *extra) for k in rounds]``, possibly in parallel."""
    rounds = list(rounds)
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1 or len(rounds) < 2:
        return [func(graph, k, *extra) for k in rounds]
    chunk = max(1, len(rounds) // (8 * workers))
    with ProcessPoolExecutor(max_workers=workers, initializer=_init, initargs=(graph,)) as ex:
        return list(ex.map(_call, [(func, k, extra) for k in rounds], chunksize=chunk))
