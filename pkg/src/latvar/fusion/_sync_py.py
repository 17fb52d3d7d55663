"""Pure-Python approximate-time synchronizer kernel.

Must stay result-identical to ``_sync_kernel.pyx``; ``tests/test_fusion.py``
runs both on the same event streams.
"""

from __future__ import annotations

from bisect import bisect_left, bisect_right, insort
from collections import deque

import numpy as np


def _best_tuple(x, s, sorted_q, k, slop):
    """Minimal-span tuple containing stamp ``x`` of stream ``s``, or None."""
    cands = []
    for j in range(k):
        if j == s:
            cands.append([x])
            continue
        sq = sorted_q[j]
        lo = bisect_left(sq, x - slop)
        hi = bisect_right(sq, x + slop)
        if lo == hi:
            return None
        cands.append(sq[lo:hi])
    lows = sorted({c for cs in cands for c in cs if c <= x})
    best_span = None
    best = None
    for low in lows:
        picks = []
        for cs in cands:
            i = bisect_left(cs, low)
            if i == len(cs):
                break
            picks.append(cs[i])
        else:
            span = max(picks) - low
            if span <= slop and (best_span is None or span < best_span):
                best_span = span
                best = picks
            continue
        break
    if best is None:
        return None
    return best_span, best


def run_sync(arrival, stamps, streams, k, queue_size, slop):
    """Replay arrivals (already in processing order) through the synchronizer.

    Returns ``(emit_times, spans, chosen, evicted, stale, superseded)`` where
    ``chosen`` is ``(fusions, k)`` stamps and the last three are per-stream
    counts.
    """
    arrival = np.asarray(arrival, dtype=np.float64)
    stamps = np.asarray(stamps, dtype=np.float64)
    streams = np.asarray(streams, dtype=np.int64)
    fifo = [deque() for _ in range(k)]
    sorted_q = [[] for _ in range(k)]
    last = [float("-inf")] * k
    evicted = [0] * k
    stale = [0] * k
    superseded = [0] * k
    emit_times: list[float] = []
    spans: list[float] = []
    chosen: list[list[float]] = []

    for t, x, s in zip(arrival.tolist(), stamps.tolist(), streams.tolist()):
        if x <= last[s]:
            stale[s] += 1
            continue
        if len(fifo[s]) == queue_size:
            old = fifo[s].popleft()
            del sorted_q[s][bisect_left(sorted_q[s], old)]
            evicted[s] += 1
        fifo[s].append(x)
        insort(sorted_q[s], x)

        found = _best_tuple(x, s, sorted_q, k, slop)
        if found is None:
            continue
        span, picks = found
        emit_times.append(t)
        spans.append(span)
        chosen.append(picks)
        for j, c in enumerate(picks):
            keep = [v for v in fifo[j] if v > c]
            superseded[j] += len(fifo[j]) - len(keep) - 1
            fifo[j] = deque(keep)
            sq = sorted_q[j]
            del sq[: bisect_right(sq, c)]
            last[j] = c

    return (
        np.array(emit_times, dtype=np.float64),
        np.array(spans, dtype=np.float64),
        np.array(chosen, dtype=np.float64).reshape(len(chosen), k),
        np.array(evicted, dtype=np.int64),
        np.array(stale, dtype=np.int64),
        np.array(superseded, dtype=np.int64),
    )
