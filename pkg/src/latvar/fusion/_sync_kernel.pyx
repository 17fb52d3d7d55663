# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled approximate-time synchronizer kernel.

Same contract and results as ``_sync_py.run_sync``. Queues are fixed-size
arrays kept in arrival order; the candidate search scans them linearly.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY
from libc.stdlib cimport malloc, free
from libc.string cimport memmove

cnp.import_array()


cdef inline Py_ssize_t _pick(double* buf, Py_ssize_t n, double low, double* out):
    # smallest value >= low in buf[0:n]; returns 0 if none
    cdef Py_ssize_t i
    cdef double best = INFINITY
    cdef Py_ssize_t found = 0
    for i in range(n):
        if buf[i] >= low and buf[i] < best:
            best = buf[i]
            found = 1
    out[0] = best
    return found


def run_sync(arrival, stamps, streams, int k, int queue_size, double slop):
    cdef cnp.float64_t[::1] arr = np.ascontiguousarray(arrival, dtype=np.float64)
    cdef cnp.float64_t[::1] stm = np.ascontiguousarray(stamps, dtype=np.float64)
    cdef cnp.int64_t[::1] sid = np.ascontiguousarray(streams, dtype=np.int64)
    cdef Py_ssize_t n_events = arr.shape[0]

    cdef cnp.float64_t[:, ::1] q = np.empty((k, queue_size), dtype=np.float64)
    cdef cnp.int64_t[::1] qlen = np.zeros(k, dtype=np.int64)
    cdef cnp.float64_t[::1] last = np.full(k, -np.inf, dtype=np.float64)
    evicted_a = np.zeros(k, dtype=np.int64)
    stale_a = np.zeros(k, dtype=np.int64)
    super_a = np.zeros(k, dtype=np.int64)
    cdef cnp.int64_t[::1] evicted = evicted_a
    cdef cnp.int64_t[::1] stale = stale_a
    cdef cnp.int64_t[::1] superseded = super_a

    # per-search scratch: candidates per stream, candidate lows, picks
    cdef double* cand = <double*> malloc(k * queue_size * sizeof(double))
    cdef Py_ssize_t* ncand = <Py_ssize_t*> malloc(k * sizeof(Py_ssize_t))
    cdef double* lows = <double*> malloc((k * queue_size + 1) * sizeof(double))
    cdef double* picks = <double*> malloc(k * sizeof(double))
    cdef double* best = <double*> malloc(k * sizeof(double))
    if cand == NULL or ncand == NULL or lows == NULL or picks == NULL or best == NULL:
        free(cand); free(ncand); free(lows); free(picks); free(best)
        raise MemoryError()

    emit_times = []
    spans = []
    chosen = []

    cdef Py_ssize_t e, i, j, m, nlows, nk
    cdef long s
    cdef double t, x, v, low, span, best_span, mx, tmp
    cdef bint ok, have_best, dup

    try:
        for e in range(n_events):
            t = arr[e]
            x = stm[e]
            s = sid[e]
            if x <= last[s]:
                stale[s] += 1
                continue
            if qlen[s] == queue_size:
                memmove(&q[s, 0], &q[s, 1], (queue_size - 1) * sizeof(double))
                qlen[s] -= 1
                evicted[s] += 1
            q[s, qlen[s]] = x
            qlen[s] += 1

            # candidates within slop of x in every other stream
            ok = True
            for j in range(k):
                ncand[j] = 0
                if j == s:
                    cand[j * queue_size] = x
                    ncand[j] = 1
                    continue
                for i in range(qlen[j]):
                    v = q[j, i]
                    if x - slop <= v <= x + slop:
                        cand[j * queue_size + ncand[j]] = v
                        ncand[j] += 1
                if ncand[j] == 0:
                    ok = False
                    break
            if not ok:
                continue

            # distinct candidate values <= x, ascending (insertion sort; tiny)
            nlows = 0
            for j in range(k):
                for i in range(ncand[j]):
                    v = cand[j * queue_size + i]
                    if v > x:
                        continue
                    dup = False
                    for m in range(nlows):
                        if lows[m] == v:
                            dup = True
                            break
                    if dup:
                        continue
                    m = nlows
                    while m > 0 and lows[m - 1] > v:
                        lows[m] = lows[m - 1]
                        m -= 1
                    lows[m] = v
                    nlows += 1

            have_best = False
            best_span = INFINITY
            for m in range(nlows):
                low = lows[m]
                ok = True
                mx = -INFINITY
                for j in range(k):
                    if not _pick(&cand[j * queue_size], ncand[j], low, &tmp):
                        ok = False
                        break
                    picks[j] = tmp
                    if tmp > mx:
                        mx = tmp
                if not ok:
                    break
                span = mx - low
                if span <= slop and span < best_span:
                    best_span = span
                    have_best = True
                    for j in range(k):
                        best[j] = picks[j]
            if not have_best:
                continue

            emit_times.append(t)
            spans.append(best_span)
            chosen.append([best[j] for j in range(k)])
            for j in range(k):
                nk = 0
                for i in range(qlen[j]):
                    if q[j, i] > best[j]:
                        q[j, nk] = q[j, i]
                        nk += 1
                superseded[j] += qlen[j] - nk - 1
                qlen[j] = nk
                last[j] = best[j]
    finally:
        free(cand); free(ncand); free(lows); free(picks); free(best)

    return (
        np.array(emit_times, dtype=np.float64),
        np.array(spans, dtype=np.float64),
        np.array(chosen, dtype=np.float64).reshape(len(chosen), k),
        evicted_a,
        stale_a,
        super_a,
    )
