# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled linear assignment kernel (shortest augmenting paths with dual prices).

Mirrors otmatch._lapjv_py exactly; the two backends must produce identical
assignments and duals for the same input.
"""

import numpy as np

cimport numpy as cnp

from .errors import NumericalError

cnp.import_array()


def solve_lap(cost):
    """Solve the square min-cost assignment problem.

    Returns (col4row, u, v): col4row[i] is the column matched to row i,
    and (u, v) are optimal dual prices.
    """
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] c = \
        np.ascontiguousarray(cost, dtype=np.float64)
    cdef Py_ssize_t n = c.shape[0]

    cdef cnp.ndarray[cnp.float64_t, ndim=1] u_arr = np.zeros(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] v_arr = np.zeros(n)
    cdef cnp.ndarray[cnp.intp_t, ndim=1] col4row_arr = np.full(n, -1, dtype=np.intp)
    cdef cnp.ndarray[cnp.intp_t, ndim=1] row4col_arr = np.full(n, -1, dtype=np.intp)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] shortest_arr = np.empty(n)
    cdef cnp.ndarray[cnp.intp_t, ndim=1] path_arr = np.empty(n, dtype=np.intp)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] remaining_arr = np.empty(n, dtype=np.uint8)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] sr_arr = np.empty(n, dtype=np.uint8)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] sc_arr = np.empty(n, dtype=np.uint8)

    cdef double[:] u = u_arr
    cdef double[:] v = v_arr
    cdef Py_ssize_t[:] col4row = col4row_arr
    cdef Py_ssize_t[:] row4col = row4col_arr
    cdef double[:] shortest = shortest_arr
    cdef Py_ssize_t[:] path = path_arr
    cdef unsigned char[:] remaining = remaining_arr
    cdef unsigned char[:] sr = sr_arr
    cdef unsigned char[:] sc = sc_arr

    cdef Py_ssize_t cur, i, j, k, sink, jmin, tmp
    cdef double minval, r, best
    cdef double inf = np.inf

    for cur in range(n):
        for k in range(n):
            shortest[k] = inf
            path[k] = -1
            remaining[k] = 1
            sr[k] = 0
            sc[k] = 0
        minval = 0.0
        i = cur
        sink = -1
        while sink == -1:
            sr[i] = 1
            jmin = -1
            best = inf
            for k in range(n):
                if remaining[k]:
                    r = minval + c[i, k] - u[i] - v[k]
                    if r < shortest[k]:
                        shortest[k] = r
                        path[k] = i
                    if shortest[k] < best:
                        best = shortest[k]
                        jmin = k
            if jmin < 0 or best == inf:
                raise NumericalError("assignment infeasible: non-finite path cost")
            j = jmin
            minval = best
            sc[j] = 1
            remaining[j] = 0
            if row4col[j] == -1:
                sink = j
            else:
                i = row4col[j]

        # Dual update (before augmenting, so col4row still holds old matches).
        u[cur] += minval
        for k in range(n):
            if sr[k] and k != cur:
                u[k] += minval - shortest[col4row[k]]
            if sc[k]:
                v[k] -= minval - shortest[k]

        # Augment along the alternating path back to cur.
        j = sink
        while True:
            i = path[j]
            row4col[j] = i
            tmp = col4row[i]
            col4row[i] = j
            if i == cur:
                break
            j = tmp
    return col4row_arr, u_arr, v_arr
