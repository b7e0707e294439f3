"""Pure-numpy linear assignment solver (shortest augmenting paths with dual prices).

Minimizes total cost over permutations and returns the dual price vectors
(u, v) satisfying u[i] + v[j] <= cost[i, j] with equality on matched pairs.
Same algorithm as the compiled backend; kept in lockstep so the two produce
identical assignments and duals.
"""

import numpy as np

from .errors import NumericalError


def solve_lap(cost):
    """Solve the square min-cost assignment problem.

    Returns (col4row, u, v): col4row[i] is the column matched to row i,
    and (u, v) are optimal dual prices.
    """
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    n = cost.shape[0]
    u = np.zeros(n)
    v = np.zeros(n)
    col4row = np.full(n, -1, dtype=np.intp)
    row4col = np.full(n, -1, dtype=np.intp)

    for cur in range(n):
        shortest = np.full(n, np.inf)
        path = np.full(n, -1, dtype=np.intp)
        remaining = np.ones(n, dtype=bool)
        sr = np.zeros(n, dtype=bool)
        sc = np.zeros(n, dtype=bool)
        minval = 0.0
        i = cur
        sink = -1
        while sink == -1:
            sr[i] = True
            reduced = minval + cost[i] - u[i] - v
            better = remaining & (reduced < shortest)
            shortest[better] = reduced[better]
            path[better] = i
            masked = np.where(remaining, shortest, np.inf)
            j = int(np.argmin(masked))
            minval = masked[j]
            if not np.isfinite(minval):
                raise NumericalError("assignment infeasible: non-finite path cost")
            sc[j] = True
            remaining[j] = False
            if row4col[j] == -1:
                sink = j
            else:
                i = int(row4col[j])

        # Dual update (before augmenting, so col4row still holds old matches).
        u[cur] += minval
        others = sr.copy()
        others[cur] = False
        rows = np.nonzero(others)[0]
        if rows.size:
            u[rows] += minval - shortest[col4row[rows]]
        cols = np.nonzero(sc)[0]
        v[cols] -= minval - shortest[cols]

        # Augment along the alternating path back to cur.
        j = sink
        while True:
            i = int(path[j])
            row4col[j] = i
            col4row[i], j = j, col4row[i]
            if i == cur:
                break
    return col4row, u, v
