"""Dense transportation-problem simplex kernel.

Solves  min <cost, x>  s.t.  x @ 1 = a,  x.T @ 1 = b,  x >= 0  exactly,
maintaining the basis as a spanning tree of the bipartite supply/demand
graph (MODI / u-v method). Pivoting is deterministic: most-negative
reduced cost with row-major tie-breaking, falling back to Bland's rule
if a pivot budget is exceeded so degenerate instances cannot cycle.
"""

from __future__ import annotations

import numpy as np
from numba import njit

STATUS_OPTIMAL = 0
STATUS_PIVOT_LIMIT = 1


@njit(cache=True)
def _simplex_kernel(cost, a, b, tol_pivot, bland_after, max_pivots):
    n, m = cost.shape
    nb = n + m - 1
    bi = np.empty(nb, np.int64)
    bj = np.empty(nb, np.int64)
    bx = np.empty(nb, np.float64)

    # Northwest-corner initial basic feasible solution. Exactly one index
    # advances per allocation, so exactly n+m-1 cells enter the basis
    # (some with zero quantity when supplies/demands tie).
    rema = a.copy()
    remb = b.copy()
    i = 0
    j = 0
    for k in range(nb):
        ra = rema[i]
        rb = remb[j]
        q = ra if ra < rb else rb
        bi[k] = i
        bj[k] = j
        bx[k] = q
        rema[i] = ra - q
        remb[j] = rb - q
        if ra <= rb and i < n - 1:
            i += 1
        elif j < m - 1:
            j += 1
        else:
            i += 1

    N = n + m  # tree nodes: rows 0..n-1, columns n..n+m-1
    u = np.zeros(n, np.float64)
    v = np.zeros(m, np.float64)
    head = np.empty(N, np.int64)
    nxt = np.empty(2 * nb, np.int64)
    ato = np.empty(2 * nb, np.int64)
    aedge = np.empty(2 * nb, np.int64)
    parent = np.empty(N, np.int64)
    parent_edge = np.empty(N, np.int64)
    order = np.empty(N, np.int64)
    stamp = np.full(N, -1, np.int64)
    path_a = np.empty(N, np.int64)  # edges from entering row up to meet
    path_b = np.empty(N, np.int64)  # edges from entering col up to meet
    cyc_edge = np.empty(N + 1, np.int64)
    cyc_sign = np.empty(N + 1, np.int64)

    pivots = 0
    use_bland = False
    while True:
        # Rebuild tree adjacency and duals from the current basis.
        for t in range(N):
            head[t] = -1
        for e in range(nb):
            r = bi[e]
            c = n + bj[e]
            s = 2 * e
            nxt[s] = head[r]
            head[r] = s
            ato[s] = c
            aedge[s] = e
            s = 2 * e + 1
            nxt[s] = head[c]
            head[c] = s
            ato[s] = r
            aedge[s] = e

        for t in range(N):
            parent[t] = -2
        parent[0] = -1
        parent_edge[0] = -1
        order[0] = 0
        u[0] = 0.0
        qh = 0
        qt = 1
        while qh < qt:
            node = order[qh]
            qh += 1
            s = head[node]
            while s != -1:
                other = ato[s]
                if parent[other] == -2:
                    parent[other] = node
                    e = aedge[s]
                    parent_edge[other] = e
                    if other >= n:
                        v[other - n] = cost[bi[e], bj[e]] - u[bi[e]]
                    else:
                        u[other] = cost[bi[e], bj[e]] - v[bj[e]]
                    order[qt] = other
                    qt += 1
                s = nxt[s]

        # Entering arc: most negative reduced cost, row-major ties.
        ei = -1
        ej = -1
        if use_bland:
            for r in range(n):
                ur = u[r]
                for c in range(m):
                    if cost[r, c] - ur - v[c] < -tol_pivot:
                        ei = r
                        ej = c
                        break
                if ei >= 0:
                    break
        else:
            best = -tol_pivot
            for r in range(n):
                ur = u[r]
                for c in range(m):
                    rc = cost[r, c] - ur - v[c]
                    if rc < best:
                        best = rc
                        ei = r
                        ej = c
        if ei < 0:
            return bi, bj, bx, STATUS_OPTIMAL, pivots
        if pivots >= max_pivots:
            return bi, bj, bx, STATUS_PIVOT_LIMIT, pivots

        # Tree path between row node ei and col node n+ej: stamp the
        # ancestors of ei, then climb from n+ej to the first stamped node.
        node = ei
        while node != -1:
            stamp[node] = pivots
            node = parent[node]
        meet = n + ej
        nb_b = 0
        while stamp[meet] != pivots:
            path_b[nb_b] = parent_edge[meet]
            nb_b += 1
            meet = parent[meet]
        nb_a = 0
        node = ei
        while node != meet:
            path_a[nb_a] = parent_edge[node]
            nb_a += 1
            node = parent[node]

        # Cycle = entering arc (+) then the tree path from n+ej back to ei,
        # alternating signs around the (even-length, bipartite) cycle.
        cyc_edge[0] = -1  # entering
        cyc_sign[0] = 1
        ncyc = 1
        for t in range(nb_b):
            cyc_edge[ncyc] = path_b[t]
            cyc_sign[ncyc] = -cyc_sign[ncyc - 1]
            ncyc += 1
        for t in range(nb_a - 1, -1, -1):
            cyc_edge[ncyc] = path_a[t]
            cyc_sign[ncyc] = -cyc_sign[ncyc - 1]
            ncyc += 1

        # Leaving arc: minimum quantity over minus edges, lexicographic ties.
        theta = np.inf
        leave = -1
        li = -1
        lj = -1
        for t in range(1, ncyc):
            if cyc_sign[t] < 0:
                e = cyc_edge[t]
                q = bx[e]
                better = False
                if q < theta:
                    better = True
                elif q == theta:
                    if bi[e] < li or (bi[e] == li and bj[e] < lj):
                        better = True
                if better:
                    theta = q
                    leave = e
                    li = bi[e]
                    lj = bj[e]

        for t in range(1, ncyc):
            e = cyc_edge[t]
            if cyc_sign[t] > 0:
                bx[e] += theta
            else:
                bx[e] -= theta
        bx[leave] = 0.0
        bi[leave] = ei
        bj[leave] = ej
        bx[leave] = theta

        pivots += 1
        if pivots >= bland_after:
            use_bland = True


def transport_simplex(
    cost: np.ndarray, a: np.ndarray, b: np.ndarray, tol_pivot: float
) -> tuple[np.ndarray, int, int]:
    """Run the kernel and scatter the basic solution into a dense plan."""
    n, m = cost.shape
    budget = 200 * (n + m)
    bi, bj, bx, status, pivots = _simplex_kernel(
        np.ascontiguousarray(cost, dtype=np.float64),
        np.ascontiguousarray(a, dtype=np.float64),
        np.ascontiguousarray(b, dtype=np.float64),
        tol_pivot,
        budget,
        budget + 2000 * (n + m),
    )
    plan = np.zeros((n, m))
    plan[bi, bj] = np.maximum(bx, 0.0)
    return plan, status, pivots
