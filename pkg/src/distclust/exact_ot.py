"""Exact solver for the discrete transportation problem.

Transportation simplex (network simplex specialized to bipartite transport):
Vogel-approximation initial basis, duals recomputed by basis-tree traversal,
most-negative entering rule with lowest-linear-index tie-breaking, and a
switch to Bland's smallest-index rule after a long degenerate stall so
termination is guaranteed.  The returned plan is a basic feasible solution,
i.e. a vertex of the transportation polytope with at most m + n - 1 nonzeros.
"""

from __future__ import annotations

from collections import deque

import numpy as np

MARGINAL_TOL = 1e-8

_solve_count = 0


def get_solve_count() -> int:
    """Number of transport solves since the last reset (instrumentation)."""
    return _solve_count


def reset_solve_count() -> None:
    global _solve_count
    _solve_count = 0


class SolverFailureError(RuntimeError):
    """Exact transport solve failed; carries marginal residual diagnostics."""

    def __init__(self, message: str, row_residual: float | None = None,
                 col_residual: float | None = None):
        if row_residual is not None:
            message += f" (row residual {row_residual:.3e}, col residual {col_residual:.3e})"
        super().__init__(message)
        self.row_residual = row_residual
        self.col_residual = col_residual


def _vogel_initial_basis(cost, sup, dem):
    """Vogel-approximation starting basis.

    Every allocation closes exactly one row or column (the final one closes
    both), which yields exactly m + n - 1 basic cells forming a spanning tree;
    supply/demand ties close the row only, leaving a zero-demand column to
    absorb a later degenerate allocation.
    """
    m, n = cost.shape
    sup = sup.copy()
    dem = dem.copy()
    row_live = np.ones(m, dtype=bool)
    col_live = np.ones(n, dtype=bool)
    flows: dict[tuple[int, int], float] = {}

    for _ in range(m + n - 1):
        rows = np.flatnonzero(row_live)
        cols = np.flatnonzero(col_live)
        last_cell = len(rows) == 1 and len(cols) == 1
        if len(rows) == 1 or len(cols) == 1:
            # single line left: take its cheapest open cell
            sub = cost[np.ix_(rows, cols)]
            flat = int(np.argmin(sub))
            ri, ci = divmod(flat, len(cols))
            i, j = int(rows[ri]), int(cols[ci])
        else:
            sub = cost[np.ix_(rows, cols)]
            part_r = np.partition(sub, 1, axis=1)
            row_pen = part_r[:, 1] - part_r[:, 0]
            part_c = np.partition(sub, 1, axis=0)
            col_pen = part_c[1, :] - part_c[0, :]
            best_r = int(np.argmax(row_pen))
            best_c = int(np.argmax(col_pen))
            if row_pen[best_r] >= col_pen[best_c]:
                i = int(rows[best_r])
                j = int(cols[int(np.argmin(sub[best_r, :]))])
            else:
                j = int(cols[best_c])
                i = int(rows[int(np.argmin(sub[:, best_c]))])
        delta = min(sup[i], dem[j])
        flows[(i, j)] = float(delta)
        sup[i] -= delta
        dem[j] -= delta
        if last_cell:
            row_live[i] = False
            col_live[j] = False
        elif len(rows) == 1:
            col_live[j] = False
        elif len(cols) == 1:
            row_live[i] = False
        elif sup[i] < dem[j]:
            row_live[i] = False
        elif dem[j] < sup[i]:
            col_live[j] = False
        else:
            row_live[i] = False
    return flows


def _duals(cost_rows, row_to, col_to, m, n):
    """Solve u_i + v_j = c_ij over the basis tree (u[0] anchored at 0).

    Works on plain Python lists; per-pivot numpy scalar access is too slow.
    """
    u: list[float | None] = [None] * m
    v: list[float | None] = [None] * n
    u[0] = 0.0
    stack = [(0, True)]
    while stack:
        idx, is_row = stack.pop()
        if is_row:
            base = u[idx]
            crow = cost_rows[idx]
            for j in row_to[idx]:
                if v[j] is None:
                    v[j] = crow[j] - base
                    stack.append((j, False))
        else:
            base = v[idx]
            for i in col_to[idx]:
                if u[i] is None:
                    u[i] = cost_rows[i][idx] - base
                    stack.append((i, True))
    return u, v


def _cycle_cells(ei, ej, row_to, col_to, m):
    """Basic cells on the unique tree path from row ei to column ej.

    With the entering cell (ei, ej) these close a cycle; returned cells
    alternate minus/plus starting with minus.
    """
    target = m + ej
    parent: dict[int, int | None] = {ei: None}
    queue = deque([ei])
    while queue:
        node = queue.popleft()
        if node == target:
            break
        if node < m:
            for j in row_to[node]:
                if m + j not in parent:
                    parent[m + j] = node
                    queue.append(m + j)
        else:
            for i in col_to[node - m]:
                if i not in parent:
                    parent[i] = node
                    queue.append(i)
    path = [target]
    while path[-1] != ei:
        path.append(parent[path[-1]])
    path.reverse()
    cells = []
    for a, b in zip(path, path[1:]):
        cells.append((a, b - m) if a < m else (b, a - m))
    return cells


def solve_transport(cost: np.ndarray, supply: np.ndarray, demand: np.ndarray,
                    max_pivots: int | None = None) -> tuple[np.ndarray, float]:
    """Minimize <P, cost> over plans with the given marginals, exactly.

    Returns (plan, objective).  The plan is a vertex solution; its marginals
    match supply/demand to within MARGINAL_TOL or SolverFailureError is
    raised with the residuals.
    """
    global _solve_count
    _solve_count += 1

    cost = np.asarray(cost, dtype=float)
    a = np.asarray(supply, dtype=float).copy()
    b = np.asarray(demand, dtype=float).copy()
    m, n = cost.shape
    if a.shape != (m,) or b.shape != (n,):
        raise ValueError("marginal lengths do not match the cost matrix")
    if (a < 0).any() or (b < 0).any():
        raise SolverFailureError("negative marginal mass")
    ta, tb = a.sum(), b.sum()
    if ta <= 0 or tb <= 0:
        raise SolverFailureError("zero total mass")
    if abs(ta - tb) > 1e-6 * max(ta, tb):
        raise SolverFailureError("unbalanced marginals",
                                 row_residual=abs(ta - tb), col_residual=abs(ta - tb))
    b = b * (ta / tb)

    if m == 1:
        plan = b[None, :].copy()
        return plan, float((plan * cost).sum())
    if n == 1:
        plan = a[:, None].copy()
        return plan, float((plan * cost).sum())

    flows = _vogel_initial_basis(cost, a, b)
    row_to = [set() for _ in range(m)]
    col_to = [set() for _ in range(n)]
    for (i, j) in flows:
        row_to[i].add(j)
        col_to[j].add(i)

    cost_rows = cost.tolist()
    opt_tol = 1e-10 * max(1.0, float(np.abs(cost).max()))
    degen_tol = 1e-12 * max(a.max(), b.max())
    stall_limit = 2 * (m + n)
    if max_pivots is None:
        max_pivots = 1000 + 50 * m * n
    bland = False
    stall = 0

    for _ in range(max_pivots):
        u, v = _duals(cost_rows, row_to, col_to, m, n)
        rc = cost - np.asarray(u)[:, None] - np.asarray(v)[None, :]
        if bland:
            neg = np.flatnonzero(rc.ravel() < -opt_tol)
            if neg.size == 0:
                break
            flat = int(neg[0])
        else:
            flat = int(np.argmin(rc))
            if rc.flat[flat] >= -opt_tol:
                break
        ei, ej = divmod(flat, n)
        cells = _cycle_cells(ei, ej, row_to, col_to, m)
        minus = cells[0::2]
        theta = min(flows[c] for c in minus)
        leaving = min((c for c in minus if flows[c] <= theta),
                      key=lambda c: c[0] * n + c[1])
        for c in minus:
            flows[c] -= theta
        for c in cells[1::2]:
            flows[c] += theta
        flows[(ei, ej)] = theta
        row_to[ei].add(ej)
        col_to[ej].add(ei)
        del flows[leaving]
        row_to[leaving[0]].discard(leaving[1])
        col_to[leaving[1]].discard(leaving[0])
        if theta <= degen_tol:
            stall += 1
            if stall > stall_limit:
                bland = True
        else:
            stall = 0
            bland = False
    else:
        raise SolverFailureError(f"pivot limit {max_pivots} exceeded")

    plan = np.zeros((m, n))
    for (i, j), f in flows.items():
        plan[i, j] = max(f, 0.0)
    row_res = float(np.abs(plan.sum(axis=1) - a).sum())
    col_res = float(np.abs(plan.sum(axis=0) - b).sum())
    if max(row_res, col_res) > MARGINAL_TOL:
        raise SolverFailureError("plan marginals drifted", row_residual=row_res,
                                 col_residual=col_res)
    return plan, float((plan * cost).sum())
