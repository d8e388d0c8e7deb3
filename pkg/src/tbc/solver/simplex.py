"""Dense bounded-variable primal simplex.

Solves ``min c^T x  s.t.  A x (=|<=) b,  lb <= x <= ub`` with finite lower
bounds.  Nonbasic variables sit at either bound, so binaries relaxed to
``[0, 1]`` never need explicit bound rows.  Pricing is Dantzig's rule;
after a run of degenerate pivots it falls back to Bland's rule, which
cannot cycle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .. import _kernels

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
PIVOT_TOL = 1e-9
DEGENERATE_STREAK = 50


class LPError(RuntimeError):
    pass


@dataclass
class LPResult:
    status: str  # optimal | infeasible | unbounded | iteration-limit
    x: np.ndarray
    objective: float
    iterations: int = 0


def _presolve(c, A, sense, rhs, lb, ub):
    """Turn singleton inequality rows into bounds and fix variables with lb == ub.

    Returns reduced problem plus the data needed to expand a solution.
    """
    lb = lb.copy()
    ub = ub.copy()
    A = sp.csr_matrix(A)
    active_rows = np.ones(A.shape[0], dtype=bool)
    changed = True
    while changed:
        changed = False
        fixed = lb >= ub - 1e-12
        for r in np.flatnonzero(active_rows):
            lo, hi = A.indptr[r], A.indptr[r + 1]
            cols = A.indices[lo:hi]
            vals = A.data[lo:hi]
            free = ~fixed[cols] & (vals != 0)
            if free.sum() > 1:
                continue
            const = float(vals[~free] @ lb[cols[~free]]) if (~free).any() else 0.0
            room = rhs[r] - const
            if not free.any():
                bad = abs(room) > FEAS_TOL * (1 + abs(rhs[r])) if sense[r] == 0 else room < -FEAS_TOL * (1 + abs(rhs[r]))
                if bad:
                    return None
                active_rows[r] = False
                changed = True
                continue
            j = cols[free][0]
            a = vals[free][0]
            bound = room / a
            if sense[r] == 0:
                if bound < lb[j] - FEAS_TOL or bound > ub[j] + FEAS_TOL:
                    return None
                lb[j] = ub[j] = min(max(bound, lb[j]), ub[j])
            elif a > 0:
                if bound < lb[j] - FEAS_TOL:
                    return None
                ub[j] = max(lb[j], min(ub[j], bound))
            else:
                if bound > ub[j] + FEAS_TOL:
                    return None
                lb[j] = min(ub[j], max(lb[j], bound))
            active_rows[r] = False
            fixed = lb >= ub - 1e-12
            changed = True
    return lb, ub, active_rows


def solve_lp(c, A, sense, rhs, lb, ub, max_iter: int = 200_000) -> LPResult:
    """Solve the LP; ``sense`` holds 0 for equality rows and 1 for ``<=`` rows."""
    c = np.asarray(c, dtype=np.float64)
    rhs = np.asarray(rhs, dtype=np.float64)
    sense = np.asarray(sense)
    lb = np.asarray(lb, dtype=np.float64)
    ub = np.asarray(ub, dtype=np.float64)
    n = c.shape[0]
    if (ub < lb - FEAS_TOL).any():
        return LPResult("infeasible", np.zeros(n), np.inf)
    pre = _presolve(c, A, sense, rhs, lb, ub)
    if pre is None:
        return LPResult("infeasible", np.zeros(n), np.inf)
    lb2, ub2, active = pre
    fixed = lb2 >= ub2 - 1e-12
    x = lb2.copy()
    A = sp.csr_matrix(A)
    Ar = A[active]
    used = np.zeros(n, dtype=bool)
    used[Ar.indices] = True
    free_cols = np.flatnonzero(~fixed & used)
    # columns in no remaining row sit at their cheaper bound
    for j in np.flatnonzero(~fixed & ~used):
        if c[j] < 0:
            if not np.isfinite(ub2[j]):
                return LPResult("unbounded", x, -np.inf)
            x[j] = ub2[j]
    if free_cols.size == 0 or Ar.shape[0] == 0:
        return _finish(c, A, sense, rhs, lb, ub, x, 0)
    b = rhs[active] - Ar[:, np.flatnonzero(fixed | ~used)] @ x[fixed | ~used]
    M = Ar[:, free_cols].toarray()
    res = _bounded_simplex(c[free_cols], M, sense[active], b, lb2[free_cols], ub2[free_cols], max_iter)
    if res.status != "optimal":
        return LPResult(res.status, x, np.inf if res.status == "infeasible" else -np.inf, res.iterations)
    x[free_cols] = res.x
    return _finish(c, A, sense, rhs, lb, ub, x, res.iterations)


def _finish(c, A, sense, rhs, lb, ub, x, iters):
    x = np.clip(x, lb, ub)
    return LPResult("optimal", x, float(c @ x), iters)


def _bounded_simplex(c, A, sense, b, lb, ub, max_iter):
    m, n = A.shape
    # slacks for <= rows
    le_rows = np.flatnonzero(sense != 0)
    ns = le_rows.size
    x = np.concatenate([lb, np.zeros(ns)])
    res = b - A @ lb
    art_rows = []
    art_sign = []
    basis = np.empty(m, dtype=np.int64)
    slack_of_row = -np.ones(m, dtype=np.int64)
    slack_of_row[le_rows] = n + np.arange(ns)
    for i in range(m):
        if slack_of_row[i] >= 0 and res[i] >= -FEAS_TOL:
            basis[i] = slack_of_row[i]
        else:
            art_rows.append(i)
            art_sign.append(1.0 if res[i] >= 0 else -1.0)
    na = len(art_rows)
    N = n + ns + na
    T = np.zeros((m + 1, N))
    T[:m, :n] = A
    T[le_rows, n + np.arange(ns)] = 1.0
    for a, (i, s) in enumerate(zip(art_rows, art_sign)):
        T[i, n + ns + a] = s
        basis[i] = n + ns + a
    # rows whose basic column is an artificial with sign -1 get negated
    for a, (i, s) in enumerate(zip(art_rows, art_sign)):
        if s < 0:
            T[i, :] *= -1.0
    lo = np.concatenate([lb, np.zeros(ns), np.zeros(na)])
    hi = np.concatenate([ub, np.full(ns, np.inf), np.full(na, np.inf)])
    xv = np.concatenate([x, np.zeros(na)])
    at_upper = np.zeros(N, dtype=bool)
    xv[basis] = 0.0
    # slack-basic rows carry res >= 0; artificial-basic rows carry |res|
    xB = np.abs(res)
    is_basic = np.zeros(N, dtype=bool)
    is_basic[basis] = True
    rhs_full = b.copy()

    iters = 0
    if na:
        cost = np.zeros(N)
        cost[n + ns:] = 1.0
        T[m, :] = cost - cost[basis] @ T[:m, :]
        status, iters = _iterate(T, basis, xB, xv, lo, hi, at_upper, is_basic, max_iter, iters)
        if status != "optimal":
            return LPResult(status, x, np.inf, iters)
        _refactor(T, basis, xB, xv, lo, hi, at_upper, is_basic, rhs_full, A, le_rows, art_rows, art_sign, n, ns)
        infeas = float(xB[basis >= n + ns].sum())
        if infeas > 1e-7 * (1.0 + np.abs(b).max(initial=0.0)):
            return LPResult("infeasible", x, np.inf, iters)
        hi[n + ns:] = 0.0
        _drive_out_artificials(T, basis, xB, lo, hi, at_upper, is_basic, n + ns, m)
    cost = np.concatenate([c, np.zeros(ns + na)])
    T[m, :] = cost - cost[basis] @ T[:m, :]
    for _ in range(3):
        status, iters = _iterate(T, basis, xB, xv, lo, hi, at_upper, is_basic, max_iter, iters)
        if status != "optimal":
            return LPResult(status, x, -np.inf if status == "unbounded" else np.inf, iters)
        _refactor(T, basis, xB, xv, lo, hi, at_upper, is_basic, rhs_full, A, le_rows, art_rows, art_sign, n, ns)
        T[m, :] = cost - cost[basis] @ T[:m, :]
        if _is_optimal(T[m], lo, hi, at_upper, is_basic) and _primal_ok(xB, lo[basis], hi[basis]):
            break
    full = xv.copy()
    full[basis] = xB
    return LPResult("optimal", full[:n], float(c @ full[:n]), iters)


def _is_optimal(d, lo, hi, at_upper, is_basic):
    movable = ~is_basic & (hi > lo)
    up = movable & ~at_upper & (d < -OPT_TOL)
    down = movable & at_upper & (d > OPT_TOL)
    return not (up.any() or down.any())


def _primal_ok(xB, lo, hi):
    return bool(np.all(xB >= lo - FEAS_TOL) and np.all(xB <= hi + FEAS_TOL))


def _iterate(T, basis, xB, xv, lo, hi, at_upper, is_basic, max_iter, iters):
    m = basis.shape[0]
    degenerate = 0
    bland = False
    d = T[m]
    while True:
        if iters >= max_iter:
            return "iteration-limit", iters
        movable = ~is_basic & (hi > lo)
        score = np.where(movable & ~at_upper, -d, 0.0)
        score = np.where(movable & at_upper, d, score)
        elig = np.flatnonzero(score > OPT_TOL)
        if elig.size == 0:
            return "optimal", iters
        j = int(elig[0]) if bland else int(elig[np.argmax(score[elig])])
        sigma = -1.0 if at_upper[j] else 1.0
        alpha = T[:m, j] * sigma
        theta = hi[j] - lo[j]
        r = -1
        lB = lo[basis]
        uB = hi[basis]
        pos = alpha > PIVOT_TOL
        neg = alpha < -PIVOT_TOL
        ratios = np.full(m, np.inf)
        ratios[pos] = (xB[pos] - lB[pos]) / alpha[pos]
        fin = neg & np.isfinite(uB)
        ratios[fin] = (uB[fin] - xB[fin]) / -alpha[fin]
        ratios = np.maximum(ratios, 0.0)
        rmin = ratios.min() if m else np.inf
        if rmin < theta:
            ties = np.flatnonzero(ratios <= rmin + 1e-12)
            if bland:
                r = int(ties[np.argmin(basis[ties])])
            else:
                r = int(ties[np.argmax(np.abs(alpha[ties]))])
            theta = ratios[r]
        if not np.isfinite(theta):
            return "unbounded", iters
        iters += 1
        if theta <= 1e-12:
            degenerate += 1
            if degenerate > DEGENERATE_STREAK:
                bland = True
        else:
            degenerate = 0
            bland = False
        xB -= theta * alpha
        enter_val = (hi[j] if at_upper[j] else lo[j]) + sigma * theta
        if r < 0:
            at_upper[j] = not at_upper[j]
            xv[j] = hi[j] if at_upper[j] else lo[j]
            continue
        leave = basis[r]
        to_upper = alpha[r] < 0
        is_basic[leave] = False
        at_upper[leave] = bool(to_upper)
        xv[leave] = hi[leave] if to_upper else lo[leave]
        _kernels.pivot(T, r, j)
        basis[r] = j
        is_basic[j] = True
        at_upper[j] = False
        xB[r] = enter_val


def _refactor(T, basis, xB, xv, lo, hi, at_upper, is_basic, b, A, le_rows, art_rows, art_sign, n, ns):
    """Recompute the tableau and basic values from the original columns."""
    m = basis.shape[0]
    N = T.shape[1]
    full = np.zeros((m, N))
    full[:, :n] = A
    full[le_rows, n + np.arange(ns)] = 1.0
    for a, (i, s) in enumerate(zip(art_rows, art_sign)):
        full[i, n + ns + a] = s
    B = full[:, basis]
    nonbasic = ~is_basic
    xN = np.where(at_upper, hi, lo)
    xN = np.where(np.isfinite(xN), xN, 0.0)
    xv[nonbasic] = xN[nonbasic]
    rhs = b - full[:, nonbasic] @ xN[nonbasic]
    try:
        T[:m, :] = np.linalg.solve(B, full)
        xB[:] = np.linalg.solve(B, rhs)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - diagnostic path
        raise LPError("singular basis during refactorisation") from exc


def _drive_out_artificials(T, basis, xB, lo, hi, at_upper, is_basic, first_art, m):
    for r in range(m):
        if basis[r] < first_art:
            continue
        row = T[r, :first_art]
        cand = np.flatnonzero((np.abs(row) > 1e-7) & ~is_basic[:first_art])
        if cand.size == 0:
            continue  # redundant row: artificial stays basic, fixed at 0
        j = int(cand[np.argmax(np.abs(row[cand]))])
        leave = basis[r]
        is_basic[leave] = False
        at_upper[leave] = False
        _kernels.pivot(T, r, j)
        basis[r] = j
        is_basic[j] = True
        # degenerate pivot: the entering variable keeps its bound value
        xB[r] = hi[j] if at_upper[j] else lo[j]
        at_upper[j] = False
