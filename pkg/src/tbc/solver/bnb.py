"""LP-relaxation branch-and-bound for :class:`~tbc.model.MilpModel`."""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..model import LE, MilpModel
from .simplex import LPError, solve_lp

INT_TOL = 1e-6
CHECK_TOL = 1e-7


@dataclass(frozen=True)
class SolveConfig:
    tolerance_gap: float = 0.001
    node_limit: int = 100_000
    time_limit: float = 600.0
    envelope: bool = True  # add per-window chord rows to every relaxation

    def __post_init__(self):
        if self.tolerance_gap < 0:
            raise ValueError("tolerance_gap must be >= 0")


@dataclass
class Solution:
    assignment: np.ndarray
    objective: float
    bound: float
    gap: float
    status: str  # optimal | gap-reached | limit | infeasible
    nodes: int = 0
    wall_time: float = 0.0
    root_lp: float = math.nan
    lp_solves: int = 0
    var_names: list = field(default_factory=list, repr=False)

    def to_json(self) -> dict:
        return {
            "objective": self.objective,
            "bound": self.bound,
            "gap": self.gap,
            "status": self.status,
            "nodes": self.nodes,
            "wall_time": self.wall_time,
            "root_lp": self.root_lp,
            "values": {n: float(v) for n, v in zip(self.var_names, self.assignment)},
        }

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)


def relative_gap(objective: float, bound: float) -> float:
    return max(0.0, (objective - bound) / max(1.0, abs(objective)))


def solve_lp_relaxation(model: MilpModel, lb=None, ub=None):
    """Optimal values and objective with binaries relaxed to ``[0, 1]``."""
    res = solve_lp(model.c, model.A, model.sense, model.rhs,
                   model.lb if lb is None else lb, model.ub if ub is None else ub)
    if res.status == "optimal":
        return res.x, res.objective
    if lb is None and ub is None:
        # x = 0 with tight z satisfies every model this package builds
        raise LPError(f"LP relaxation {res.status} on an unbranched model")
    return None, math.inf


def envelope_rows(model: MilpModel):
    """Per-window chord inequalities that every integer solution satisfies.

    With ``n_hat = f + p`` (``f`` integer, ``0 < p < 1``) the integer count
    ``s = w^T x`` obeys ``|s - n_hat| >= p + (1 - 2p)(s - f)``: the chord
    of ``|s - n_hat|`` between ``s = f`` and ``s = f + 1``.  Written as
    ``(1 - 2p) w^T x - z <= (1 - 2p) f - p``.
    """
    K = model.n_hat.shape[0]
    if K == 0:
        return sp.csr_matrix((0, model.n_vars)), np.zeros(0, dtype=np.int8), np.zeros(0)
    f = np.floor(model.n_hat)
    p = model.n_hat - f
    keep = np.flatnonzero(p > 1e-12)
    M = model.membership.tocsr()[keep].tocoo()
    slope = 1.0 - 2.0 * p[keep]
    rows = np.concatenate([M.row, np.arange(keep.size)])
    cols = np.concatenate([model.node_var[M.col], model.z_var[keep]])
    vals = np.concatenate([slope[M.row], -np.ones(keep.size)])
    C = sp.csr_matrix((vals, (rows, cols)), shape=(keep.size, model.n_vars))
    return C, np.full(keep.size, LE, dtype=np.int8), slope * f[keep] - p[keep]


class _Relaxation:
    """The model's rows plus the count envelope, solved with branching bounds."""

    def __init__(self, model: MilpModel, envelope: bool = True):
        self.model = model
        if not envelope:
            self.A, self.sense, self.rhs = model.A, model.sense, model.rhs
            return
        C, sense, rhs = envelope_rows(model)
        self.A = sp.vstack([model.A, C]).tocsr()
        self.sense = np.concatenate([model.sense, sense])
        self.rhs = np.concatenate([model.rhs, rhs])

    def solve(self, lb, ub):
        res = solve_lp(self.model.c, self.A, self.sense, self.rhs, lb, ub)
        if res.status == "optimal":
            return res.x, res.objective
        return None, math.inf


def rounding_heuristic(model: MilpModel, x_lp: np.ndarray):
    """Round detections at 0.5, link greedily by ascending edge cost, refit z.

    Returns an assignment satisfying every model row, or ``None``.
    """
    n = model.n_nodes
    xn = x_lp[model.node_var] if n else np.zeros(0)
    sel = xn >= 0.5
    for i, j in model.exclusions:
        if sel[i] and sel[j]:
            # keep the more strongly selected node, ties to the lower index
            sel[j if xn[i] >= xn[j] else i] = False
    x = np.zeros(model.n_vars)
    x[model.node_var[sel]] = 1.0
    has_out = np.zeros(n, dtype=bool)
    has_in = np.zeros(n, dtype=bool)
    c = model.c
    c_si = c[model.src_var]
    c_it = c[model.snk_var]
    if model.edges.shape[0]:
        costs = c[model.edge_var]
        for e in np.argsort(costs, kind="stable"):
            i, j = model.edges[e]
            if not (sel[i] and sel[j]) or has_out[i] or has_in[j]:
                continue
            if costs[e] - c_it[i] - c_si[j] >= 0:
                continue
            x[model.edge_var[e]] = 1.0
            has_out[i] = has_in[j] = True
    x[model.src_var[sel & ~has_in]] = 1.0
    x[model.snk_var[sel & ~has_out]] = 1.0
    x = model.tight_z(x)
    if model.violation(x) > CHECK_TOL:
        return None
    return x


def _integral(model, x):
    b = model.binary
    return bool(np.all(np.abs(x[b] - np.round(x[b])) <= INT_TOL))


def _snap(model, x):
    x = x.copy()
    x[model.binary] = np.round(x[model.binary])
    return model.tight_z(x)


def branch_and_bound(model: MilpModel, cfg: SolveConfig = SolveConfig()) -> Solution:
    """Depth-first branch-and-bound on the most fractional binary.

    Children are evaluated eagerly and the one with the better LP bound is
    explored first.  Stops when the relative gap reaches
    ``cfg.tolerance_gap`` or the tree is exhausted.
    """
    t0 = time.perf_counter()
    _, root_lp = solve_lp_relaxation(model)
    relax = _Relaxation(model, cfg.envelope)
    x_root, root_obj = relax.solve(model.lb, model.ub)
    lp_solves = 2
    if x_root is None:
        raise LPError("strengthened relaxation failed on an unbranched model")
    root_obj = max(root_obj, root_lp)
    inc_x = model.tight_z(np.zeros(model.n_vars))
    inc_obj = model.objective(inc_x) if model.violation(inc_x) <= CHECK_TOL else math.inf

    def consider(x):
        nonlocal inc_x, inc_obj
        if x is None:
            return
        obj = model.objective(x)
        if obj < inc_obj - 1e-12:
            inc_x, inc_obj = x, obj

    def offer(x_lp):
        if _integral(model, x_lp):
            x = _snap(model, x_lp)
            if model.violation(x) <= CHECK_TOL:
                consider(x)
        consider(rounding_heuristic(model, x_lp))

    offer(x_root)
    stack = [(root_obj, model.lb.copy(), model.ub.copy(), x_root)]
    gap_pruned = math.inf
    branchings = 0
    status = None
    bin_idx = np.flatnonzero(model.binary)

    def prune_level():
        return inc_obj - max(1e-9 * max(1.0, abs(inc_obj)), cfg.tolerance_gap * max(1.0, abs(inc_obj)))

    while stack:
        open_bound = min(min(s[0] for s in stack), gap_pruned)
        if relative_gap(inc_obj, min(open_bound, inc_obj)) <= cfg.tolerance_gap and math.isfinite(inc_obj):
            break
        if branchings >= cfg.node_limit or time.perf_counter() - t0 > cfg.time_limit:
            status = "limit"
            break
        bound, lb, ub, x = stack.pop()
        if bound >= inc_obj - 1e-9 * max(1.0, abs(inc_obj)):
            continue
        if bound >= prune_level():
            gap_pruned = min(gap_pruned, bound)
            continue
        xb = x[bin_idx]
        frac = np.abs(xb - np.round(xb))
        cand = np.flatnonzero(frac > INT_TOL)
        if cand.size == 0:
            continue  # integral LP already offered as incumbent
        # most fractional, ties by lowest variable index
        k = cand[np.argmin(np.abs(xb[cand] - 0.5))]
        v = int(bin_idx[k])
        branchings += 1
        children = []
        for val in (0.0, 1.0):
            clb, cub = lb.copy(), ub.copy()
            clb[v] = cub[v] = val
            cx, cobj = relax.solve(clb, cub)
            lp_solves += 1
            if cx is None:
                continue
            offer(cx)
            children.append((max(cobj, bound), clb, cub, cx, val))
        toward = 1.0 if x[v] >= 0.5 else 0.0
        # pushed last = explored first: better bound, then the rounding direction
        children.sort(key=lambda ch: (ch[0], ch[4] != toward), reverse=True)
        for ch in children:
            if ch[0] < inc_obj - 1e-9 * max(1.0, abs(inc_obj)):
                stack.append(ch[:4])

    open_bound = min([s[0] for s in stack] + [gap_pruned, inc_obj])
    bound = min(max(open_bound, root_obj), inc_obj)
    gap = relative_gap(inc_obj, bound)
    if status is None:
        status = "optimal" if gap <= 1e-9 else "gap-reached"
    return Solution(inc_x, inc_obj, bound, gap, status, branchings, time.perf_counter() - t0, root_lp,
                    lp_solves, list(model.var_names))
