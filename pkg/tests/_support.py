"""Shared fixtures: random small instances, scene recipes, solution audits."""

from __future__ import annotations

import itertools
import math

import numpy as np

from tbc.graph import CandidateNode, EdgeCostParams, build_graph
from tbc.windows import WindowSet

AUDIT_TOL = 1e-6
GAP_LIMIT = 0.001

# acceptance lines collected for the terminal summary
ACCEPTANCE = {}
AUDIT = {"solutions": 0, "violations": 0}


def random_graph(rng, max_binaries=14, max_frames=3, max_per_frame=4, grid=12):
    """Random candidate graph whose model has at most ``max_binaries`` binaries."""
    while True:
        T = int(rng.integers(1, max_frames + 1))
        nodes = []
        for t in range(T):
            for _ in range(int(rng.integers(0, max_per_frame + 1))):
                nodes.append(CandidateNode(len(nodes), t, (int(rng.integers(0, grid)), int(rng.integers(0, grid))),
                                           0.1))
        p = EdgeCostParams(c_si=float(rng.uniform(0, 3)), c_it=float(rng.uniform(0, 3)))
        g = build_graph(nodes, p, max_displacement=float(rng.uniform(3, 10)))
        if 3 * g.n_nodes + g.n_edges <= max_binaries:
            return g, T


def random_windows(rng, T, grid=12, max_windows=13):
    K = int(rng.integers(0, max_windows + 1))
    ts = rng.integers(0, T, K)
    x0 = rng.integers(0, grid - 3, K)
    y0 = rng.integers(0, grid - 3, K)
    rects = np.stack([x0, y0, x0 + rng.integers(2, 7, K), y0 + rng.integers(2, 7, K)], 1).astype(np.int64)
    nh = rng.uniform(0, 2, K)
    order = np.lexsort((np.arange(K), ts))
    counts = np.bincount(ts, minlength=T).astype(np.int64)
    ks = np.concatenate([np.arange(c) for c in counts]).astype(np.int64) if K else np.zeros(0, np.int64)
    return WindowSet(ts[order].astype(np.int64), ks, rects[order].reshape(-1, 4), nh[order], counts, (3, 6), (4, 4), 0.0)


def random_instance(rng, max_binaries=14):
    g, T = random_graph(rng, max_binaries)
    return g, random_windows(rng, T)


def flow_violation(model, x) -> float:
    """Worst flow-conservation or source/sink balance error, computed from the edge list."""
    x = np.asarray(x, dtype=np.float64)
    n = model.n_nodes
    xn = x[model.node_var]
    xs = x[model.src_var]
    xt = x[model.snk_var]
    xe = x[model.edge_var]
    inflow = xs.copy()
    outflow = xt.copy()
    for e, (i, j) in enumerate(model.edges):
        inflow[j] += xe[e]
        outflow[i] += xe[e]
    worst = abs(float(xs.sum() - xt.sum()))
    if n:
        worst = max(worst, float(np.abs(inflow - xn).max()), float(np.abs(outflow - xn).max()))
    return worst


def z_violation(model, x) -> float:
    """Worst ``|z - |w^T x - n_hat||`` over windows."""
    if model.z_var.size == 0:
        return 0.0
    x = np.asarray(x, dtype=np.float64)
    M = model.membership.toarray()
    resid = np.abs(M @ x[model.node_var] - model.n_hat)
    return float(np.abs(x[model.z_var] - resid).max())


def integrality_violation(model, x) -> float:
    xb = np.asarray(x)[model.binary]
    return float(np.abs(xb - np.round(xb)).max(initial=0.0))


def exclusion_violation(model, x) -> float:
    x = np.asarray(x)
    if model.exclusions.size == 0:
        return 0.0
    return float(max(0.0, max(x[i] + x[j] - 1.0 for i, j in model.exclusions)))


def audit_solution(model, sol, check_bounds=True):
    """Feasibility and bound checks that every solver output must satisfy."""
    problems = []
    if sol.status == "infeasible":
        return problems
    x = sol.assignment
    if flow_violation(model, x) > AUDIT_TOL:
        problems.append(f"flow conservation off by {flow_violation(model, x):.3g}")
    if z_violation(model, x) > AUDIT_TOL:
        problems.append(f"z not tight: {z_violation(model, x):.3g}")
    if integrality_violation(model, x) > AUDIT_TOL:
        problems.append("fractional binary in the incumbent")
    if exclusion_violation(model, x) > AUDIT_TOL:
        problems.append("exclusion pair both selected")
    if abs(model.objective(x) - sol.objective) > 1e-6 * max(1.0, abs(sol.objective)):
        problems.append(f"objective {sol.objective} disagrees with c.x {model.objective(x)}")
    if check_bounds:
        tol = 1e-7 * max(1.0, abs(sol.objective))
        if not math.isnan(sol.root_lp) and sol.root_lp > sol.bound + tol:
            problems.append(f"root LP {sol.root_lp} above bound {sol.bound}")
        if sol.bound > sol.objective + tol:
            problems.append(f"bound {sol.bound} above incumbent {sol.objective}")
        if sol.status in ("optimal", "gap-reached") and sol.gap > GAP_LIMIT + 1e-12:
            problems.append(f"gap {sol.gap} above {GAP_LIMIT} with status {sol.status}")
    return problems


def enumerate_optimum(model, allow=None):
    """Independent exhaustive optimum: every binary vector, tight ``z``, optional filter.

    Returns ``(objective, x)`` or ``(inf, None)``.
    """
    b = np.flatnonzero(model.binary)
    A = model.A.toarray()
    eq = model.sense == 0
    best, best_x = math.inf, None
    for bits in itertools.product((0.0, 1.0), repeat=b.size):
        x = np.zeros(model.n_vars)
        x[b] = bits
        x = model.tight_z(x)
        r = A @ x - model.rhs
        if np.any(np.abs(r[eq]) > 1e-9) or np.any(r[~eq] > 1e-9):
            continue
        if allow is not None and not allow(x):
            continue
        v = float(model.c @ x)
        if v < best - 1e-12:
            best, best_x = v, x
    return best, best_x


def record(n: int, ok: bool, detail: str):
    """Print and keep one acceptance line, then assert."""
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[n] = line
    print(line)
    assert ok, line


# ---------------------------------------------------------------- scene recipes

def clean_scene(seed: int) -> dict:
    """Five well-separated straight-line targets over 20 frames."""
    return {"dims": [20, 96, 72], "n_targets": 5, "speed": [1, 2], "motion": "linear",
            "min_separation": 10, "seed": seed}


def crossing_scene() -> dict:
    """Two targets whose straight paths intersect around frames 9-10; dark vs bright palettes."""
    return {"dims": [20, 112, 40], "n_targets": 2, "seed": 0,
            "targets": [{"start": [6, 18], "velocity": [5, 0.3], "intensity": 60},
                        {"start": [101, 21], "velocity": [-5, 0], "intensity": 220}]}


def occlusion_scene() -> dict:
    """Two targets whose blobs merge into one peak for three frames."""
    return {"dims": [16, 52, 40], "n_targets": 2, "seed": 0,
            "targets": [{"start": [10, 20], "velocity": [2, 0], "intensity": 60},
                        {"start": [34, 21], "velocity": [-1, 0], "intensity": 220}]}


def sweep_scene() -> dict:
    """Four targets with faint clutter blobs; clutter falls below rising thresholds."""
    return {"dims": [6, 96, 72], "n_targets": 4, "speed": [1, 2], "seed": 3, "motion": "linear",
            "min_separation": 10, "clutter": 40, "clutter_mass": [0.01, 0.25]}


def track_points(tracks):
    """Relabelled tracks as a comparable structure."""
    return [tuple((int(t), float(x), float(y)) for t, x, y in tr.points) for tr in tracks.relabel().trajectories]
