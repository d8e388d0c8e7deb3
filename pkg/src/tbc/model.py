"""MILP assembly for the tracking-by-counting model and its variants.

Variable order is fixed: node selections ``x_i``, edges ``x_ij``, source
arcs ``xs_i``, sink arcs ``xt_i``, then one continuous ``z`` per window.
Rows: per node an inflow and an outflow equality, one global source/sink
balance row, two inequalities per window, then any exclusion rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .graph import CandidateGraph
from .windows import WindowSet

EQ, LE = 0, 1
DEFAULT_OVERLAP_THRESHOLD = 0.65


class ModelConsistencyError(ValueError):
    pass


@dataclass(frozen=True)
class MilpModel:
    c: np.ndarray
    A: sp.csr_matrix
    sense: np.ndarray  # EQ or LE per row
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    binary: np.ndarray  # bool per variable
    var_names: list
    row_names: list
    n_nodes: int
    edges: np.ndarray
    node_var: np.ndarray
    edge_var: np.ndarray
    src_var: np.ndarray
    snk_var: np.ndarray
    z_var: np.ndarray
    window_rows: np.ndarray  # (K, 2): the +/- row of each window
    membership: sp.csr_matrix  # (K, n_nodes) window-contains-node
    n_hat: np.ndarray
    exclusions: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))

    @property
    def n_vars(self) -> int:
        return int(self.c.shape[0])

    @property
    def n_rows(self) -> int:
        return int(self.rhs.shape[0])

    @property
    def n_binaries(self) -> int:
        return int(self.binary.sum())

    def objective(self, x) -> float:
        return float(self.c @ x)

    def violation(self, x) -> float:
        """Largest constraint/bound violation of an assignment."""
        r = self.A @ x - self.rhs
        v = np.where(self.sense == EQ, np.abs(r), np.maximum(r, 0.0))
        worst = float(v.max()) if v.size else 0.0
        worst = max(worst, float(np.maximum(self.lb - x, 0).max(initial=0.0)))
        worst = max(worst, float(np.maximum(x - self.ub, 0).max(initial=0.0)))
        return worst

    def tight_z(self, x) -> np.ndarray:
        """Set each ``z`` to ``|w^T x - n_hat|`` for the node part of ``x``."""
        x = np.array(x, dtype=np.float64)
        counts = self.membership @ x[self.node_var] if self.z_var.size else np.zeros(0)
        x[self.z_var] = np.abs(counts - self.n_hat)
        return x


@dataclass(frozen=True)
class DetectionAugmentation:
    scores: np.ndarray  # m, one per candidate node
    exclusions: np.ndarray  # (P, 2) node pairs, i < j, same frame
    overlap_threshold: float = DEFAULT_OVERLAP_THRESHOLD


def _membership(graph: CandidateGraph, windows: WindowSet) -> sp.csr_matrix:
    if len(windows) == 0 or graph.n_nodes == 0:
        return sp.csr_matrix((len(windows), graph.n_nodes))
    t, xy = graph.positions()
    M = windows.contains(t, xy[:, 0], xy[:, 1])
    return sp.csr_matrix(M.astype(np.float64))


def _assemble(graph: CandidateGraph, windows: WindowSet | None, unary=None, exclusions=None) -> MilpModel:
    n = graph.n_nodes
    E = graph.n_edges
    if windows is None:
        from .windows import empty_windows
        windows = empty_windows(0)
    K = len(windows)
    if K and n:
        T_nodes = max(nd.t for nd in graph.nodes) + 1
        if windows.counts.shape[0] < T_nodes:
            raise ModelConsistencyError("windows cover fewer frames than the graph")
    node_var = np.arange(n)
    edge_var = n + np.arange(E)
    src_var = n + E + np.arange(n)
    snk_var = 2 * n + E + np.arange(n)
    z_var = 3 * n + E + np.arange(K)
    nv = 3 * n + E + K

    c = np.zeros(nv)
    if unary is not None:
        c[node_var] = unary
    c[edge_var] = graph.edge_costs
    c[src_var] = graph.c_si
    c[snk_var] = graph.c_it
    c[z_var] = 1.0

    rows, cols, vals = [], [], []
    rhs, sense, names = [], [], []
    r = 0
    src = graph.edges[:, 0] if E else np.zeros(0, dtype=np.int64)
    dst = graph.edges[:, 1] if E else np.zeros(0, dtype=np.int64)
    for j in range(n):
        # inflow: sum_i x_ij + xs_j - x_j = 0
        inc = np.flatnonzero(dst == j)
        rows += [r] * (inc.size + 2)
        cols += list(edge_var[inc]) + [src_var[j], node_var[j]]
        vals += [1.0] * (inc.size + 1) + [-1.0]
        rhs.append(0.0); sense.append(EQ); names.append(f"in_{j}")
        r += 1
        # outflow: sum_i x_ji + xt_j - x_j = 0
        out = np.flatnonzero(src == j)
        rows += [r] * (out.size + 2)
        cols += list(edge_var[out]) + [snk_var[j], node_var[j]]
        vals += [1.0] * (out.size + 1) + [-1.0]
        rhs.append(0.0); sense.append(EQ); names.append(f"out_{j}")
        r += 1
    rows += [r] * (2 * n)
    cols += list(snk_var) + list(src_var)
    vals += [1.0] * n + [-1.0] * n
    rhs.append(0.0); sense.append(EQ); names.append("bal")
    r += 1

    member = _membership(graph, windows)
    window_rows = np.zeros((K, 2), dtype=np.int64)
    for k in range(K):
        inside = member.indices[member.indptr[k]:member.indptr[k + 1]]
        tk, kk = int(windows.t[k]), int(windows.k[k])
        # w^T x - z <= n_hat
        rows += [r] * (inside.size + 1)
        cols += list(node_var[inside]) + [z_var[k]]
        vals += [1.0] * inside.size + [-1.0]
        rhs.append(float(windows.n_hat[k])); sense.append(LE); names.append(f"wp_{tk}_{kk}")
        window_rows[k, 0] = r
        r += 1
        # -w^T x - z <= -n_hat
        rows += [r] * (inside.size + 1)
        cols += list(node_var[inside]) + [z_var[k]]
        vals += [-1.0] * inside.size + [-1.0]
        rhs.append(-float(windows.n_hat[k])); sense.append(LE); names.append(f"wm_{tk}_{kk}")
        window_rows[k, 1] = r
        r += 1

    excl = np.zeros((0, 2), dtype=np.int64) if exclusions is None else np.asarray(exclusions, dtype=np.int64).reshape(-1, 2)
    for i, j in excl:
        rows += [r, r]
        cols += [node_var[i], node_var[j]]
        vals += [1.0, 1.0]
        rhs.append(1.0); sense.append(LE); names.append(f"ex_{i}_{j}")
        r += 1

    A = sp.csr_matrix((vals, (rows, cols)), shape=(r, nv))
    lb = np.zeros(nv)
    ub = np.ones(nv)
    ub[z_var] = np.inf
    binary = np.ones(nv, dtype=bool)
    binary[z_var] = False
    var_names = ([f"x_{i}" for i in range(n)]
                 + [f"x_{i}_{j}" for i, j in graph.edges]
                 + [f"xs_{i}" for i in range(n)]
                 + [f"xt_{i}" for i in range(n)]
                 + [f"z_{int(t)}_{int(k)}" for t, k in zip(windows.t, windows.k)])
    return MilpModel(c, A, np.array(sense, dtype=np.int8), np.array(rhs), lb, ub, binary, var_names, names,
                     n, graph.edges.copy(), node_var, edge_var, src_var, snk_var, z_var, window_rows,
                     member, windows.n_hat.astype(np.float64).copy(), excl)


def build_tbc(graph: CandidateGraph, windows: WindowSet) -> MilpModel:
    """Joint count + flow model (absolute count residuals linearised through ``z``)."""
    return _assemble(graph, windows)


def build_tbc_det(graph: CandidateGraph, windows: WindowSet, aug: DetectionAugmentation) -> MilpModel:
    """TBC plus detection scores on ``x_i`` and hard overlap exclusions ``x_i + x_j <= 1``."""
    scores = np.asarray(aug.scores, dtype=np.float64)
    if scores.size == 0:
        scores = np.zeros(graph.n_nodes)
    if scores.shape != (graph.n_nodes,):
        raise ModelConsistencyError(f"score vector has {scores.size} entries for {graph.n_nodes} nodes")
    pairs = np.asarray(aug.exclusions, dtype=np.int64).reshape(-1, 2)
    for i, j in pairs:
        if graph.nodes[i].t != graph.nodes[j].t:
            raise ModelConsistencyError(f"exclusion pair ({i}, {j}) spans frames")
        if i == j:
            raise ModelConsistencyError(f"exclusion pair ({i}, {j}) is a self-pair")
    pairs = np.unique(np.sort(pairs, axis=1), axis=0) if pairs.size else pairs
    return _assemble(graph, windows, unary=scores, exclusions=pairs)


def build_ft(graph: CandidateGraph, unary_cost: float | np.ndarray = 0.0) -> MilpModel:
    """Flow-only model: count terms replaced by a unary ``c_i x_i``."""
    unary = np.broadcast_to(np.asarray(unary_cost, dtype=np.float64), (graph.n_nodes,)).copy()
    return _assemble(graph, None, unary=unary)


def build_score_map(detections, sigma: float, nodes) -> np.ndarray:
    """Negative Gaussian RBF score at each node from same-frame detections ``(t, x, y, score)``."""
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    m = np.zeros(len(nodes))
    dets = np.asarray(detections, dtype=np.float64).reshape(-1, 4)
    if dets.shape[0] == 0 or not nodes:
        return m
    for i, nd in enumerate(nodes):
        d = dets[dets[:, 0] == nd.t]
        if d.shape[0]:
            r2 = (d[:, 1] - nd.phi[0]) ** 2 + (d[:, 2] - nd.phi[1]) ** 2
            m[i] = -np.sum(d[:, 3] * np.exp(-r2 / (2.0 * sigma * sigma)))
    return m


def rect_iou(a, b) -> float:
    """IoU of inclusive pixel rects ``(x0, y0, x1, y1)``."""
    ix = min(a[2], b[2]) - max(a[0], b[0]) + 1
    iy = min(a[3], b[3]) - max(a[1], b[1]) + 1
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    area = lambda r: (r[2] - r[0] + 1) * (r[3] - r[1] + 1)
    return inter / (area(a) + area(b) - inter)


def overlap_pairs(nodes, rects, threshold: float = DEFAULT_OVERLAP_THRESHOLD) -> np.ndarray:
    """Same-frame node pairs whose rects overlap with IoU above ``threshold``."""
    pairs = []
    by_frame = {}
    for nd in nodes:
        by_frame.setdefault(nd.t, []).append(nd.id)
    for ids in by_frame.values():
        for a in range(len(ids)):
            for b in range(a + 1, len(ids)):
                i, j = ids[a], ids[b]
                if rect_iou(rects[i], rects[j]) > threshold:
                    pairs.append((i, j))
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)


def base_window_rect(nd, base_size, W, H):
    bw, bh = base_size
    x0 = nd.phi[0] - bw // 2
    y0 = nd.phi[1] - bh // 2
    return (max(0, x0), max(0, y0), min(W - 1, x0 + bw - 1), min(H - 1, y0 + bh - 1))


def plan_batches(T: int, batch_len: int = 3, mode: str = "tbc3") -> list:
    """Frame ranges (0-based, inclusive) to solve; tbc3 batches overlap by one frame."""
    if T < 2:
        raise ValueError("need at least 2 frames")
    if mode == "whole":
        return [(0, T - 1)]
    if mode != "tbc3":
        raise ValueError(f"unknown batch mode {mode!r}")
    if batch_len < 2:
        raise ValueError("batch_len must be >= 2")
    out = []
    start = 0
    while True:
        stop = min(T - 1, start + batch_len - 1)
        out.append((start, stop))
        if stop == T - 1:
            return out
        start = stop
