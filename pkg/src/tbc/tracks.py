"""Trajectories decoded from flow solutions, TBC3 chaining and MOT CSV I/O."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .graph import CandidateGraph

FLOW_TOL = 1e-7


class TrackIntegrityError(RuntimeError):
    pass


@dataclass(frozen=True)
class Trajectory:
    id: int
    points: tuple  # ((t, x, y), ...) with consecutive t
    boxes: tuple | None = None  # inclusive rects per point
    nodes: tuple = ()  # candidate node ids per point, when known

    def __post_init__(self):
        if not self.points:
            raise ValueError("trajectory needs at least one point")
        ts = [p[0] for p in self.points]
        if any(b - a != 1 for a, b in zip(ts, ts[1:])):
            raise ValueError(f"trajectory {self.id} frames not consecutive: {ts}")

    def __len__(self):
        return len(self.points)

    @property
    def first(self) -> int:
        return self.points[0][0]

    @property
    def last(self) -> int:
        return self.points[-1][0]


@dataclass(frozen=True)
class TrackSet:
    trajectories: list
    dims: tuple  # (T, W, H)
    provenance: str = "whole"

    def __len__(self):
        return len(self.trajectories)

    def detections(self) -> int:
        return sum(len(tr) for tr in self.trajectories)

    def relabel(self) -> "TrackSet":
        """Renumber ids 1..n ordered by (first frame, first point)."""
        order = sorted(self.trajectories, key=lambda tr: (tr.first, tr.points[0][1], tr.points[0][2], tr.id))
        return TrackSet([replace(tr, id=i + 1) for i, tr in enumerate(order)], self.dims, self.provenance)


def decode_tracks(graph: CandidateGraph, assignment, dims=None, provenance: str = "whole",
                  node_ids=None) -> TrackSet:
    """Follow unit flow from each active source arc to the sink.

    ``assignment`` is in model variable order (nodes, edges, sources,
    sinks, ...).  ``node_ids`` optionally maps local node indices to global
    ids recorded on the trajectories.
    """
    x = np.asarray(getattr(assignment, "assignment", assignment), dtype=np.float64)
    n, E = graph.n_nodes, graph.n_edges
    xn = x[:n]
    xe = x[n:n + E]
    xs = x[n + E:2 * n + E]
    xt = x[2 * n + E:3 * n + E]
    inflow = xs.copy()
    outflow = xt.copy()
    if E:
        np.add.at(inflow, graph.edges[:, 1], xe)
        np.add.at(outflow, graph.edges[:, 0], xe)
    bad = np.flatnonzero((np.abs(inflow - xn) > FLOW_TOL) | (np.abs(outflow - xn) > FLOW_TOL))
    if bad.size:
        j = int(bad[0])
        raise TrackIntegrityError(f"flow not conserved at node {j}: in={inflow[j]}, x={xn[j]}, out={outflow[j]}")
    if abs(xs.sum() - xt.sum()) > FLOW_TOL:
        raise TrackIntegrityError("source and sink flow differ")
    nxt = -np.ones(n, dtype=np.int64)
    for e in np.flatnonzero(xe > 0.5):
        nxt[graph.edges[e, 0]] = graph.edges[e, 1]
    ids = np.arange(n) if node_ids is None else np.asarray(node_ids)
    trajs = []
    for s in np.flatnonzero(xs > 0.5):
        pts, nds = [], []
        j = int(s)
        while j >= 0:
            nd = graph.nodes[j]
            pts.append((nd.t, nd.phi[0], nd.phi[1]))
            nds.append(int(ids[j]))
            j = int(nxt[j])
        trajs.append(Trajectory(len(trajs) + 1, tuple(pts), None, tuple(nds)))
    if dims is None:
        T = max((nd.t for nd in graph.nodes), default=-1) + 1
        dims = (T, 0, 0)
    return TrackSet(trajs, tuple(dims), provenance).relabel()


def chain_batches(batch_tracks, radius: float, dims=None, provenance: str = "tbc3") -> TrackSet:
    """Merge tracks of consecutive batches that meet on the shared frame.

    A track ending on the shared frame continues the batch-``k+1`` track
    starting there on the same candidate node; otherwise the nearest start
    within ``radius`` is used (greedy, closest pairs first).
    """
    if not batch_tracks:
        return TrackSet([], dims or (0, 0, 0), provenance)
    dims = dims or batch_tracks[0].dims
    active = [list(tr.points) for tr in batch_tracks[0].trajectories]
    nodes = [list(tr.nodes) for tr in batch_tracks[0].trajectories]
    # index of the merged track each batch track currently extends
    prev_map = list(range(len(active)))
    prev_set = batch_tracks[0].trajectories
    for cur in batch_tracks[1:]:
        if not cur.trajectories:
            prev_set, prev_map = [], []
            continue
        shared = min(tr.first for tr in cur.trajectories)
        ends = [(k, tr) for k, tr in enumerate(prev_set) if tr.last == shared]
        starts = [(k, tr) for k, tr in enumerate(cur.trajectories) if tr.first == shared]
        link = {}
        used_prev = set()
        for ks, st in starts:
            for kp, en in ends:
                if kp not in used_prev and en.nodes and st.nodes and en.nodes[-1] == st.nodes[0]:
                    link[ks] = kp
                    used_prev.add(kp)
                    break
        pairs = []
        for ks, st in starts:
            if ks in link:
                continue
            for kp, en in ends:
                if kp in used_prev:
                    continue
                d = math.hypot(st.points[0][1] - en.points[-1][1], st.points[0][2] - en.points[-1][2])
                if d <= radius:
                    pairs.append((d, kp, ks))
        for d, kp, ks in sorted(pairs):
            if kp in used_prev or ks in link:
                continue
            link[ks] = kp
            used_prev.add(kp)
        new_map = []
        for ks, tr in enumerate(cur.trajectories):
            if ks in link:
                m = prev_map[link[ks]]
                active[m].extend(tr.points[1:])
                nodes[m].extend(tr.nodes[1:])
            else:
                m = len(active)
                active.append(list(tr.points))
                nodes.append(list(tr.nodes))
            new_map.append(m)
        prev_set, prev_map = cur.trajectories, new_map
    trajs = [Trajectory(i + 1, tuple(p), None, tuple(nd)) for i, (p, nd) in enumerate(zip(active, nodes))]
    return TrackSet(trajs, tuple(dims), provenance).relabel()


def attach_boxes(tracks: TrackSet, box_fn) -> TrackSet:
    """Fill ``boxes`` using ``box_fn(t, x, y) -> rect``."""
    out = [replace(tr, boxes=tuple(tuple(box_fn(t, x, y)) for t, x, y in tr.points)) for tr in tracks.trajectories]
    return TrackSet(out, tracks.dims, tracks.provenance)


# ---------------------------------------------------------------- MOT CSV

def rect_to_mot(rect):
    """Inclusive pixel rect -> (left, top, width, height) with pixel centres at integers."""
    x0, y0, x1, y1 = rect
    return x0 - 0.5, y0 - 0.5, x1 - x0 + 1, y1 - y0 + 1


def write_mot_csv(tracks: TrackSet, path, default_size=(1, 1)) -> None:
    """``frame,id,bb_left,bb_top,bb_width,bb_height,conf,-1,-1,-1`` with 1-based frames."""
    rows = []
    for tr in tracks.trajectories:
        for k, (t, x, y) in enumerate(tr.points):
            if tr.boxes is not None:
                left, top, w, h = rect_to_mot(tr.boxes[k])
            else:
                w, h = default_size
                left, top = x - w / 2.0, y - h / 2.0
            rows.append((t + 1, tr.id, left, top, w, h))
    rows.sort()
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        for f, i, left, top, w, h in rows:
            wr.writerow([f, i, _fmt(left), _fmt(top), _fmt(w), _fmt(h), 1, -1, -1, -1])


def _fmt(v):
    v = float(v)
    return str(int(v)) if v == int(v) else repr(v)


def read_mot_csv(path):
    """Rows as ``(t0, id, cx, cy, left, top, w, h, conf)`` with 0-based ``t0``."""
    out = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not row[0].strip() or row[0].lstrip().startswith("#"):
                continue
            try:
                f, i = int(float(row[0])), int(float(row[1]))
                left, top, w, h = (float(v) for v in row[2:6])
                conf = float(row[6]) if len(row) > 6 else 1.0
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed MOT row {row!r}") from exc
            if f < 1:
                raise ValueError(f"{path}:{lineno}: frames are 1-based, got {f}")
            out.append((f - 1, i, left + w / 2.0, top + h / 2.0, left, top, w, h, conf))
    return out


def tracks_from_mot(path, dims) -> TrackSet:
    """Load a MOT CSV as a :class:`TrackSet` (frames with gaps split into pieces)."""
    by_id = {}
    for t, i, cx, cy, left, top, w, h, _ in read_mot_csv(path):
        by_id.setdefault(i, []).append((t, cx, cy))
    trajs = []
    for i in sorted(by_id):
        pts = sorted(by_id[i])
        piece = [pts[0]]
        for p in pts[1:]:
            if p[0] != piece[-1][0] + 1:
                trajs.append(Trajectory(i, tuple(piece)))
                piece = []
            piece.append(p)
        trajs.append(Trajectory(i, tuple(piece)))
    return TrackSet(trajs, tuple(dims), "file")
