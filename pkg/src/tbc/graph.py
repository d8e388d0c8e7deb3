"""Candidate detections and the association graph."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import _kernels
from .density import DensityVideo

HIST_BINS = 16


@dataclass(frozen=True)
class CandidateNode:
    id: int
    t: int
    phi: tuple  # (x, y) pixel coordinates
    density: float
    velocity: tuple = (0.0, 0.0)
    appearance: np.ndarray | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class EdgeCostParams:
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    lam: float = 1.0
    c_si: float = 10.0
    c_it: float = 10.0

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "lam"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True)
class CandidateGraph:
    """Nodes plus consecutive-frame edges ``(i, j)`` with costs.

    Every node implicitly owns a source arc (cost ``c_si[i]``) and a sink
    arc (cost ``c_it[i]``).
    """

    nodes: list
    edges: np.ndarray  # (E, 2) node ids, sorted
    edge_costs: np.ndarray
    c_si: np.ndarray
    c_it: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return int(self.edges.shape[0])

    def positions(self):
        t = np.array([n.t for n in self.nodes], dtype=np.int64)
        xy = np.array([n.phi for n in self.nodes], dtype=np.float64).reshape(-1, 2)
        return t, xy

    def subgraph(self, first: int, last: int) -> tuple["CandidateGraph", np.ndarray]:
        """Restrict to frames ``first..last``; returns the graph and kept node ids.

        Node ids are renumbered densely; the second value maps new -> old.
        """
        keep = np.array([n.id for n in self.nodes if first <= n.t <= last], dtype=np.int64)
        remap = -np.ones(self.n_nodes, dtype=np.int64)
        remap[keep] = np.arange(keep.size)
        nodes = [replace(self.nodes[o], id=int(i)) for i, o in enumerate(keep)]
        if self.n_edges:
            sel = (remap[self.edges[:, 0]] >= 0) & (remap[self.edges[:, 1]] >= 0)
            edges = remap[self.edges[sel]]
            costs = self.edge_costs[sel]
        else:
            edges, costs = np.zeros((0, 2), dtype=np.int64), np.zeros(0)
        return CandidateGraph(nodes, edges, costs, self.c_si[keep], self.c_it[keep]), keep

    def with_track_costs(self, c_si: float, c_it: float) -> "CandidateGraph":
        return CandidateGraph(self.nodes, self.edges, self.edge_costs,
                              np.full(self.n_nodes, float(c_si)), np.full(self.n_nodes, float(c_it)))


def _disk(radius: float) -> np.ndarray:
    r = int(math.floor(radius))
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    return xx * xx + yy * yy <= radius * radius


def extract_candidates(video: DensityVideo, threshold: float, nms_radius: float) -> list:
    """Local maxima (over a disk of ``nms_radius``) with density >= threshold.

    Plateaus are thinned greedily: highest density first, ties by linear
    index, suppressing everything within the radius.
    """
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    nodes = []
    W = video.W
    foot = _disk(nms_radius)
    # a zero threshold would admit every pixel; positive mass is required
    thr = threshold if threshold > 0 else np.nextafter(0.0, 1.0)
    for t in range(video.T):
        frame = video.frames[t]
        peak = ndimage.maximum_filter(frame, footprint=foot, mode="constant", cval=0.0)
        masked = np.where(frame >= peak, frame, 0.0)
        for lin in _kernels.nms(np.ascontiguousarray(masked), thr, float(nms_radius)):
            y, x = divmod(int(lin), W)
            nodes.append(CandidateNode(len(nodes), t, (x, y), float(frame[y, x])))
    return nodes


def histogram_intersection(a, b) -> float:
    return float(np.minimum(a, b).sum())


def velocity_cosine(va, vb) -> float:
    na, nb = math.hypot(*va), math.hypot(*vb)
    if na < 1e-6 or nb < 1e-6:
        return 0.0
    return (va[0] * vb[0] + va[1] * vb[1]) / (na * nb)


def edge_cost(a: CandidateNode, b: CandidateNode, p: EdgeCostParams) -> float:
    """Association cost: location, appearance and motion similarity, all negated."""
    d = math.hypot(a.phi[0] - b.phi[0], a.phi[1] - b.phi[1])
    cost = -p.alpha * math.exp(-p.lam * d)
    if p.beta and a.appearance is not None and b.appearance is not None:
        cost -= p.beta * histogram_intersection(a.appearance, b.appearance)
    if p.gamma:
        cost -= p.gamma * velocity_cosine(a.velocity, b.velocity)
    return cost


def build_graph(nodes, p: EdgeCostParams, max_displacement: float) -> CandidateGraph:
    """Link every consecutive-frame pair within ``max_displacement`` pixels."""
    if max_displacement <= 0:
        raise ValueError("max_displacement must be > 0")
    nodes = list(nodes)
    for i, n in enumerate(nodes):
        if n.id != i:
            raise ValueError(f"node ids must be 0..n-1 in order (node {i} has id {n.id})")
    t = np.array([n.t for n in nodes], dtype=np.int64)
    xy = np.array([n.phi for n in nodes], dtype=np.float64).reshape(-1, 2)
    edges = []
    r2 = max_displacement * max_displacement
    for tt in np.unique(t):
        a = np.flatnonzero(t == tt)
        b = np.flatnonzero(t == tt + 1)
        if a.size == 0 or b.size == 0:
            continue
        d2 = ((xy[a, None, :] - xy[None, b, :]) ** 2).sum(-1)
        ia, ib = np.nonzero(d2 <= r2)
        edges.extend(zip(a[ia].tolist(), b[ib].tolist()))
    edges = np.array(sorted(edges), dtype=np.int64).reshape(-1, 2)
    costs = np.array([edge_cost(nodes[i], nodes[j], p) for i, j in edges])
    n = len(nodes)
    return CandidateGraph(nodes, edges, costs, np.full(n, float(p.c_si)), np.full(n, float(p.c_it)))


# ------------------------------------------------------------ node features


def attach_velocity_field(nodes, field: np.ndarray) -> list:
    """Sample a ``(T, 2, H, W)`` velocity field at each node."""
    return [replace(n, velocity=(float(field[n.t, 0, n.phi[1], n.phi[0]]),
                                 float(field[n.t, 1, n.phi[1], n.phi[0]]))) for n in nodes]


def estimate_velocity(video: DensityVideo, nodes, base_size, max_displacement) -> list:
    """Block-matching velocity between consecutive density frames.

    The patch is the base window around the node; the search radius is
    ``max_displacement``.  The last frame matches backwards.
    """
    if video.T < 2:
        return list(nodes)
    hw, hh = int(base_size[0]) // 2, int(base_size[1]) // 2
    search = int(math.floor(max_displacement))
    out = []
    for n in nodes:
        x, y = n.phi
        if n.t + 1 < video.T:
            dx, dy = _kernels.block_match(video.frames[n.t], video.frames[n.t + 1], x, y, hw, hh, search)
        else:
            dx, dy = _kernels.block_match(video.frames[n.t], video.frames[n.t - 1], x, y, hw, hh, search)
            dx, dy = -dx, -dy
        out.append(replace(n, velocity=(float(dx), float(dy))))
    return out


def patch_histogram(image: np.ndarray, x: int, y: int, base_size, bins: int = HIST_BINS) -> np.ndarray:
    """L1-normalised intensity histogram of the base-window patch at ``(x, y)``."""
    H, W = image.shape
    hw, hh = int(base_size[0]) // 2, int(base_size[1]) // 2
    patch = image[max(0, y - hh):min(H, y + hh + 1), max(0, x - hw):min(W, x + hw + 1)]
    hist, _ = np.histogram(patch, bins=bins, range=(0, 256))
    return hist / hist.sum()


def attach_appearance(nodes, frames, base_size) -> list:
    return [replace(n, appearance=patch_histogram(frames[n.t], n.phi[0], n.phi[1], base_size)) for n in nodes]


# -------------------------------------------------------------------- PGM


def read_pgm(path) -> np.ndarray:
    """Read an 8-bit binary (P5) or ASCII (P2) PGM image."""
    raw = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        m = re.compile(rb"\s*(#[^\n]*\n\s*)*(\S+)").match(raw, pos)
        if m is None:
            raise ValueError(f"{path}: truncated PGM header")
        tokens.append(m.group(2))
        pos = m.end()
    magic, w, h, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval > 255:
        raise ValueError(f"{path}: only 8-bit PGM supported")
    if magic == b"P5":
        data = np.frombuffer(raw[pos + 1:pos + 1 + w * h], dtype=np.uint8)
    elif magic == b"P2":
        data = np.array(raw[pos:].split()[:w * h], dtype=np.uint8)
    else:
        raise ValueError(f"{path}: not a PGM file ({magic!r})")
    if data.size != w * h:
        raise ValueError(f"{path}: expected {w * h} pixels, got {data.size}")
    return data.reshape(h, w)


def write_pgm(path, image: np.ndarray) -> None:
    image = np.asarray(image, dtype=np.uint8)
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(image.tobytes())


def load_pgm_sequence(pattern: str, T: int) -> np.ndarray:
    """Load frames from a pattern such as ``frames/{t:04d}.pgm`` (1-based ``t``)."""
    return np.stack([read_pgm(pattern.format(t=t + 1)) for t in range(T)])
