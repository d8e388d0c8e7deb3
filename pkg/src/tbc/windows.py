"""Sliding-window count constraints over density videos."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .density import DensityVideo, PerspectiveMap, rect_sums

DEFAULT_STRIDE = (3, 6)
DEFAULT_PRUNE_THRESHOLD = 0.005


@dataclass(frozen=True)
class WindowSet:
    """Retained windows, frame-major then row-major by tiling origin.

    ``rects`` is ``(n, 4)`` inclusive ``(x0, y0, x1, y1)``; ``t`` and
    ``k`` give the frame and within-frame index of each row.
    """

    t: np.ndarray
    k: np.ndarray
    rects: np.ndarray
    n_hat: np.ndarray
    counts: np.ndarray  # K_t per frame
    stride: tuple
    base_size: tuple
    prune_threshold: float

    def __len__(self):
        return int(self.t.shape[0])

    @property
    def total_count(self) -> float:
        return float(self.n_hat.sum())

    def in_frames(self, first: int, last: int) -> "WindowSet":
        """Windows of frames ``first..last`` (inclusive), frame indices kept."""
        sel = (self.t >= first) & (self.t <= last)
        counts = np.zeros_like(self.counts)
        counts[first:last + 1] = self.counts[first:last + 1]
        return WindowSet(self.t[sel], self.k[sel], self.rects[sel], self.n_hat[sel], counts,
                         self.stride, self.base_size, self.prune_threshold)

    def contains(self, t: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """Boolean membership matrix ``(n_windows, n_points)``."""
        r = self.rects
        return ((self.t[:, None] == t[None, :])
                & (r[:, 0:1] <= xs[None, :]) & (xs[None, :] <= r[:, 2:3])
                & (r[:, 1:2] <= ys[None, :]) & (ys[None, :] <= r[:, 3:4]))


def empty_windows(T: int, base_size=(1, 1), stride=DEFAULT_STRIDE, prune_threshold=DEFAULT_PRUNE_THRESHOLD):
    z = np.zeros(0, dtype=np.int64)
    return WindowSet(z, z.copy(), np.zeros((0, 4), dtype=np.int64), np.zeros(0), np.zeros(T, dtype=np.int64),
                     tuple(stride), tuple(base_size), prune_threshold)


def _origins(extent, size, step):
    out = list(range(0, extent - size + 1, step))
    if out[-1] != extent - size:
        out.append(extent - size)  # cover the far border
    return out


def tile_rects(W: int, H: int, base_size, stride, perspective: PerspectiveMap | None = None,
               calibration_row: float | None = None) -> np.ndarray:
    """Window rects for one frame, row-major by origin."""
    bw, bh = base_size
    sx, sy = stride
    if bw <= 0 or bh <= 0 or sx <= 0 or sy <= 0:
        raise ValueError("base_size and stride must be positive")
    if bw > W or bh > H:
        raise ValueError(f"base window {bw}x{bh} larger than frame {W}x{H}")
    rects = []
    if perspective is not None:
        ref_row = (H - 1) / 2.0 if calibration_row is None else calibration_row
        ref = perspective.at((W - 1) / 2.0, ref_row)
    for y0 in _origins(H, bh, sy):
        for x0 in _origins(W, bw, sx):
            if perspective is None:
                rects.append((x0, y0, x0 + bw - 1, y0 + bh - 1))
                continue
            cx, cy = x0 + (bw - 1) / 2.0, y0 + (bh - 1) / 2.0
            ratio = perspective.at(cx, cy) / ref
            w = max(1, int(round(bw * ratio)))
            h = max(1, int(round(bh * ratio)))
            a = int(np.floor(cx - (w - 1) / 2.0))
            b = int(np.floor(cy - (h - 1) / 2.0))
            rects.append((max(0, a), max(0, b), min(W - 1, a + w - 1), min(H - 1, b + h - 1)))
    return np.asarray(rects, dtype=np.int64)


def generate_windows(video: DensityVideo, base_size, stride=DEFAULT_STRIDE,
                     perspective: PerspectiveMap | None = None,
                     prune_threshold: float = DEFAULT_PRUNE_THRESHOLD,
                     calibration_row: float | None = None) -> WindowSet:
    """Tile every frame with windows and keep those with ``n_hat >= prune_threshold``."""
    base_size = tuple(int(v) for v in base_size)
    stride = tuple(int(v) for v in stride)
    rects = tile_rects(video.W, video.H, base_size, stride, perspective, calibration_row)
    ts, ks, rs, ns = [], [], [], []
    counts = np.zeros(video.T, dtype=np.int64)
    for t in range(video.T):
        n_hat = rect_sums(video.frames[t], rects)
        keep = np.flatnonzero(n_hat >= prune_threshold)
        counts[t] = keep.size
        ts.append(np.full(keep.size, t, dtype=np.int64))
        ks.append(np.arange(keep.size, dtype=np.int64))
        rs.append(rects[keep])
        ns.append(n_hat[keep])
    if not ts:
        return empty_windows(video.T, base_size, stride, prune_threshold)
    return WindowSet(np.concatenate(ts), np.concatenate(ks), np.concatenate(rs).reshape(-1, 4),
                     np.concatenate(ns), counts, stride, base_size, float(prune_threshold))


def window_counts(windows: WindowSet, nodes, x) -> np.ndarray:
    """``(w_k^t)^T x`` for every window, with ``x`` indexed over candidate nodes."""
    x = np.asarray(x, dtype=np.float64)
    if len(windows) == 0:
        return np.zeros(0)
    if len(nodes) == 0:
        return np.zeros(len(windows))
    t, xs, ys = _node_coords(nodes)
    return windows.contains(t, xs, ys).astype(np.float64) @ x


def count_residual(windows: WindowSet, nodes, x) -> float:
    """Sum over windows of ``|(w_k^t)^T x - n_hat_k^t|``."""
    return float(np.abs(window_counts(windows, nodes, x) - windows.n_hat).sum())


def _node_coords(nodes):
    t = np.array([n.t for n in nodes], dtype=np.int64)
    xs = np.array([n.phi[0] for n in nodes], dtype=np.float64)
    ys = np.array([n.phi[1] for n in nodes], dtype=np.float64)
    return t, xs, ys
