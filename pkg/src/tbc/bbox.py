"""Bounding boxes from density mass and a perspective prior."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .density import DensityVideo, PerspectiveMap, rect_sums

DEFAULT_ASPECT = 0.41


@dataclass(frozen=True)
class BBoxParams:
    c: float = 0.9
    lambda_b: float = 1.0
    search: float = 0.2
    aspect: float = DEFAULT_ASPECT

    def __post_init__(self):
        if not 0.8 <= self.c <= 1.0:
            raise ValueError(f"target mass c={self.c} outside [0.8, 1.0]")
        if self.lambda_b < 0 or self.search < 0:
            raise ValueError("lambda_b and search must be non-negative")


@dataclass(frozen=True)
class BBox:
    t: int
    rect: tuple  # inclusive (x0, y0, x1, y1)
    mass: float
    objective: float


def centered_rect(phi, w: int, h: int, W: int, H: int) -> tuple:
    """Inclusive ``w x h`` rect centred on pixel ``phi``, clipped to the frame.

    Even sizes put the extra pixel after the centre.
    """
    x0 = int(phi[0]) - (w - 1) // 2
    y0 = int(phi[1]) - (h - 1) // 2
    return (max(0, x0), max(0, y0), min(W - 1, x0 + w - 1), min(H - 1, y0 + h - 1))


def _pmap(perspective, t):
    if isinstance(perspective, PerspectiveMap):
        return perspective
    return perspective[t]  # per-frame maps for moving cameras


def reference_dims(phi, t, perspective, aspect):
    h = _pmap(perspective, t).at(phi[0], phi[1])
    return h * aspect, h


def reference_box(phi, t, perspective, aspect: float = DEFAULT_ASPECT, dims=None) -> tuple:
    """Prior box: height from the perspective map at ``phi``, width = height * aspect."""
    pm = _pmap(perspective, t)
    W, H = (pm.W, pm.H) if dims is None else (dims[-2], dims[-1])
    w0, h0 = reference_dims(phi, t, perspective, aspect)
    return centered_rect(phi, max(1, int(round(w0))), max(1, int(round(h0))), W, H)


def search_dims(ref_w: float, ref_h: float, search: float):
    """Integer widths and heights within ``(1 +/- search)`` of the reference dims."""
    def span(v):
        lo = max(1, int(math.ceil(v * (1 - search) - 1e-9)))
        hi = int(math.floor(v * (1 + search) + 1e-9))
        vals = set(range(lo, hi + 1))  # may be empty for tiny sizes
        vals.add(max(1, int(round(v))))
        return sorted(vals)
    return span(ref_w), span(ref_h)


def box_delta(rect, ref, ref_height: float) -> float:
    return sum(abs(a - b) for a, b in zip(rect, ref)) / ref_height


def estimate_box(video: DensityVideo, t: int, phi, perspective, p: BBoxParams = BBoxParams()) -> BBox:
    """Exhaustive search minimising ``|mass - c| + lambda_b * delta(box, reference)``.

    Ties prefer the smaller delta, then the smaller area.
    """
    W, H = video.W, video.H
    w0, h0 = reference_dims(phi, t, perspective, p.aspect)
    ref = centered_rect(phi, max(1, int(round(w0))), max(1, int(round(h0))), W, H)
    ref_h = ref[3] - ref[1] + 1
    widths, heights = search_dims(w0, h0, p.search)
    rects = np.array([centered_rect(phi, w, h, W, H) for w in widths for h in heights], dtype=np.int64)
    masses = rect_sums(video.frames[t], rects)
    best = None
    for rect, mass in zip(rects, masses):
        rect = tuple(int(v) for v in rect)
        delta = box_delta(rect, ref, ref_h)
        obj = abs(mass - p.c) + p.lambda_b * delta
        area = (rect[2] - rect[0] + 1) * (rect[3] - rect[1] + 1)
        key = (obj, delta, area)
        if best is None or _better(key, best[0]):
            best = (key, rect, float(mass))
    (obj, _, _), rect, mass = best
    return BBox(t, rect, mass, obj)


def _better(a, b):
    if a[0] < b[0] - 1e-12:
        return True
    if a[0] > b[0] + 1e-12:
        return False
    return (a[1], a[2]) < (b[1], b[2])
