"""Density-map videos, perspective maps and their file formats.

Frame indices are 0-based in the Python API.  The on-disk CSV import uses
1-based frames, matching the MOT Challenge convention used elsewhere.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels

DENSITY_MAGIC = b"TBCD1"
PERSPECTIVE_MAGIC = b"TBCP1"
VELOCITY_MAGIC = b"TBCV1"
_HEADER = struct.Struct("<5sIII")

KERNEL_TRUNCATION = 4.0


class DensityFormatError(ValueError):
    """Raised for malformed density/perspective/velocity files."""


@dataclass(frozen=True)
class DensityVideo:
    """Stack of per-frame density maps, shape ``(T, H, W)``."""

    frames: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.frames, dtype=np.float64)
        if f.ndim != 3 or min(f.shape) <= 0:
            raise ValueError(f"density video needs shape (T, H, W) with all dims > 0, got {f.shape}")
        if not np.all(np.isfinite(f)) or (f < 0).any():
            t, y, x = np.argwhere(~(f >= 0))[0]
            raise ValueError(f"density must be finite and non-negative (frame {t}, row {y}, col {x})")
        f.setflags(write=False)
        object.__setattr__(self, "frames", f)

    @property
    def T(self) -> int:
        return self.frames.shape[0]

    @property
    def H(self) -> int:
        return self.frames.shape[1]

    @property
    def W(self) -> int:
        return self.frames.shape[2]

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.T, self.W, self.H)

    def vectorize(self) -> np.ndarray:
        """The global vector ``d`` in :func:`linear_index` order."""
        return self.frames.reshape(-1)

    def frame_sums(self) -> np.ndarray:
        return self.frames.sum(axis=(1, 2))


@dataclass(frozen=True)
class PerspectiveMap:
    """Expected target height (pixels) at every pixel, shape ``(H, W)``.

    ``anchors`` keeps the two (row, height) calibration points when the map
    was built by :func:`build_perspective`, so fractional rows can be
    queried exactly.
    """

    scale: np.ndarray
    anchors: tuple | None = None

    def __post_init__(self):
        s = np.asarray(self.scale, dtype=np.float64)
        if s.ndim != 2 or min(s.shape) <= 0:
            raise ValueError("perspective scale must be a non-empty 2-D grid")
        if not (s > 0).all():
            raise ValueError("perspective scale values must be > 0")
        s.setflags(write=False)
        object.__setattr__(self, "scale", s)

    @property
    def H(self) -> int:
        return self.scale.shape[0]

    @property
    def W(self) -> int:
        return self.scale.shape[1]

    def at(self, x: float, y: float) -> float:
        """Scale at a (possibly fractional) position."""
        if self.anchors is not None:
            return _interp_row(self.anchors, y)
        col = int(np.clip(round(x), 0, self.W - 1))
        row = int(np.clip(round(y), 0, self.H - 1))
        return float(self.scale[row, col])


def _interp_row(anchors, row):
    (r0, h0), (r1, h1) = anchors
    if r0 > r1:
        (r0, h0), (r1, h1) = (r1, h1), (r0, h0)
    if row <= r0:
        return float(h0)
    if row >= r1:
        return float(h1)
    return h0 + (h1 - h0) * (row - r0) / (r1 - r0)


def build_perspective(ref_boxes, dims) -> PerspectiveMap:
    """Row-linear perspective map from two ``(row, height)`` anchors.

    ``dims`` is ``(W, H)`` or ``(T, W, H)``; heights are clamped to the
    anchor values above/below the anchor rows.
    """
    (r0, h0), (r1, h1) = ref_boxes
    if r0 == r1:
        raise ValueError("perspective anchors must lie on distinct rows")
    if h0 <= 0 or h1 <= 0:
        raise ValueError("perspective anchor heights must be > 0")
    W, H = dims[-2], dims[-1]
    rows = np.array([_interp_row(((r0, h0), (r1, h1)), r) for r in range(H)])
    scale = np.repeat(rows[:, None], W, axis=1)
    return PerspectiveMap(scale, anchors=((float(r0), float(h0)), (float(r1), float(h1))))


def linear_index(t: int, x: int, y: int, W: int, H: int) -> int:
    return t * W * H + y * W + x


def unravel_index(linear: int, W: int, H: int) -> tuple[int, int, int]:
    t, rem = divmod(linear, W * H)
    y, x = divmod(rem, W)
    return t, x, y


def render_from_points(points, sigma: float, dims, trunc: float = KERNEL_TRUNCATION) -> DensityVideo:
    """Render ``(t, x, y, mass)`` points as truncated, renormalised Gaussians.

    Each point's kernel is clipped at ``trunc * sigma`` and at the frame
    border, then rescaled so it carries exactly ``mass``.  ``sigma`` may
    also be a per-point array.
    """
    T, W, H = dims
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 4)
    sig = np.broadcast_to(np.asarray(sigma, dtype=np.float64), (pts.shape[0],)) if pts.shape[0] else np.zeros(0)
    if np.any(np.asarray(sigma) <= 0):
        raise ValueError("sigma must be > 0")
    for i, (t, x, y, m) in enumerate(pts):
        if not (0 <= t < T and 0 <= x <= W - 1 and 0 <= y <= H - 1) or t != int(t):
            raise ValueError(f"point {i} {(t, x, y)} lies outside dims (T={T}, W={W}, H={H})")
        if m < 0:
            raise ValueError(f"point {i} has negative mass {m}")
    frames = np.zeros((T, H, W))
    for t in range(T):
        sel = pts[:, 0] == t
        if not sel.any():
            continue
        p = pts[sel]
        s = sig[sel]
        if np.all(s == s[0]):
            _kernels.render_points(frames[t], p[:, 1].copy(), p[:, 2].copy(), p[:, 3].copy(), float(s[0]), trunc)
        else:
            for k in range(p.shape[0]):
                _kernels.render_points(frames[t], p[k:k + 1, 1].copy(), p[k:k + 1, 2].copy(),
                                       p[k:k + 1, 3].copy(), float(s[k]), trunc)
    return DensityVideo(frames)


def _check_rect(video_or_shape, rect):
    H, W = video_or_shape
    x0, y0, x1, y1 = rect
    if not (0 <= x0 <= x1 <= W - 1 and 0 <= y0 <= y1 <= H - 1):
        raise IndexError(f"rect {tuple(rect)} outside frame {W}x{H}")


def region_sum(video: DensityVideo, t: int, rect) -> float:
    """Density mass in the inclusive rectangle ``(x0, y0, x1, y1)`` of frame ``t``."""
    if not 0 <= t < video.T:
        raise IndexError(f"frame {t} outside 0..{video.T - 1}")
    _check_rect((video.H, video.W), rect)
    x0, y0, x1, y1 = (np.array([v], dtype=np.int64) for v in rect)
    return float(_kernels.rect_sums(video.frames[t], x0, y0, x1, y1)[0])


def rect_sums(frame: np.ndarray, rects: np.ndarray) -> np.ndarray:
    """Vectorised :func:`region_sum` over an ``(n, 4)`` rect array on one frame."""
    rects = np.asarray(rects, dtype=np.int64).reshape(-1, 4)
    if rects.shape[0] == 0:
        return np.zeros(0)
    return _kernels.rect_sums(np.ascontiguousarray(frame), rects[:, 0].copy(), rects[:, 1].copy(),
                              rects[:, 2].copy(), rects[:, 3].copy())


# ------------------------------------------------------------------ file I/O


def _write_container(path, magic, T, W, H, values):
    data = np.ascontiguousarray(values, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(magic, T, W, H))
        fh.write(data.tobytes())


def _read_container(path, magic, channels=1):
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise DensityFormatError(f"{path}: truncated header ({len(raw)} bytes)")
    got, T, W, H = _HEADER.unpack_from(raw)
    if got != magic:
        raise DensityFormatError(f"{path}: bad magic {got!r}, expected {magic!r}")
    if T < 1 or W < 1 or H < 1:
        raise DensityFormatError(f"{path}: invalid dims T={T} W={W} H={H}")
    expected = T * W * H * channels * 4
    body = raw[_HEADER.size:]
    if len(body) != expected:
        frame_bytes = W * H * channels * 4
        frame = len(body) // frame_bytes
        raise DensityFormatError(
            f"{path}: frame-size mismatch, expected {expected} data bytes, got {len(body)} "
            f"(frame {frame}, offset {_HEADER.size + frame * frame_bytes})")
    vals = np.frombuffer(body, dtype="<f4").astype(np.float64)
    return T, W, H, vals


def save_density_video(video: DensityVideo, path) -> None:
    """Write ``video`` as little-endian float32 (lossless for float32-exact values)."""
    _write_container(path, DENSITY_MAGIC, video.T, video.W, video.H, video.frames)


def load_density_video(path) -> DensityVideo:
    T, W, H, vals = _read_container(path, DENSITY_MAGIC)
    bad = np.flatnonzero(~(vals >= 0))
    if bad.size:
        i = int(bad[0])
        frame, rem = divmod(i, W * H)
        raise DensityFormatError(
            f"{path}: negative or non-finite value {vals[i]:g} in frame {frame} "
            f"(value offset {rem}, byte offset {_HEADER.size + 4 * i})")
    return DensityVideo(vals.reshape(T, H, W))


def load_density_csv(path, dims) -> DensityVideo:
    """Import ``t,x,y,value`` rows (1-based ``t``) into a ``(T, W, H)`` video."""
    T, W, H = dims
    frames = np.zeros((T, H, W))
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                t, x, y = (int(v) for v in row[:3])
                v = float(row[3])
            except (ValueError, IndexError) as exc:
                if lineno == 1:  # header line
                    continue
                raise DensityFormatError(f"{path}:{lineno}: cannot parse {row!r}") from exc
            if not (1 <= t <= T and 0 <= x < W and 0 <= y < H):
                raise DensityFormatError(f"{path}:{lineno}: cell {(t, x, y)} outside dims {dims}")
            if not v >= 0:
                raise DensityFormatError(f"{path}:{lineno}: negative value {v} at frame {t}")
            frames[t - 1, y, x] = v
    return DensityVideo(frames)


def save_perspective(pmap: PerspectiveMap, path) -> None:
    _write_container(path, PERSPECTIVE_MAGIC, 1, pmap.W, pmap.H, pmap.scale)


def load_perspective(path) -> PerspectiveMap:
    T, W, H, vals = _read_container(path, PERSPECTIVE_MAGIC)
    if T != 1:
        raise DensityFormatError(f"{path}: perspective container must hold one frame, got T={T}")
    if not (vals > 0).all():
        raise DensityFormatError(f"{path}: perspective values must be > 0")
    return PerspectiveMap(vals.reshape(H, W))


def save_velocity(field: np.ndarray, path) -> None:
    """Write a ``(T, 2, H, W)`` velocity field (vx plane then vy plane per frame)."""
    field = np.asarray(field)
    T, C, H, W = field.shape
    if C != 2:
        raise ValueError("velocity field needs 2 channels")
    _write_container(path, VELOCITY_MAGIC, T, W, H, field)


def load_velocity(path) -> np.ndarray:
    T, W, H, vals = _read_container(path, VELOCITY_MAGIC, channels=2)
    if not np.all(np.isfinite(vals)):
        raise DensityFormatError(f"{path}: non-finite velocity value")
    return vals.reshape(T, 2, H, W)
