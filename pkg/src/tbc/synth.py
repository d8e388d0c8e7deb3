"""Synthetic multi-target scenes with exact ground truth."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .density import DensityVideo, build_perspective, render_from_points
from .metrics import GroundTruth

MOTIONS = ("linear", "bounce", "random-turn")


class SceneSpecError(ValueError):
    pass


def default_base_size(sigma: float) -> tuple:
    """Target box used for windows and gt boxes: side ``4 * sigma`` (a +/-2 sigma box)."""
    s = max(1, int(round(4 * sigma)))
    return (s, s)


@dataclass(frozen=True)
class SceneSpec:
    dims: tuple  # (T, W, H)
    n_targets: int = 1
    motion: str = "linear"
    p_turn: float = 0.1
    speed: tuple = (1.0, 2.0)
    sigma: float = 2.0
    birth: tuple | None = None  # frame range for random births
    death: tuple | None = None
    seed: int = 0
    palette: tuple | None = None  # per-target 8-bit intensity
    noise_sigma: float = 0.0
    margin: float | None = None
    max_displacement: float | None = None
    background: int = 0
    perspective: tuple | None = None  # ((row, h), (row, h)) scales kernel sigma
    targets: tuple | None = None  # explicit targets, see README
    min_separation: float | None = None  # random targets are resampled until they keep this distance
    clutter: int = 0  # faint non-target blobs per frame (spurious density responses)
    clutter_mass: tuple = (0.02, 0.3)
    max_attempts: int = 1000

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise SceneSpecError(f"unknown scene keys: {sorted(unknown)}")
        if "dims" not in d:
            raise SceneSpecError("scene spec is missing required key 'dims'")
        kw = dict(d)
        for k in ("dims", "speed", "birth", "death", "palette", "clutter_mass"):
            if kw.get(k) is not None:
                kw[k] = tuple(kw[k])
        if kw.get("perspective") is not None:
            kw["perspective"] = tuple(tuple(a) for a in kw["perspective"])
        if kw.get("targets") is not None:
            kw["targets"] = tuple(dict(t) for t in kw["targets"])
        return cls(**kw)

    @classmethod
    def from_json(cls, path) -> "SceneSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = [dict(x) if isinstance(x, dict) else (list(x) if isinstance(x, tuple) else x) for x in v]
            out[f.name] = v
        return out


@dataclass
class Scene:
    gt: GroundTruth
    video: DensityVideo
    appearance: np.ndarray  # (T, H, W) uint8
    velocity: np.ndarray  # (T, 2, H, W)
    positions: np.ndarray  # (n_targets, T, 2), nan when not alive
    base_size: tuple
    spec: SceneSpec = field(repr=False)


def _validate(spec: SceneSpec):
    if len(spec.dims) != 3 or any(int(v) != v or v < 1 for v in spec.dims):
        raise SceneSpecError(f"dims must be three positive integers (T, W, H), got {spec.dims}")
    T, W, H = spec.dims
    if spec.motion not in MOTIONS:
        raise SceneSpecError(f"motion must be one of {MOTIONS}, got {spec.motion!r}")
    if spec.sigma <= 0:
        raise SceneSpecError("sigma must be > 0")
    margin = 2 * spec.sigma if spec.margin is None else spec.margin
    if W - 1 <= 2 * margin or H - 1 <= 2 * margin:
        raise SceneSpecError(f"frame {W}x{H} too small for margin {margin}")
    lo, hi = spec.speed
    if lo < 0 or hi < lo:
        raise SceneSpecError(f"invalid speed range {spec.speed}")
    max_disp = default_base_size(spec.sigma)[0] if spec.max_displacement is None else spec.max_displacement
    if hi >= max_disp:
        raise SceneSpecError(f"max speed {hi} must stay below max_displacement {max_disp}")
    if spec.n_targets < 0:
        raise SceneSpecError("n_targets must be >= 0")
    if spec.palette is not None and spec.targets is None and len(spec.palette) < spec.n_targets:
        raise SceneSpecError("palette shorter than n_targets")
    for name in ("birth", "death"):
        rng = getattr(spec, name)
        if rng is not None and not (0 <= rng[0] <= rng[1] <= T - 1):
            raise SceneSpecError(f"{name} range {rng} outside 0..{T - 1}")
    if spec.birth is not None and spec.death is not None and spec.birth[0] > spec.death[1]:
        raise SceneSpecError("birth range starts after every possible death")
    if not 0 <= spec.p_turn <= 1:
        raise SceneSpecError("p_turn must lie in [0, 1]")
    if spec.clutter < 0 or not 0 <= spec.clutter_mass[0] <= spec.clutter_mass[1]:
        raise SceneSpecError("clutter must be >= 0 with a valid clutter_mass range")
    return margin, max_disp


def _reflect(p, v, lo, hi):
    for a in range(2):
        if p[a] < lo[a]:
            p[a] = 2 * lo[a] - p[a]
            v[a] = -v[a]
        elif p[a] > hi[a]:
            p[a] = 2 * hi[a] - p[a]
            v[a] = -v[a]
    return p, v


def _default_palette(n):
    if n == 0:
        return ()
    return tuple(int(round(40 + 200 * k / max(1, n - 1))) if n > 1 else 200 for k in range(n))


def _separated(pos, d_min) -> bool:
    n = pos.shape[0]
    for a in range(n):
        for b in range(a + 1, n):
            d = np.hypot(*(pos[a] - pos[b]).T)
            if np.nanmin(d, initial=np.inf) < d_min:
                return False
    return True


def _simulate(spec, rng, lo, hi, max_disp, T):
    """Draw (or read) targets and integrate their motion; positions are nan outside life spans."""
    if spec.targets is not None:
        targets = []
        for k, tg in enumerate(spec.targets):
            for key in ("start", "velocity"):
                if key not in tg:
                    raise SceneSpecError(f"target {k} is missing required key '{key}'")
            sp = math.hypot(*tg["velocity"])
            if sp >= max_disp:
                raise SceneSpecError(f"target {k} speed {sp:.3f} must stay below max_displacement {max_disp}")
            targets.append(dict(start=np.array(tg["start"], float), vel=np.array(tg["velocity"], float),
                                birth=int(tg.get("birth", 0)), death=int(tg.get("death", T - 1)),
                                intensity=tg.get("intensity")))
    else:
        targets = []
        for k in range(spec.n_targets):
            start = rng.uniform(lo, hi)
            ang = rng.uniform(0, 2 * math.pi)
            sp = rng.uniform(*spec.speed)
            b = int(rng.integers(spec.birth[0], spec.birth[1] + 1)) if spec.birth else 0
            d = int(rng.integers(spec.death[0], spec.death[1] + 1)) if spec.death else T - 1
            targets.append(dict(start=start, vel=sp * np.array([math.cos(ang), math.sin(ang)]),
                                birth=b, death=max(b, d), intensity=None))
    n = len(targets)
    palette = spec.palette if spec.palette is not None else _default_palette(n)
    for k, tg in enumerate(targets):
        if tg["intensity"] is None:
            tg["intensity"] = int(palette[k]) if k < len(palette) else 200
        if not 0 <= tg["birth"] <= tg["death"] <= T - 1:
            raise SceneSpecError(f"target {k} alive range {tg['birth']}..{tg['death']} outside 0..{T - 1}")

    pos = np.full((n, T, 2), np.nan)
    for k, tg in enumerate(targets):
        p, v = tg["start"].copy(), tg["vel"].copy()
        for t in range(T):
            pos[k, t] = p
            if spec.motion == "random-turn" and rng.random() < spec.p_turn:
                ang = rng.uniform(-math.pi, math.pi)
                c, s = math.cos(ang), math.sin(ang)
                v = np.array([c * v[0] - s * v[1], s * v[0] + c * v[1]])
            q = p + v
            if spec.motion in ("bounce", "random-turn") or spec.targets is None:
                q, v = _reflect(q, v, lo, hi)
            p = q
        alive = np.zeros(T, dtype=bool)
        alive[tg["birth"]:tg["death"] + 1] = True
        pos[k, ~alive] = np.nan
    return targets, pos


def generate_scene(spec: SceneSpec) -> Scene:
    """Trajectories, rendered density (unit mass per alive target), velocity and appearance."""
    margin, max_disp = _validate(spec)
    T, W, H = (int(v) for v in spec.dims)
    rng = np.random.default_rng(spec.seed)
    lo = np.array([margin, margin])
    hi = np.array([W - 1 - margin, H - 1 - margin])

    attempts = 1 if spec.targets is not None else max(1, spec.max_attempts)
    for _ in range(attempts):
        targets, pos = _simulate(spec, rng, lo, hi, max_disp, T)
        if spec.min_separation is None or _separated(pos, spec.min_separation):
            break
    else:
        raise SceneSpecError(f"no layout keeps min_separation={spec.min_separation} "
                             f"after {attempts} attempts")
    n = len(targets)
    vel = np.zeros((n, T, 2))
    # velocity: displacement to the next frame (backwards on the last alive frame)
    for k in range(n):
        for t in range(T):
            if np.isnan(pos[k, t, 0]):
                continue
            if t + 1 < T and not np.isnan(pos[k, t + 1, 0]):
                vel[k, t] = pos[k, t + 1] - pos[k, t]
            elif t > 0 and not np.isnan(pos[k, t - 1, 0]):
                vel[k, t] = pos[k, t] - pos[k, t - 1]

    for k in range(n):
        ok = ~np.isnan(pos[k, :, 0])
        p = pos[k, ok]
        if ((p[:, 0] < 0) | (p[:, 0] > W - 1) | (p[:, 1] < 0) | (p[:, 1] > H - 1)).any():
            raise SceneSpecError(f"target {k} leaves the frame")

    sig_of = lambda y: spec.sigma
    if spec.perspective is not None:
        pm = build_perspective(spec.perspective, (W, H))
        ref = pm.at(0, (H - 1) / 2.0)
        sig_of = lambda y: spec.sigma * pm.at(0, y) / ref

    pts, sigmas = [], []
    for t in range(T):
        for k in range(n):
            if not np.isnan(pos[k, t, 0]):
                pts.append((t, pos[k, t, 0], pos[k, t, 1], 1.0))
                sigmas.append(sig_of(pos[k, t, 1]))
    for t in range(T):
        for _ in range(spec.clutter):
            x, y = rng.uniform(lo, hi)
            pts.append((t, x, y, rng.uniform(*spec.clutter_mass)))
            sigmas.append(sig_of(y))
    video = render_from_points(pts, np.array(sigmas) if pts else spec.sigma, (T, W, H))
    frames = np.array(video.frames)
    if spec.noise_sigma > 0:
        frames = np.maximum(frames + rng.normal(0.0, spec.noise_sigma, frames.shape), 0.0)
        video = DensityVideo(frames)

    base = default_base_size(spec.sigma)
    yy, xx = np.mgrid[0:H, 0:W]
    velocity = np.zeros((T, 2, H, W))
    appearance = np.full((T, H, W), spec.background, dtype=np.uint8)
    rows = []
    for t in range(T):
        best = np.full((H, W), np.inf)
        for k in range(n):
            if np.isnan(pos[k, t, 0]):
                continue
            x, y = pos[k, t]
            d2 = (xx - x) ** 2 + (yy - y) ** 2
            r = 2 * sig_of(y)
            near = (d2 <= r * r) & (d2 < best)
            best = np.where(near, d2, best)
            velocity[t, 0][near] = vel[k, t, 0]
            velocity[t, 1][near] = vel[k, t, 1]
            bw, bh = base
            left, top = x - bw / 2.0, y - bh / 2.0
            x0, x1 = max(0, int(math.ceil(left))), min(W - 1, int(math.floor(left + bw)))
            y0, y1 = max(0, int(math.ceil(top))), min(H - 1, int(math.floor(top + bh)))
            appearance[t, y0:y1 + 1, x0:x1 + 1] = targets[k]["intensity"]
            rows.append((t, k + 1, x, y, (left, top, bw, bh)))
    gt = GroundTruth.from_rows(rows, T)
    return Scene(gt, video, appearance, velocity, pos, base, spec)


def crossing_frame(p0, v0, p1, v1):
    """Time at which two linear paths pass through their intersection point, per target.

    Returns ``(t_a, t_b, point)`` or ``None`` for parallel paths.
    """
    p0, v0, p1, v1 = (np.asarray(a, float) for a in (p0, v0, p1, v1))
    M = np.column_stack([v0, -v1])
    if abs(np.linalg.det(M)) < 1e-12:
        return None
    ta, tb = np.linalg.solve(M, p1 - p0)
    return ta, tb, p0 + ta * v0
