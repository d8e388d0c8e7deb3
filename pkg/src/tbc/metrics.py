"""CLEAR MOT and identity (IDF1) metrics."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .tracks import TrackSet, read_mot_csv

MT_RATIO = 0.8
ML_RATIO = 0.2
IOU_THRESHOLD = 0.5
_BIG = 1e9

COLUMNS = ["MOTA", "IDF1", "MOTP", "FAF", "MT", "PT", "ML", "FP", "FN", "IDS", "FM", "RCLL", "PRCN", "GT"]


@dataclass(frozen=True)
class GroundTruth:
    """Annotated objects per frame: ``frames[t] = [(id, x, y, box_or_None), ...]``.

    ``box`` is ``(left, top, width, height)`` in MOT convention.
    """

    frames: tuple
    T: int

    def __post_init__(self):
        for t, objs in enumerate(self.frames):
            ids = [o[0] for o in objs]
            if len(ids) != len(set(ids)):
                raise ValueError(f"duplicate ids in frame {t}")

    @classmethod
    def from_rows(cls, rows, T=None):
        T = (max((r[0] for r in rows), default=-1) + 1) if T is None else T
        frames = [[] for _ in range(T)]
        for r in rows:
            t, i, x, y = r[:4]
            box = r[4] if len(r) > 4 else None
            frames[t].append((int(i), float(x), float(y), None if box is None else tuple(box)))
        return cls(tuple(tuple(sorted(f)) for f in frames), T)

    @classmethod
    def from_mot_csv(cls, path, T=None):
        rows = [(t, i, cx, cy, (left, top, w, h)) for t, i, cx, cy, left, top, w, h, _ in read_mot_csv(path)]
        return cls.from_rows(rows, T)

    @classmethod
    def from_tracks(cls, tracks: TrackSet):
        rows = []
        for tr in tracks.trajectories:
            for k, (t, x, y) in enumerate(tr.points):
                box = None
                if tr.boxes is not None:
                    x0, y0, x1, y1 = tr.boxes[k]
                    box = (x0 - 0.5, y0 - 0.5, x1 - x0 + 1, y1 - y0 + 1)
                rows.append((t, tr.id, x, y, box))
        return cls.from_rows(rows, tracks.dims[0])

    def n_objects(self) -> int:
        return sum(len(f) for f in self.frames)

    def ids(self):
        return sorted({o[0] for f in self.frames for o in f})


@dataclass(frozen=True)
class EvalReport:
    MOTA: float
    MOTP: float
    IDF1: float
    RCLL: float
    PRCN: float
    FAF: float
    GT: int
    MT: int
    PT: int
    ML: int
    FP: int
    FN: int
    IDS: int
    FM: int

    def to_dict(self):
        return asdict(self)

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    def table(self) -> str:
        vals = []
        for c in COLUMNS:
            v = getattr(self, c)
            if c in ("MOTA", "IDF1", "RCLL", "PRCN"):
                vals.append(f"{100 * v:.1f}" if math.isfinite(v) else "nan")
            elif isinstance(v, float):
                vals.append(f"{v:.3f}")
            else:
                vals.append(str(v))
        widths = [max(len(c), len(v)) for c, v in zip(COLUMNS, vals)]
        head = "  ".join(c.rjust(w) for c, w in zip(COLUMNS, widths))
        row = "  ".join(v.rjust(w) for v, w in zip(vals, widths))
        return head + "\n" + row


def _iou(a, b):
    ax1, ay1 = a[0] + a[2], a[1] + a[3]
    bx1, by1 = b[0] + b[2], b[1] + b[3]
    iw = min(ax1, bx1) - max(a[0], b[0])
    ih = min(ay1, by1) - max(a[1], b[1])
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a[2] * a[3] + b[2] * b[3] - inter)


def _pair_cost(g, h, mode, threshold):
    """Matching cost and validity for one gt/hypothesis pair."""
    if mode == "iou":
        iou = _iou(g[3], h[3])
        return 1.0 - iou, iou >= threshold, iou
    d = math.hypot(g[1] - h[1], g[2] - h[2])
    return d, d <= threshold, d


def evaluate(tracks, gt: GroundTruth, threshold: float | None = None, mode: str = "point") -> EvalReport:
    """CLEAR MOT plus IDF1.

    ``mode="point"`` matches centres within ``threshold`` pixels and MOTP
    is the mean matched distance; ``mode="iou"`` matches boxes with IoU at
    least ``threshold`` (default 0.5) and MOTP is the mean matched IoU.
    """
    hyp = tracks if isinstance(tracks, GroundTruth) else GroundTruth.from_tracks(tracks)
    if mode not in ("point", "iou"):
        raise ValueError(f"unknown match mode {mode!r}")
    if threshold is None:
        if mode == "point":
            raise ValueError("point matching needs a distance threshold")
        threshold = IOU_THRESHOLD
    if hyp.T > gt.T and any(hyp.frames[t] for t in range(gt.T, hyp.T)):
        raise ValueError(f"tracks cover frames beyond the ground truth ({hyp.T} > {gt.T})")
    T = gt.T

    last_match = {}  # gt id -> hyp id of the most recent match
    prev_frame = {}  # gt id -> hyp id matched in the previous frame it was present
    tracked_before = {}  # gt id -> was matched at its previous present frame
    gt_frames, gt_hits = {}, {}
    FP = FN = IDS = FM = 0
    matches = 0
    motp_sum = 0.0
    for t in range(T):
        G = list(gt.frames[t])
        Hh = list(hyp.frames[t]) if t < hyp.T else []
        hyp_pos = {h[0]: k for k, h in enumerate(Hh)}
        pairs = {}
        used_h = set()
        # keep last frame's correspondences while still valid
        for gi, g in enumerate(G):
            hid = prev_frame.get(g[0])
            if hid is not None and hid in hyp_pos and hid not in used_h:
                _, ok, q = _pair_cost(g, Hh[hyp_pos[hid]], mode, threshold)
                if ok:
                    pairs[gi] = (hyp_pos[hid], q)
                    used_h.add(hid)
        rest_g = [gi for gi in range(len(G)) if gi not in pairs]
        rest_h = [hi for hi in range(len(Hh)) if Hh[hi][0] not in used_h]
        if rest_g and rest_h:
            C = np.full((len(rest_g), len(rest_h)), _BIG)
            Q = np.zeros_like(C)
            for a, gi in enumerate(rest_g):
                for b, hi in enumerate(rest_h):
                    cost, ok, q = _pair_cost(G[gi], Hh[hi], mode, threshold)
                    if ok:
                        C[a, b] = cost
                        Q[a, b] = q
            ra, cb = linear_sum_assignment(C)
            for a, b in zip(ra, cb):
                if C[a, b] < _BIG:
                    pairs[rest_g[a]] = (rest_h[b], Q[a, b])
        new_prev = {}
        for gi, g in enumerate(G):
            gid = g[0]
            gt_frames[gid] = gt_frames.get(gid, 0) + 1
            if gi in pairs:
                hi, q = pairs[gi]
                hid = Hh[hi][0]
                if gid in last_match and last_match[gid] != hid:
                    IDS += 1
                if gid in last_match and not tracked_before.get(gid, False):
                    FM += 1
                last_match[gid] = hid
                new_prev[gid] = hid
                tracked_before[gid] = True
                gt_hits[gid] = gt_hits.get(gid, 0) + 1
                matches += 1
                motp_sum += q
            else:
                FN += 1
                tracked_before[gid] = False
        FP += len(Hh) - len(pairs)
        prev_frame = new_prev

    n_gt = gt.n_objects()
    n_hyp = hyp.n_objects()
    mota = 1.0 - (FP + FN + IDS) / n_gt if n_gt else math.nan
    motp = motp_sum / matches if matches else math.nan
    MT = PT = ML = 0
    for gid, n in gt_frames.items():
        r = gt_hits.get(gid, 0) / n
        if r >= MT_RATIO:
            MT += 1
        elif r <= ML_RATIO:
            ML += 1
        else:
            PT += 1
    idtp = _global_id_matches(gt, hyp, mode, threshold)
    idf1 = 2.0 * idtp / (n_gt + n_hyp) if n_gt + n_hyp else math.nan
    return EvalReport(
        MOTA=mota, MOTP=motp, IDF1=idf1,
        RCLL=matches / n_gt if n_gt else math.nan,
        PRCN=matches / (matches + FP) if matches + FP else math.nan,
        FAF=FP / T if T else math.nan,
        GT=len(gt_frames), MT=MT, PT=PT, ML=ML, FP=FP, FN=FN, IDS=IDS, FM=FM)


def _global_id_matches(gt, hyp, mode, threshold) -> int:
    """Identity true positives under the best one-to-one gt/hyp trajectory matching."""
    gids = gt.ids()
    hids = hyp.ids()
    if not gids or not hids:
        return 0
    gpos = {g: k for k, g in enumerate(gids)}
    hpos = {h: k for k, h in enumerate(hids)}
    M = np.zeros((len(gids), len(hids)))
    for t in range(min(gt.T, hyp.T)):
        for g in gt.frames[t]:
            for h in hyp.frames[t]:
                if _pair_cost(g, h, mode, threshold)[1]:
                    M[gpos[g[0]], hpos[h[0]]] += 1
    r, c = linear_sum_assignment(-M)
    return int(M[r, c].sum())
