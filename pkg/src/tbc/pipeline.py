"""End-to-end tracking run: density -> windows -> graph -> model -> solve -> tracks."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import config as C
from .bbox import BBoxParams, estimate_box
from .density import (DensityVideo, PerspectiveMap, build_perspective, load_density_csv,
                      load_density_video, load_perspective, load_velocity)
from .graph import (EdgeCostParams, attach_appearance, attach_velocity_field, build_graph,
                    estimate_velocity, extract_candidates, load_pgm_sequence)
from .metrics import EvalReport, GroundTruth, evaluate
from .model import (DetectionAugmentation, base_window_rect, build_ft, build_score_map, build_tbc,
                    build_tbc_det, overlap_pairs, plan_batches)
from .solver import SolveConfig, branch_and_bound
from .synth import SceneSpec, generate_scene
from .tracks import TrackSet, attach_boxes, chain_batches, decode_tracks
from .windows import generate_windows


@dataclass
class Inputs:
    video: DensityVideo
    base_size: tuple
    velocity: np.ndarray | None = None
    appearance: np.ndarray | None = None
    perspective: PerspectiveMap | None = None
    detections: np.ndarray | None = None  # (n, 4) rows t, x, y, score with 0-based t
    gt: GroundTruth | None = None


@dataclass
class RunResult:
    tracks: TrackSet
    solutions: list
    models: list
    report: dict
    timings: dict = field(default_factory=dict)
    evaluation: EvalReport | None = None


class _Timer:
    def __init__(self):
        self.times = {}

    def __call__(self, name):
        timer = self

        class _Ctx:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                timer.times[name] = timer.times.get(name, 0.0) + time.perf_counter() - self.t0
        return _Ctx()


def load_detections(path) -> np.ndarray:
    """CSV rows ``t,x,y,score`` with 1-based ``t``."""
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                t, x, y, s = (float(v) for v in row[:4])
            except ValueError as exc:
                if lineno == 1:
                    continue
                raise ValueError(f"{path}:{lineno}: malformed detection row {row!r}") from exc
            rows.append((t - 1, x, y, s))
    return np.array(rows, dtype=np.float64).reshape(-1, 4)


def scene_spec_from_config(cfg) -> SceneSpec | None:
    if cfg["scene"] is not None:
        spec = SceneSpec.from_dict(cfg["scene"])
    elif cfg["io"]["scene"] is not None:
        spec = SceneSpec.from_json(cfg["io"]["scene"])
    else:
        return None
    if cfg["seed"] is not None:
        spec = replace(spec, seed=int(cfg["seed"]))
    return spec


def load_inputs(cfg) -> Inputs:
    """Synthesise the configured scene, or load density and side channels from disk."""
    io = cfg["io"]
    spec = scene_spec_from_config(cfg)
    velocity = appearance = perspective = gt = None
    if spec is not None:
        scene = generate_scene(spec)
        video, velocity, appearance, gt = scene.video, scene.velocity, scene.appearance, scene.gt
        base = scene.base_size
        if spec.perspective is not None:
            perspective = build_perspective(spec.perspective, spec.dims)
    else:
        if io["density"] is None:
            raise C.ConfigError("no input: set scene, io.scene or io.density")
        path = Path(io["density"])
        if path.suffix.lower() == ".csv":
            if io["dims"] is None:
                raise C.ConfigError("io.dims is required for CSV density input")
            video = load_density_csv(path, tuple(io["dims"]))
        else:
            video = load_density_video(path)
        base = None
    w = cfg["window"]
    if w["base_w"] is not None or w["base_h"] is not None:
        if w["base_w"] is None or w["base_h"] is None:
            raise C.ConfigError("window.base_w and window.base_h must be set together")
        base = (w["base_w"], w["base_h"])
    if base is None:
        raise C.ConfigError("window.base_w/base_h are required for density input from disk")
    m = w["multiplier"]
    base = (max(1, int(round(base[0] * m))), max(1, int(round(base[1] * m))))
    if io["velocity"] is not None:
        velocity = load_velocity(io["velocity"])
    if io["appearance"] is not None:
        appearance = load_pgm_sequence(io["appearance"], video.T)
    if io["perspective"] is not None:
        perspective = load_perspective(io["perspective"])
    detections = load_detections(io["detections"]) if io["detections"] is not None else None
    if io["gt"] is not None:
        gt = GroundTruth.from_mot_csv(io["gt"], video.T)
    return Inputs(video, base, velocity, appearance, perspective, detections, gt)


def derived(cfg, inputs: Inputs) -> dict:
    """Defaults that depend on the base window."""
    bw = inputs.base_size[0]
    g = cfg["graph"]
    c_si, c_it = g["c_si"], g["c_it"]
    if g["track_cost"] is not None:
        c_si = c_it = g["track_cost"]
    thr = cfg["metrics"]["threshold"]
    if thr is None:
        thr = bw / 2.0 if cfg["metrics"]["mode"] == "point" else 0.5
    return {
        "threshold": cfg["window"]["prune_threshold"] if g["threshold"] is None else g["threshold"],
        "nms_radius": bw / 2.0 if g["nms_radius"] is None else g["nms_radius"],
        "max_displacement": float(bw) if g["max_displacement"] is None else g["max_displacement"],
        "c_si": float(c_si),
        "c_it": float(c_it),
        "score_sigma": bw / 2.0 if cfg["model"]["score_sigma"] is None else cfg["model"]["score_sigma"],
        "chain_radius": bw / 2.0 if cfg["tbc3"]["chain_radius"] is None else cfg["tbc3"]["chain_radius"],
        "match_threshold": thr,
    }


def prepare_nodes(cfg, inputs: Inputs, d: dict):
    video = inputs.video
    nodes = extract_candidates(video, d["threshold"], d["nms_radius"])
    vmode = cfg["graph"]["velocity"]
    if vmode == "auto":
        vmode = "field" if inputs.velocity is not None else "estimate"
    if vmode == "field":
        if inputs.velocity is None:
            raise C.ConfigError("graph.velocity=field needs a velocity field")
        nodes = attach_velocity_field(nodes, inputs.velocity)
    elif vmode == "estimate":
        nodes = estimate_velocity(video, nodes, inputs.base_size, d["max_displacement"])
    if cfg["graph"]["appearance"] and inputs.appearance is not None:
        nodes = attach_appearance(nodes, inputs.appearance, inputs.base_size)
    return nodes


def _solve_cfg(cfg) -> SolveConfig:
    s = cfg["solver"]
    return SolveConfig(float(s["tolerance_gap"]), int(s["node_limit"]), float(s["time_limit"]), bool(s["envelope"]))


def _model_for(cfg, graph, windows, inputs, d):
    if cfg["mode"] == "tbc+det":
        W, H = inputs.video.W, inputs.video.H
        dets = inputs.detections if inputs.detections is not None else np.zeros((0, 4))
        scores = build_score_map(dets, d["score_sigma"], graph.nodes)
        rects = [base_window_rect(nd, inputs.base_size, W, H) for nd in graph.nodes]
        thr = cfg["model"]["overlap_threshold"]
        aug = DetectionAugmentation(scores, overlap_pairs(graph.nodes, rects, thr), thr)
        return build_tbc_det(graph, windows, aug)
    return build_tbc(graph, windows)


def run_tracking(cfg, inputs: Inputs | None = None, export_lp=None) -> RunResult:
    """Run one configured tracking pass and collect a JSON-ready report."""
    from .solver import export_lp as _export

    timer = _Timer()
    t_start = time.perf_counter()
    with timer("load"):
        if inputs is None:
            inputs = load_inputs(cfg)
    d = derived(cfg, inputs)
    video = inputs.video
    dims = video.dims
    w = cfg["window"]
    with timer("windows"):
        windows = generate_windows(video, inputs.base_size, (w["stride_x"], w["stride_y"]), inputs.perspective,
                                   w["prune_threshold"], w["calibration_row"])
    with timer("candidates"):
        nodes = prepare_nodes(cfg, inputs, d)
    g = cfg["graph"]
    params = EdgeCostParams(g["alpha"], g["beta"], g["gamma"], g["lam"], d["c_si"], d["c_it"])
    with timer("graph"):
        graph = build_graph(nodes, params, d["max_displacement"])
    scfg = _solve_cfg(cfg)
    solutions, models = [], []

    if cfg["mode"] != "tbc3":
        with timer("model"):
            model = _model_for(cfg, graph, windows, inputs, d)
        models.append(model)
        if export_lp is not None:
            _export(model, export_lp)
        with timer("solve"):
            sol = branch_and_bound(model, scfg)
        solutions.append(sol)
        with timer("decode"):
            tracks = decode_tracks(graph, sol, dims, "whole")
    else:
        tb = cfg["tbc3"]
        batch_tracks = []
        tc = float(tb["track_cost"])
        for first, last in plan_batches(video.T, int(tb["batch_len"])):
            sub, keep = graph.subgraph(first, last)
            sub = sub.with_track_costs(tc, tc)
            with timer("model"):
                model = _model_for(cfg, sub, windows.in_frames(first, last), inputs, d)
            models.append(model)
            with timer("solve"):
                sol = branch_and_bound(model, scfg)
            solutions.append(sol)
            with timer("decode"):
                batch_tracks.append(decode_tracks(sub, sol, dims, "tbc3", node_ids=keep))
        if export_lp is not None and models:
            _export(models[0], export_lp)
        provenance = f"tbc3({int(tb['batch_len'])})"
        if tb["stitch"] == "chain":
            with timer("decode"):
                tracks = chain_batches(batch_tracks, d["chain_radius"], dims, provenance)
        else:
            tracks, sol = _ft_stitch(cfg, batch_tracks, graph, params, d, scfg, timer, dims, provenance)
            if sol is not None:
                solutions.append(sol)

    if cfg["bbox"]["enabled"]:
        with timer("bbox"):
            tracks = _attach_boxes(cfg, tracks, inputs)

    evaluation = None
    if inputs.gt is not None:
        with timer("eval"):
            evaluation = evaluate(tracks, inputs.gt, d["match_threshold"], cfg["metrics"]["mode"])
    wall = time.perf_counter() - t_start
    report = {
        "mode": cfg["mode"],
        "status": _worst_status(solutions),
        "objective": float(sum(s.objective for s in solutions)),
        "bound": float(sum(s.bound for s in solutions)),
        "gap": float(max((s.gap for s in solutions), default=0.0)),
        "nodes": int(sum(s.nodes for s in solutions)),
        "lp_solves": int(sum(s.lp_solves for s in solutions)),
        "n_solves": len(solutions),
        "n_candidates": graph.n_nodes,
        "n_edges": graph.n_edges,
        "n_windows": len(windows),
        "n_vars": int(sum(m.n_vars for m in models)),
        "n_rows": int(sum(m.n_rows for m in models)),
        "n_tracks": len(tracks),
        "base_size": list(inputs.base_size),
        "solve_time": float(sum(s.wall_time for s in solutions)),
        "wall_time": wall,
        "timings": dict(timer.times),
    }
    if evaluation is not None:
        report["metrics"] = evaluation.to_dict()
    return RunResult(tracks, solutions, models, report, dict(timer.times), evaluation)


def _worst_status(solutions):
    order = ["infeasible", "limit", "gap-reached", "optimal"]
    if not solutions:
        return "optimal"
    return min((s.status for s in solutions), key=order.index)


def _ft_stitch(cfg, batch_tracks, graph, params, d, scfg, timer, dims, provenance):
    """Re-link the union of batch detections with a flow-only model over the whole video."""
    selected = sorted({nd for tr_set in batch_tracks for tr in tr_set.trajectories for nd in tr.nodes})
    nodes = [replace(graph.nodes[o], id=i) for i, o in enumerate(selected)]
    with timer("model"):
        ft_graph = build_graph(nodes, params, d["max_displacement"]) if nodes else None
        if ft_graph is None:
            return TrackSet([], dims, provenance), None
        model = build_ft(ft_graph, cfg["model"]["ft_unary"])
    with timer("solve"):
        sol = branch_and_bound(model, scfg)
    with timer("decode"):
        tracks = decode_tracks(ft_graph, sol, dims, provenance, node_ids=np.array(selected))
    return tracks, sol


def _attach_boxes(cfg, tracks, inputs: Inputs):
    b = cfg["bbox"]
    p = BBoxParams(b["c"], b["lambda_b"], b["search"], b["aspect"])
    pmap = inputs.perspective
    if pmap is None:
        # flat prior from the base window height
        bh = float(inputs.base_size[1])
        pmap = build_perspective(((0, bh), (max(1, inputs.video.H - 1), bh)), inputs.video.dims)
    video = inputs.video
    return attach_boxes(tracks, lambda t, x, y: estimate_box(video, t, (int(round(x)), int(round(y))), pmap, p).rect)
