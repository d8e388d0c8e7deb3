"""Command-line entry point: ``tbc synth|track|eval|sweep``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import config as C
from .density import DensityFormatError, save_density_video, save_velocity
from .graph import write_pgm
from .metrics import GroundTruth, evaluate
from .model import ModelConsistencyError
from .pipeline import derived, load_inputs, run_tracking
from .solver import LPError
from .synth import SceneSpec, SceneSpecError, generate_scene
from .tracks import TrackIntegrityError, tracks_from_mot, write_mot_csv

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_INTEGRITY = 0, 2, 3, 4

# keys that change the loaded inputs; sweeping them re-synthesises or reloads
_INPUT_KEYS = ("scene", "io.", "seed", "window.base_w", "window.base_h", "window.multiplier")


class InputError(RuntimeError):
    """Unreadable or malformed input file."""


def _read(fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except (C.ConfigError, SceneSpecError):
        raise
    except (OSError, DensityFormatError, ValueError) as exc:
        raise InputError(str(exc)) from exc


def write_gt_csv(gt: GroundTruth, path) -> None:
    """Ground truth as MOT CSV (1-based frames); point-only objects get a 1x1 box."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        for t, objs in enumerate(gt.frames):
            for i, x, y, box in objs:
                left, top, w, h = box if box is not None else (x - 0.5, y - 0.5, 1.0, 1.0)
                wr.writerow([t + 1, i, repr(float(left)), repr(float(top)), repr(float(w)), repr(float(h)), 1, -1, -1, -1])


def cmd_synth(spec_path, out_dir) -> dict:
    spec = SceneSpec.from_json(spec_path) if not isinstance(spec_path, SceneSpec) else spec_path
    scene = generate_scene(spec)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {"gt": out / "gt.csv", "density": out / "density.tbcd", "velocity": out / "velocity.tbcv",
             "scene": out / "scene.json"}
    write_gt_csv(scene.gt, files["gt"])
    save_density_video(scene.video, files["density"])
    save_velocity(scene.velocity, files["velocity"])
    frames = out / "frames"
    frames.mkdir(exist_ok=True)
    for t in range(scene.video.T):
        write_pgm(frames / f"{t + 1:04d}.pgm", scene.appearance[t])
    with open(files["scene"], "w") as fh:
        json.dump(spec.to_dict(), fh, indent=1)
    files["frames"] = frames / "{t:04d}.pgm"
    return {k: str(v) for k, v in files.items()}


def _report_json(report, path):
    with open(path, "w") as fh:
        json.dump(report, fh, indent=1, default=float)


def cmd_track(cfg, out_dir, export_lp: bool = False) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    inputs = _read(load_inputs, cfg)
    res = run_tracking(cfg, inputs, export_lp=out / "model.lp" if export_lp else None)
    bw, bh = inputs.base_size
    write_mot_csv(res.tracks, out / "tracks.csv", default_size=(bw, bh))
    _report_json(res.report, out / "report.json")
    return res.report


def cmd_eval(tracks_path, gt_path, cfg) -> dict:
    gt = _read(GroundTruth.from_mot_csv, gt_path)
    hyp = _read(GroundTruth.from_mot_csv, tracks_path)
    m = cfg["metrics"]
    thr = m["threshold"]
    if thr is None:
        if m["mode"] == "iou":
            thr = 0.5
        else:
            # half the base window; fall back to half the median gt box width
            bw = cfg["window"]["base_w"]
            if bw is None:
                widths = [o[3][2] for f in gt.frames for o in f if o[3] is not None]
                if not widths:
                    raise C.ConfigError("metrics.threshold or window.base_w is required for point matching")
                bw = float(np.median(widths))
            thr = bw / 2.0
    T = max(gt.T, hyp.T)
    gt = GroundTruth(gt.frames + ((),) * (T - gt.T), T)
    try:
        rep = evaluate(hyp, gt, thr, m["mode"])
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    return rep


def parse_values(text: str) -> list:
    """``a,b,c`` or an inclusive range ``start:stop:step``."""
    text = text.strip()
    if ":" in text and "," not in text:
        a, b, s = (float(v) for v in text.split(":"))
        if s <= 0:
            raise C.ConfigError("sweep step must be > 0")
        n = int(round((b - a) / s)) + 1
        return [round(a + k * s, 12) for k in range(n)]
    return [C.parse_value(v.strip()) for v in text.split(",") if v.strip()]


SWEEP_COLUMNS = ["value", "MOTA", "IDF1", "wall_time", "solve_time", "status", "objective", "gap",
                 "n_candidates", "n_windows", "n_vars", "n_tracks"]


def cmd_sweep(cfg, key: str, values, out_path, repeats: int = 1) -> list:
    """One full run per value; timings are the minimum over ``repeats`` runs."""
    if key not in C.documented_keys():
        raise C.ConfigError(f"unknown sweep key {key!r}")
    if repeats < 1:
        raise C.ConfigError("repeats must be >= 1")
    reload = any(key == k or key.startswith(k) for k in _INPUT_KEYS)
    shared = None if reload else _read(load_inputs, cfg)
    rows = []
    for v in values:
        run_cfg = json.loads(json.dumps(cfg))
        C.set_key(run_cfg, key, v)
        run_cfg = C.make_config(run_cfg)
        best = None
        for _ in range(repeats):
            inputs = _read(load_inputs, run_cfg) if reload else shared
            t0 = time.perf_counter()
            res = run_tracking(run_cfg, inputs)
            wall = time.perf_counter() - t0
            if best is None:
                best = (res, wall, res.report["solve_time"])
            else:
                best = (best[0], min(best[1], wall), min(best[2], res.report["solve_time"]))
        res, wall, solve = best
        rep = res.report
        ev = res.evaluation
        rows.append({
            "value": v,
            "MOTA": ev.MOTA if ev else float("nan"),
            "IDF1": ev.IDF1 if ev else float("nan"),
            "wall_time": wall,
            "solve_time": solve,
            "status": rep["status"],
            "objective": rep["objective"],
            "gap": rep["gap"],
            "n_candidates": rep["n_candidates"],
            "n_windows": rep["n_windows"],
            "n_vars": rep["n_vars"],
            "n_tracks": rep["n_tracks"],
        })
    if out_path is not None:
        with open(out_path, "w", newline="") as fh:
            wr = csv.DictWriter(fh, SWEEP_COLUMNS, lineterminator="\n")
            wr.writeheader()
            wr.writerows(rows)
    return rows


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tbc", description="Tracking-by-counting on density-map videos.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
        sp.add_argument("--mode", choices=C.MODES, help="shorthand for --set mode=...")

    s = sub.add_parser("synth", help="generate a synthetic scene")
    s.add_argument("spec", help="scene spec JSON")
    s.add_argument("--out", required=True, help="output directory")

    t = sub.add_parser("track", help="run the tracker")
    common(t)
    t.add_argument("--out", help="output directory (default: io.out_dir)")
    t.add_argument("--export-lp", action="store_true", help="also write model.lp")

    e = sub.add_parser("eval", help="score tracks against ground truth")
    e.add_argument("tracks")
    e.add_argument("gt")
    common(e)
    e.add_argument("--out", help="write the report as JSON")

    w = sub.add_parser("sweep", help="one run per value of a config key")
    common(w)
    w.add_argument("--key", required=True)
    w.add_argument("--values", required=True, help="a,b,c or start:stop:step")
    w.add_argument("--repeats", type=int, default=1, help="runs per value; timings keep the minimum")
    w.add_argument("--out", required=True, help="CSV path")
    return p


def _config_from(args):
    sets = list(args.set)
    if args.mode:
        sets.append(f"mode={args.mode}")
    return _read(C.load_config, args.config, sets) if args.config else C.make_config(None, sets)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            files = _read(cmd_synth, args.spec, args.out)
            print(json.dumps(files, indent=1))
        elif args.command == "track":
            cfg = _config_from(args)
            out = args.out if args.out is not None else cfg["io"]["out_dir"]
            rep = cmd_track(cfg, out, args.export_lp)
            print(f"status={rep['status']} objective={rep['objective']:.6g} gap={rep['gap']:.3g} "
                  f"tracks={rep['n_tracks']} wall={rep['wall_time']:.2f}s")
            if "metrics" in rep:
                print(f"MOTA={rep['metrics']['MOTA']:.4f} IDF1={rep['metrics']['IDF1']:.4f}")
        elif args.command == "eval":
            cfg = _config_from(args)
            rep = cmd_eval(args.tracks, args.gt, cfg)
            print(rep.table())
            if args.out:
                rep.to_json(args.out)
        elif args.command == "sweep":
            cfg = _config_from(args)
            rows = cmd_sweep(cfg, args.key, parse_values(args.values), args.out, args.repeats)
            for r in rows:
                print(f"{args.key}={r['value']}  MOTA={r['MOTA']:.4f}  IDF1={r['IDF1']:.4f}  "
                      f"solve={r['solve_time']:.3f}s")
    except (C.ConfigError, SceneSpecError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrackIntegrityError, ModelConsistencyError, LPError) as exc:
        print(f"integrity error: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    except (InputError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        # parameter values that pass key validation but not a module's checks
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
