import csv
import json

import numpy as np
import pytest

from tbc.cli import EXIT_CONFIG, EXIT_INTEGRITY, EXIT_IO, EXIT_OK, cmd_sweep, main, parse_values
from tbc.config import DEFAULTS, ConfigError, documented_keys, load_config, make_config, parse_value, set_key
from tbc.density import DensityVideo, save_density_video
from tbc.pipeline import run_tracking

SMALL = {"dims": [10, 40, 32], "n_targets": 2, "speed": [1, 2], "min_separation": 10, "seed": 4}


# ---------------------------------------------------------------- config


def test_defaults_and_overrides():
    cfg = make_config({"graph": {"alpha": 2.0}}, ["window.stride_x=4", "solver.envelope=false", "mode=tbc3"])
    assert cfg["graph"]["alpha"] == 2.0 and cfg["window"]["stride_x"] == 4
    assert cfg["solver"]["envelope"] is False and cfg["mode"] == "tbc3"
    assert cfg["graph"]["beta"] == DEFAULTS["graph"]["beta"]
    assert "scene" in documented_keys() and "io.dims" in documented_keys()


@pytest.mark.parametrize("bad", [
    {"graph": {"alpah": 1}}, {"nope": 1}, {"graph": 3}, {"mode": "fast"}, {"window": {"stride_x": 0}},
    {"window": {"stride_y": 1.5}}, {"solver": {"tolerance_gap": -1}}, {"bbox": {"c": 0.5}},
    {"graph": {"gamma": -0.1}}, {"metrics": {"mode": "area"}},
])
def test_config_rejects(bad):
    with pytest.raises(ConfigError):
        make_config(bad)


def test_set_rejects_unknown_and_malformed():
    cfg = make_config()
    with pytest.raises(ConfigError):
        set_key(cfg, "graph.zeta", 1)
    with pytest.raises(ConfigError):
        make_config(None, ["graph.alpha"])
    assert parse_value("0.5") == 0.5 and parse_value("abc") == "abc" and parse_value("[1,2]") == [1, 2]


def test_load_config_file(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"scene": SMALL, "tbc3": {"stitch": "ft"}}))
    cfg = load_config(p, ["seed=9"])
    assert cfg["scene"]["dims"] == [10, 40, 32] and cfg["seed"] == 9
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(p)


def test_parse_values():
    assert parse_values("0.001:0.003:0.001") == [0.001, 0.002, 0.003]
    assert parse_values("1,2.5,abc") == [1, 2.5, "abc"]
    with pytest.raises(ConfigError):
        parse_values("1:2:0")


# ---------------------------------------------------------------- pipeline modes


@pytest.mark.slow
@pytest.mark.parametrize("mode,extra", [
    ("tbc", {}), ("tbc3", {}), ("tbc3", {"tbc3": {"stitch": "ft"}}),
    ("tbc", {"bbox": {"enabled": True}}), ("tbc", {"graph": {"velocity": "estimate"}}),
    ("tbc", {"solver": {"envelope": False}}),
])
def test_pipeline_modes_recover_small_scene(mode, extra):
    res = run_tracking(make_config({"scene": SMALL, "mode": mode, **extra}))
    assert res.evaluation.MOTA == 1.0
    assert res.report["status"] in ("optimal", "gap-reached")
    if extra.get("bbox"):
        assert all(tr.boxes is not None for tr in res.tracks.trajectories)


def test_pipeline_det_mode(tmp_path):
    from tbc.synth import SceneSpec, generate_scene
    scene = generate_scene(SceneSpec.from_dict(SMALL))
    det = tmp_path / "det.csv"
    with open(det, "w") as fh:
        fh.write("t,x,y,score\n")
        for t, objs in enumerate(scene.gt.frames):
            for _, x, y, _ in objs:
                fh.write(f"{t + 1},{x},{y},1.0\n")
    res = run_tracking(make_config({"scene": SMALL, "mode": "tbc+det", "io": {"detections": str(det)}}))
    assert res.evaluation.MOTA == 1.0
    m = res.models[0]
    assert np.all(m.c[m.node_var] <= 0)


# ---------------------------------------------------------------- CLI


def _write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


@pytest.mark.slow
def test_cli_synth_track_eval(tmp_path, capsys):
    spec = _write(tmp_path / "spec.json", SMALL)
    assert main(["synth", spec, "--out", str(tmp_path / "s")]) == EXIT_OK
    s = tmp_path / "s"
    for f in ("gt.csv", "density.tbcd", "velocity.tbcv", "scene.json", "frames/0001.pgm"):
        assert (s / f).exists()
    cfg = _write(tmp_path / "cfg.json", {
        "io": {"density": str(s / "density.tbcd"), "velocity": str(s / "velocity.tbcv"),
               "appearance": str(s / "frames" / "{t:04d}.pgm"), "gt": str(s / "gt.csv")},
        "window": {"base_w": 8, "base_h": 8}})
    assert main(["track", "--config", cfg, "--out", str(tmp_path / "t"), "--export-lp"]) == EXIT_OK
    rep = json.loads((tmp_path / "t" / "report.json").read_text())
    assert rep["metrics"]["MOTA"] == 1.0 and (tmp_path / "t" / "model.lp").exists()
    assert main(["eval", str(tmp_path / "t" / "tracks.csv"), str(s / "gt.csv"), "--config", cfg,
                 "--out", str(tmp_path / "e.json")]) == EXIT_OK
    assert json.loads((tmp_path / "e.json").read_text())["MOTA"] == 1.0
    assert "MOTA" in capsys.readouterr().out


def test_cli_synth_is_deterministic(tmp_path):
    spec = _write(tmp_path / "spec.json", SMALL)
    main(["synth", spec, "--out", str(tmp_path / "a")])
    main(["synth", spec, "--out", str(tmp_path / "b")])
    for f in ("gt.csv", "density.tbcd", "velocity.tbcv", "frames/0003.pgm"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_cli_exit_codes(tmp_path):
    assert main(["synth", _write(tmp_path / "x.json", {"n_targets": 1}), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["track", "--set", "graph.nope=1"]) == EXIT_CONFIG
    assert main(["track", "--set", "io.density=" + str(tmp_path / "missing.tbcd"),
                 "--set", "window.base_w=8", "--set", "window.base_h=8"]) == EXIT_IO
    assert main(["track"]) == EXIT_CONFIG  # no input at all
    bad = tmp_path / "bad.tbcd"
    bad.write_bytes(b"TBCD1" + b"\0" * 3)
    assert main(["track", "--set", f"io.density={bad}", "--set", "window.base_w=8",
                 "--set", "window.base_h=8", "--out", str(tmp_path / "o")]) == EXIT_IO
    assert main(["eval", str(tmp_path / "none.csv"), str(tmp_path / "none.csv"),
                 "--set", "metrics.threshold=1"]) == EXIT_IO
    assert main(["sweep", "--set", "scene=" + json.dumps(SMALL), "--key", "graph.zeta", "--values", "1,2",
                 "--out", str(tmp_path / "s.csv")]) == EXIT_CONFIG


def test_cli_integrity_exit_code(tmp_path, monkeypatch):
    from tbc import cli
    from tbc.tracks import TrackIntegrityError

    def broken(*a, **k):
        raise TrackIntegrityError("flow not conserved")
    monkeypatch.setattr(cli, "run_tracking", broken)
    d = tmp_path / "d.tbcd"
    save_density_video(DensityVideo(np.zeros((2, 10, 10))), d)
    assert main(["track", "--set", f"io.density={d}", "--set", "window.base_w=4", "--set", "window.base_h=4",
                 "--out", str(tmp_path / "o")]) == EXIT_INTEGRITY


def test_sweep_writes_rows(tmp_path):
    cfg = make_config({"scene": SMALL})
    rows = cmd_sweep(cfg, "graph.c_si", [2.0, 10.0], tmp_path / "s.csv")
    with open(tmp_path / "s.csv") as fh:
        written = list(csv.DictReader(fh))
    assert [r["value"] for r in written] == ["2.0", "10.0"] and len(rows) == 2
    assert all(r["MOTA"] == 1.0 for r in rows)
    seeded = cmd_sweep(cfg, "seed", [4, 5], None)
    assert len(seeded) == 2


def test_short_video_needs_cheaper_tracks():
    # six frames cannot repay c_si + c_it = 20 through count savings
    short = dict(SMALL, dims=[6, 40, 32])
    assert len(run_tracking(make_config({"scene": short})).tracks) == 0
    assert run_tracking(make_config({"scene": short, "graph": {"track_cost": 2.0}})).evaluation.MOTA == 1.0
