"""Run configuration: one JSON document, strict keys, documented defaults."""

from __future__ import annotations

import copy
import json

DEFAULTS = {
    "mode": "tbc",  # tbc | tbc3 | tbc+det
    "seed": None,  # overrides the scene's own seed when set
    "scene": None,  # inline scene spec; synthesised instead of loading io.density
    "io": {
        "scene": None,  # path to a scene spec JSON (alternative to "scene")
        "density": None,  # .tbcd container or CSV (t,x,y,value; 1-based t)
        "dims": None,  # (T, W, H), needed for CSV density only
        "velocity": None,  # .tbcv container; otherwise see graph.velocity
        "appearance": None,  # PGM pattern such as "frames/{t:04d}.pgm" (1-based t)
        "perspective": None,  # .tbcp container
        "detections": None,  # CSV t,x,y,score (1-based t) for tbc+det
        "gt": None,  # MOT CSV; when present the report carries metrics
        "out_dir": ".",
    },
    "window": {
        "base_w": None,  # None: 4*sigma for synthetic scenes, otherwise required
        "base_h": None,
        "multiplier": 1.0,  # scales base_w/base_h (window-size studies)
        "stride_x": 3,
        "stride_y": 6,
        "prune_threshold": 0.005,
        "calibration_row": None,
    },
    "graph": {
        "threshold": None,  # candidate density threshold; None: window.prune_threshold
        "nms_radius": None,  # None: base_w / 2
        "max_displacement": None,  # None: base_w
        "alpha": 1.0,
        "beta": 1.0,
        "gamma": 1.0,
        "lam": 1.0,
        "c_si": 10.0,
        "c_it": 10.0,
        "track_cost": None,  # when set, overrides both c_si and c_it
        "velocity": "auto",  # auto | field | estimate | none
        "appearance": True,
    },
    "model": {
        "overlap_threshold": 0.65,
        "score_sigma": None,  # None: base_w / 2
        "ft_unary": -1.0,
    },
    "tbc3": {
        "batch_len": 3,
        "stitch": "chain",  # chain | ft
        "track_cost": 1.0,  # c_si = c_it inside each short batch
        "chain_radius": None,  # None: base_w / 2
    },
    "solver": {
        "tolerance_gap": 0.001,
        "node_limit": 100000,
        "time_limit": 600.0,
        "envelope": True,
    },
    "bbox": {
        "enabled": False,
        "c": 0.9,
        "lambda_b": 1.0,
        "search": 0.2,
        "aspect": 0.41,
    },
    "metrics": {
        "mode": "point",  # point | iou
        "threshold": None,  # point: base_w / 2; iou: 0.5
    },
}

MODES = ("tbc", "tbc3", "tbc+det")
_CHOICES = {
    "mode": MODES,
    "graph.velocity": ("auto", "field", "estimate", "none"),
    "tbc3.stitch": ("chain", "ft"),
    "metrics.mode": ("point", "iou"),
}
# keys whose value is a free-form document rather than a scalar
_OPAQUE = {"scene", "io.dims"}


class ConfigError(ValueError):
    pass


def _flat_keys(d, prefix=""):
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict) and key not in _OPAQUE:
            yield from _flat_keys(v, key + ".")
        else:
            yield key


def documented_keys() -> list:
    return sorted(_flat_keys(DEFAULTS))


def _merge(base, over, prefix=""):
    for k, v in over.items():
        key = f"{prefix}{k}"
        if k not in base:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(base[k], dict) and key not in _OPAQUE:
            if not isinstance(v, dict):
                raise ConfigError(f"config key {key!r} must be an object")
            _merge(base[k], v, key + ".")
        else:
            base[k] = v


def _check(cfg):
    for key, allowed in _CHOICES.items():
        v = get(cfg, key)
        if v not in allowed:
            raise ConfigError(f"{key} must be one of {allowed}, got {v!r}")
    for key in ("window.stride_x", "window.stride_y", "tbc3.batch_len", "solver.node_limit"):
        v = get(cfg, key)
        if not isinstance(v, int) or isinstance(v, bool) or v < 1:
            raise ConfigError(f"{key} must be a positive integer, got {v!r}")
    for key in ("window.prune_threshold", "window.multiplier", "solver.tolerance_gap", "solver.time_limit"):
        v = get(cfg, key)
        if not isinstance(v, (int, float)) or isinstance(v, bool) or v < 0:
            raise ConfigError(f"{key} must be a non-negative number, got {v!r}")
    if get(cfg, "window.multiplier") <= 0:
        raise ConfigError("window.multiplier must be > 0")
    for key in ("graph.alpha", "graph.beta", "graph.gamma", "graph.lam"):
        v = get(cfg, key)
        if not isinstance(v, (int, float)) or v < 0:
            raise ConfigError(f"{key} must be a non-negative number, got {v!r}")
    if not 0.8 <= get(cfg, "bbox.c") <= 1.0:
        raise ConfigError("bbox.c must lie in [0.8, 1.0]")


def make_config(overrides: dict | None = None, sets=()) -> dict:
    """Defaults, then a (partial) JSON document, then ``key=value`` overrides."""
    cfg = copy.deepcopy(DEFAULTS)
    if overrides:
        _merge(cfg, overrides)
    for s in sets:
        apply_set(cfg, s)
    _check(cfg)
    return cfg


def load_config(path=None, sets=()) -> dict:
    doc = None
    if path is not None:
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be an object")
    return make_config(doc, sets)


def parse_value(text: str):
    """JSON literal when it parses, otherwise the raw string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_set(cfg: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(f"--set expects key=value, got {assignment!r}")
    key, text = assignment.split("=", 1)
    set_key(cfg, key.strip(), parse_value(text))


def set_key(cfg: dict, key: str, value) -> None:
    if key not in documented_keys():
        raise ConfigError(f"unknown config key {key!r}")
    parts = key.split(".")
    node = cfg
    for p in parts[:-1]:
        node = node[p]
    node[parts[-1]] = value


def get(cfg: dict, key: str):
    node = cfg
    for p in key.split("."):
        node = node[p]
    return node
