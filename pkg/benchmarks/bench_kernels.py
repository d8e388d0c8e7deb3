"""Time each hot kernel on its numba and numpy paths.

    python benchmarks/bench_kernels.py [--repeat N] [--pipeline]

Kernels are called directly (``*_nb`` vs ``*_np``), so one process covers
both backends.  ``--pipeline`` also times a full tracking run in a
subprocess per ``TBC_KERNELS`` value.
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

from tbc import _kernels as K


def _best(fn, repeat):
    fn()  # warm-up (JIT compile on the numba path)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(rng):
    H, W = 240, 320
    n = 400
    xs, ys = rng.uniform(0, W - 1, n), rng.uniform(0, H - 1, n)
    m = rng.uniform(0.5, 1.5, n)
    frame = np.zeros((H, W))
    K.render_points_np(frame, xs, ys, m, 2.0, 4.0)
    x0 = rng.integers(0, W - 9, 20000)
    y0 = rng.integers(0, H - 9, 20000)
    x1, y1 = x0 + 7, y0 + 7
    T = rng.normal(size=(300, 600))
    nb = 16
    Aeq = rng.integers(-1, 2, (6, nb)).astype(float)
    beq = np.zeros(6)
    Ale = np.zeros((0, nb))
    ble = np.zeros(0)
    cost = rng.normal(size=nb)
    Wm = rng.integers(0, 2, (10, nb)).astype(float)
    nhat = rng.uniform(0, 2, 10)
    nxt = np.roll(frame, (1, 2), axis=(0, 1))
    pts = [(int(x), int(y)) for x, y in zip(xs[:100], ys[:100]) if 12 < x < W - 13 and 12 < y < H - 13]

    def render(fn):
        return lambda: fn(np.zeros((H, W)), xs, ys, m, 2.0, 4.0)

    def pivot(fn):
        return lambda: fn(T.copy(), 5, 7)

    def block(fn):
        return lambda: [fn(frame, nxt, x, y, 4, 4, 8) for x, y in pts]

    return {
        "render_points": (render(K.render_points_np), render(getattr(K, "render_points_nb", None))),
        "rect_sums": (lambda: K.rect_sums_np(frame, x0, y0, x1, y1),
                      lambda: K.rect_sums_nb(frame, x0, y0, x1, y1)),
        "nms": (lambda: K.nms_np(frame, 0.01, 4.0), lambda: K.nms_nb(frame, 0.01, 4.0)),
        "pivot": (pivot(K.pivot_np), pivot(getattr(K, "pivot_nb", None))),
        "enumerate_binaries": (lambda: K.enumerate_np(nb, Aeq, beq, Ale, ble, cost, Wm, nhat, 1e-9),
                               lambda: K.enumerate_nb(nb, Aeq, beq, Ale, ble, cost, Wm, nhat, 1e-9)),
        "block_match": (block(K.block_match_np), block(getattr(K, "block_match_nb", None))),
    }


def pipeline_times():
    code = ("import time\nfrom tbc.config import make_config\nfrom tbc.pipeline import run_tracking\n"
            "cfg = make_config({'scene': {'dims': [20, 96, 72], 'n_targets': 5, 'speed': [1, 2],"
            " 'min_separation': 10, 'seed': 0}})\n"
            "run_tracking(cfg)\nt0 = time.perf_counter()\nr = run_tracking(cfg)\n"
            "print(time.perf_counter() - t0, r.report['solve_time'])\n")
    out = {}
    for backend in ("numba", "numpy"):
        env = dict(os.environ, TBC_KERNELS=backend)
        res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        wall, solve = (float(v) for v in res.stdout.split())
        out[backend] = {"wall": wall, "solve": solve}
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--pipeline", action="store_true", help="also time a full tracking run per backend")
    ap.add_argument("--json", help="write results here")
    args = ap.parse_args(argv)
    if K.njit is None:
        sys.exit("numba is unavailable (or TBC_KERNELS=numpy is set); nothing to compare")
    rng = np.random.default_rng(0)
    rows = {}
    print(f"{'kernel':20s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for name, (f_np, f_nb) in cases(rng).items():
        t_np = _best(f_np, args.repeat)
        t_nb = _best(f_nb, args.repeat)
        rows[name] = {"numpy": t_np, "numba": t_nb}
        print(f"{name:20s} {1e3 * t_np:10.3f} {1e3 * t_nb:10.3f} {t_np / t_nb:8.1f}x")
    if args.pipeline:
        rows["pipeline"] = pipeline_times()
        p = rows["pipeline"]
        print(f"{'pipeline (wall s)':20s} {p['numpy']['wall']:10.2f} {p['numba']['wall']:10.2f} "
              f"{p['numpy']['wall'] / p['numba']['wall']:8.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=1)


if __name__ == "__main__":
    main()
