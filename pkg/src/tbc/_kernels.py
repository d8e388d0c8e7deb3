"""Hot numeric kernels.

Every kernel exists twice: a numba ``@njit`` version and a pure-numpy
version with identical semantics.  ``TBC_KERNELS=numpy`` forces the numpy
path; the default uses numba when it imports cleanly.  Within one backend
results are deterministic; across backends they agree to rounding.
"""

import math
import os

import numpy as np

_REQUESTED = os.environ.get("TBC_KERNELS", "numba").strip().lower()
if _REQUESTED not in ("numba", "numpy"):
    raise ImportError(f"TBC_KERNELS must be 'numba' or 'numpy', got {_REQUESTED!r}")

try:
    if _REQUESTED == "numpy":
        raise ImportError
    from numba import njit
except ImportError:  # pragma: no cover - exercised via TBC_KERNELS=numpy
    njit = None

BACKEND = "numba" if njit is not None else "numpy"


# ---------------------------------------------------------------- numpy path


def render_points_np(frame, xs, ys, masses, sigma, trunc):
    H, W = frame.shape
    r = trunc * sigma
    for p in range(xs.shape[0]):
        px, py, m = xs[p], ys[p], masses[p]
        x0 = max(0, int(math.ceil(px - r)))
        x1 = min(W - 1, int(math.floor(px + r)))
        y0 = max(0, int(math.ceil(py - r)))
        y1 = min(H - 1, int(math.floor(py + r)))
        if x1 < x0 or y1 < y0:
            continue
        gx = np.exp(-((np.arange(x0, x1 + 1) - px) ** 2) / (2.0 * sigma * sigma))
        gy = np.exp(-((np.arange(y0, y1 + 1) - py) ** 2) / (2.0 * sigma * sigma))
        k = np.outer(gy, gx)
        frame[y0:y1 + 1, x0:x1 + 1] += k * (m / k.sum())
    return frame


def rect_sums_np(frame, x0, y0, x1, y1):
    out = np.empty(x0.shape[0])
    for i in range(x0.shape[0]):
        out[i] = frame[y0[i]:y1[i] + 1, x0[i]:x1[i] + 1].sum()
    return out


def nms_np(frame, threshold, radius):
    H, W = frame.shape
    flat = frame.ravel()
    idx = np.flatnonzero(flat >= threshold)
    # density descending, ties by linear index
    order = idx[np.lexsort((idx, -flat[idx]))]
    keep = []
    r2 = radius * radius
    alive = np.ones(order.shape[0], dtype=bool)
    oy, ox = order // W, order % W
    for a in range(order.shape[0]):
        if not alive[a]:
            continue
        keep.append(order[a])
        d2 = (oy - oy[a]) ** 2 + (ox - ox[a]) ** 2
        alive &= d2 > r2
    return np.asarray(keep, dtype=np.int64)


def pivot_np(T, r, j):
    piv = T[r, j]
    T[r, :] /= piv
    col = T[:, j].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r, :])
    T[:, j] = 0.0
    T[r, j] = 1.0


def enumerate_np(nb, Aeq, beq, Ale, ble, cost, Wm, nhat, tol):
    """Scan all 2**nb binary vectors; return (best_code, best_obj, found)."""
    best_obj = np.inf
    best_code = -1
    chunk = 1 << min(nb, 16)
    shifts = np.arange(nb - 1, -1, -1, dtype=np.int64)
    total = 1 << nb
    for start in range(0, total, chunk):
        codes = np.arange(start, min(total, start + chunk), dtype=np.int64)
        X = ((codes[:, None] >> shifts[None, :]) & 1).astype(np.float64)
        ok = np.ones(codes.shape[0], dtype=bool)
        if Aeq.shape[0]:
            ok &= np.all(np.abs(X @ Aeq.T - beq) <= tol, axis=1)
        if Ale.shape[0]:
            ok &= np.all(X @ Ale.T - ble <= tol, axis=1)
        if not ok.any():
            continue
        obj = X @ cost
        if Wm.shape[0]:
            obj = obj + np.abs(X @ Wm.T - nhat).sum(axis=1)
        obj = np.where(ok, obj, np.inf)
        # first near-minimum = lexicographically smallest code
        k = int(np.flatnonzero(obj <= obj.min() + 1e-12)[0])
        if obj[k] < best_obj - 1e-12:
            best_obj = float(obj[k])
            best_code = int(codes[k])
    return best_code, best_obj, best_code >= 0


def block_match_np(cur, nxt, x, y, hw, hh, search):
    H, W = cur.shape
    ya, yb = max(0, y - hh), min(H - 1, y + hh)
    xa, xb = max(0, x - hw), min(W - 1, x + hw)
    patch = cur[ya:yb + 1, xa:xb + 1]
    best = np.inf
    bdx = bdy = 0
    for dy in range(-search, search + 1):
        for dx in range(-search, search + 1):
            if dx * dx + dy * dy > search * search:
                continue
            if ya + dy < 0 or yb + dy > H - 1 or xa + dx < 0 or xb + dx > W - 1:
                continue
            cand = nxt[ya + dy:yb + dy + 1, xa + dx:xb + dx + 1]
            ssd = float(((cand - patch) ** 2).sum())
            # prefer the smallest displacement among equal scores
            if ssd < best - 1e-15 or (abs(ssd - best) <= 1e-15 and dx * dx + dy * dy < bdx * bdx + bdy * bdy):
                best, bdx, bdy = ssd, dx, dy
    return bdx, bdy


# ---------------------------------------------------------------- numba path

if njit is not None:

    @njit(cache=True, nogil=True)
    def render_points_nb(frame, xs, ys, masses, sigma, trunc):
        H, W = frame.shape
        r = trunc * sigma
        inv = 1.0 / (2.0 * sigma * sigma)
        for p in range(xs.shape[0]):
            px, py, m = xs[p], ys[p], masses[p]
            x0 = max(0, int(math.ceil(px - r)))
            x1 = min(W - 1, int(math.floor(px + r)))
            y0 = max(0, int(math.ceil(py - r)))
            y1 = min(H - 1, int(math.floor(py + r)))
            if x1 < x0 or y1 < y0:
                continue
            gx = np.empty(x1 - x0 + 1)
            gy = np.empty(y1 - y0 + 1)
            for i in range(gx.shape[0]):
                gx[i] = math.exp(-((x0 + i - px) ** 2) * inv)
            for i in range(gy.shape[0]):
                gy[i] = math.exp(-((y0 + i - py) ** 2) * inv)
            s = 0.0
            for a in range(gy.shape[0]):
                for b in range(gx.shape[0]):
                    s += gy[a] * gx[b]
            scale = m / s
            for a in range(gy.shape[0]):
                for b in range(gx.shape[0]):
                    frame[y0 + a, x0 + b] += gy[a] * gx[b] * scale
        return frame

    @njit(cache=True, nogil=True)
    def rect_sums_nb(frame, x0, y0, x1, y1):
        out = np.empty(x0.shape[0])
        for i in range(x0.shape[0]):
            s = 0.0
            for yy in range(y0[i], y1[i] + 1):
                for xx in range(x0[i], x1[i] + 1):
                    s += frame[yy, xx]
            out[i] = s
        return out

    @njit(cache=True, nogil=True)
    def _nms_core(order, W, radius):
        n = order.shape[0]
        alive = np.ones(n, dtype=np.bool_)
        keep = np.empty(n, dtype=np.int64)
        nk = 0
        r2 = radius * radius
        for a in range(n):
            if not alive[a]:
                continue
            keep[nk] = order[a]
            nk += 1
            ya, xa = order[a] // W, order[a] % W
            for b in range(a + 1, n):
                if alive[b]:
                    dy = order[b] // W - ya
                    dx = order[b] % W - xa
                    if dy * dy + dx * dx <= r2:
                        alive[b] = False
        return keep[:nk]

    def nms_nb(frame, threshold, radius):
        W = frame.shape[1]
        flat = frame.ravel()
        idx = np.flatnonzero(flat >= threshold)
        order = idx[np.lexsort((idx, -flat[idx]))]
        return _nms_core(order.astype(np.int64), W, float(radius))

    @njit(cache=True, nogil=True)
    def pivot_nb(T, r, j):
        m, n = T.shape
        piv = T[r, j]
        for k in range(n):
            T[r, k] /= piv
        for i in range(m):
            if i == r:
                continue
            f = T[i, j]
            if f != 0.0:
                for k in range(n):
                    T[i, k] -= f * T[r, k]
                T[i, j] = 0.0
        T[r, j] = 1.0

    @njit(cache=True, nogil=True)
    def enumerate_nb(nb, Aeq, beq, Ale, ble, cost, Wm, nhat, tol):
        best_obj = np.inf
        best_code = -1
        x = np.zeros(nb)
        total = 1 << nb
        for code in range(total):
            for v in range(nb):
                x[v] = (code >> (nb - 1 - v)) & 1
            ok = True
            for r in range(Aeq.shape[0]):
                s = 0.0
                for v in range(nb):
                    s += Aeq[r, v] * x[v]
                if abs(s - beq[r]) > tol:
                    ok = False
                    break
            if not ok:
                continue
            for r in range(Ale.shape[0]):
                s = 0.0
                for v in range(nb):
                    s += Ale[r, v] * x[v]
                if s - ble[r] > tol:
                    ok = False
                    break
            if not ok:
                continue
            obj = 0.0
            for v in range(nb):
                obj += cost[v] * x[v]
            for k in range(Wm.shape[0]):
                s = 0.0
                for v in range(nb):
                    s += Wm[k, v] * x[v]
                obj += abs(s - nhat[k])
            if obj < best_obj - 1e-12:
                best_obj = obj
                best_code = code
        return best_code, best_obj, best_code >= 0

    @njit(cache=True, nogil=True)
    def block_match_nb(cur, nxt, x, y, hw, hh, search):
        H, W = cur.shape
        ya, yb = max(0, y - hh), min(H - 1, y + hh)
        xa, xb = max(0, x - hw), min(W - 1, x + hw)
        best = np.inf
        bdx = 0
        bdy = 0
        for dy in range(-search, search + 1):
            for dx in range(-search, search + 1):
                if dx * dx + dy * dy > search * search:
                    continue
                if ya + dy < 0 or yb + dy > H - 1 or xa + dx < 0 or xb + dx > W - 1:
                    continue
                ssd = 0.0
                for yy in range(ya, yb + 1):
                    for xx in range(xa, xb + 1):
                        d = nxt[yy + dy, xx + dx] - cur[yy, xx]
                        ssd += d * d
                if ssd < best - 1e-15 or (abs(ssd - best) <= 1e-15 and dx * dx + dy * dy < bdx * bdx + bdy * bdy):
                    best = ssd
                    bdx = dx
                    bdy = dy
        return bdx, bdy

    render_points = render_points_nb
    rect_sums = rect_sums_nb
    nms = nms_nb
    pivot = pivot_nb
    enumerate_binaries = enumerate_nb
    block_match = block_match_nb
else:
    render_points = render_points_np
    rect_sums = rect_sums_np
    nms = nms_np
    pivot = pivot_np
    enumerate_binaries = enumerate_np
    block_match = block_match_np
