"""Exhaustive enumeration oracle for small models."""

from __future__ import annotations

import time

import numpy as np

from .. import _kernels
from ..model import EQ, MilpModel
from .bnb import Solution

MAX_BINARIES = 24


class ModelTooLargeError(ValueError):
    pass


def brute_force(model: MilpModel) -> Solution:
    """Enumerate every binary assignment; ``z`` takes its tight value.

    Among equal objectives (to 1e-12) the lexicographically smallest
    assignment, in model variable order, wins.
    """
    t0 = time.perf_counter()
    bins = np.flatnonzero(model.binary)
    nb = bins.size
    if nb > MAX_BINARIES:
        raise ModelTooLargeError(f"{nb} binaries exceeds the brute-force limit of {MAX_BINARIES}")
    if not np.array_equal(np.sort(np.concatenate([bins, model.z_var])), np.arange(model.n_vars)):
        raise ValueError("brute force expects only binaries and window z variables")
    A = model.A.toarray()
    window_rows = np.zeros(model.n_rows, dtype=bool)
    window_rows[model.window_rows.ravel()] = True
    eq = (model.sense == EQ) & ~window_rows
    le = (model.sense != EQ) & ~window_rows
    Aeq = np.ascontiguousarray(A[np.ix_(eq, bins)])
    Ale = np.ascontiguousarray(A[np.ix_(le, bins)])
    # binaries fixed by their bounds become extra equality rows
    fixed = np.flatnonzero(model.lb[bins] == model.ub[bins])
    if fixed.size:
        F = np.zeros((fixed.size, nb))
        F[np.arange(fixed.size), fixed] = 1.0
        Aeq = np.vstack([Aeq, F])
        beq = np.concatenate([model.rhs[eq], model.lb[bins][fixed]])
    else:
        beq = model.rhs[eq]
    pos = {int(v): k for k, v in enumerate(bins)}
    Wm = np.zeros((model.z_var.size, nb))
    if model.z_var.size and model.n_nodes:
        M = model.membership.toarray()
        cols = [pos[int(v)] for v in model.node_var]
        Wm[:, cols] = M
    zc = model.c[model.z_var]
    if model.z_var.size and not np.all(zc == 1.0):
        Wm *= zc[:, None]
        nhat = model.n_hat * zc
    else:
        nhat = model.n_hat.copy()
    code, obj, found = _kernels.enumerate_binaries(
        nb, Aeq, np.ascontiguousarray(beq, dtype=np.float64), Ale, np.ascontiguousarray(model.rhs[le]),
        np.ascontiguousarray(model.c[bins]), np.ascontiguousarray(Wm), np.ascontiguousarray(nhat), 1e-9)
    x = np.zeros(model.n_vars)
    if found:
        for k in range(nb):
            x[bins[k]] = (code >> (nb - 1 - k)) & 1
        status = "optimal"
    else:
        status = "infeasible"
    x = model.tight_z(x)
    obj = model.objective(x) if found else np.inf
    return Solution(x, obj, obj, 0.0, status, 0, time.perf_counter() - t0, np.nan, 0, list(model.var_names))
