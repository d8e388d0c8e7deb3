"""CPLEX LP text export."""

from __future__ import annotations

import numpy as np

from ..model import EQ, MilpModel

_MAX_LINE = 200


def _num(v: float) -> str:
    v = float(v)
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _terms(coefs, names):
    out = []
    for a, name in zip(coefs, names):
        if a == 0:
            continue
        sign = "-" if a < 0 else "+"
        mag = abs(a)
        out.append(f"{sign} {name}" if mag == 1 else f"{sign} {_num(mag)} {name}")
    return out


def _wrap(head, terms, tail=""):
    lines = []
    cur = head
    for tok in terms:
        if len(cur) + len(tok) + 1 > _MAX_LINE:
            lines.append(cur)
            cur = "   "
        cur += " " + tok
    if tail:
        if len(cur) + len(tail) + 1 > _MAX_LINE:
            lines.append(cur)
            cur = "   "
        cur += " " + tail
    lines.append(cur)
    return lines


def lp_text(model: MilpModel) -> str:
    names = model.var_names
    lines = ["\\ tracking-by-counting model", "Minimize"]
    obj_terms = _terms(model.c, names)
    lines += _wrap(" obj:", obj_terms or ["0 " + names[0]] if names else ["0"])
    lines.append("Subject To")
    A = model.A.tocsr()
    for r in range(model.n_rows):
        lo, hi = A.indptr[r], A.indptr[r + 1]
        terms = _terms(A.data[lo:hi], [names[j] for j in A.indices[lo:hi]])
        if not terms:
            continue  # 0 = 0, e.g. the balance row of an empty graph
        op = "=" if model.sense[r] == EQ else "<="
        lines += _wrap(f" {model.row_names[r]}:", terms, f"{op} {_num(model.rhs[r])}")
    lines.append("Bounds")
    for j in np.flatnonzero(~model.binary):
        ub = model.ub[j]
        hi = "+inf" if not np.isfinite(ub) else _num(ub)
        lines.append(f" {_num(model.lb[j])} <= {names[j]} <= {hi}")
    for j in np.flatnonzero(model.binary & (model.lb == model.ub)):
        lines.append(f" {names[j]} = {_num(model.lb[j])}")
    bins = [names[j] for j in np.flatnonzero(model.binary)]
    if bins:
        lines.append("Binaries")
        lines += _wrap("", bins)
    lines.append("End")
    return "\n".join(lines) + "\n"


def export_lp(model: MilpModel, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(lp_text(model))
