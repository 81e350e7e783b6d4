"""CPLEX-style LP text format: writer and a parser for the subset we emit.

The writer prints coefficients with ``repr`` so a parse/export cycle is
exact; empty sections are omitted. The objective names every variable
(zero coefficients included) so a re-import keeps the column order.
Integer variables with ``[0, 1]`` bounds go to ``Binaries``, other integers
to ``Generals``.
"""
from __future__ import annotations

import math
import re

import numpy as np
from scipy import sparse

from .lp import LinearProgram

__all__ = ["export_lp_text", "parse_lp_text", "LPFormatError"]

_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.]*$")
_SENSE_OUT = {"<": "<=", ">": ">=", "=": "="}


class LPFormatError(ValueError):
    pass


def _num(v: float) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def _expr(cols, vals, names, keep_zeros: bool = False) -> str:
    parts = []
    for j, v in zip(cols, vals):
        if v == 0 and not keep_zeros:
            continue
        sign = "-" if v < 0 else "+"
        mag = abs(v)
        term = names[j] if mag == 1 else f"{_num(mag)} {names[j]}"
        if v == 0:
            sign = "+"
        parts.append(f"{sign} {term}")
    if not parts:
        return "0"
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def export_lp_text(lp: LinearProgram) -> str:
    """Render ``lp`` as LP-format text (one constraint per line)."""
    names = list(lp.var_names)
    rows = list(lp.row_names)
    for kind, items in (("variable", names), ("row", rows)):
        seen = set()
        for nm in items:
            if not _NAME_RE.match(nm):
                raise LPFormatError(f"illegal {kind} name {nm!r}")
            if nm in seen:
                raise LPFormatError(f"duplicate {kind} name {nm!r}")
            seen.add(nm)
    if set(names) & set(rows) & {"obj"}:
        raise LPFormatError("name 'obj' is reserved")
    out = ["Maximize" if lp.sense == "max" else "Minimize"]
    # every variable appears in the objective, in index order, so a re-import keeps the column order
    obj = _expr(range(len(names)), lp.c, names, keep_zeros=True)
    if lp.obj_offset:
        obj += f" + {_num(lp.obj_offset)}" if lp.obj_offset > 0 else f" - {_num(-lp.obj_offset)}"
    out.append(f" obj: {obj}")
    A = lp.A.tocsr().sorted_indices()
    if A.shape[0]:
        out.append("Subject To")
        for i in range(A.shape[0]):
            a, b = A.indptr[i], A.indptr[i + 1]
            out.append(f" {rows[i]}: {_expr(A.indices[a:b], A.data[a:b], names)} {_SENSE_OUT[lp.senses[i]]} {_num(lp.rhs[i])}")
    bounds = []
    binaries, generals = [], []
    for j, nm in enumerate(names):
        lo, hi = lp.lb[j], lp.ub[j]
        if lp.integer[j]:
            if lo == 0 and hi == 1:
                binaries.append(nm)
                continue
            generals.append(nm)
        if lo == 0 and math.isinf(hi):
            continue
        if math.isinf(lo) and math.isinf(hi):
            bounds.append(f" {nm} free")
        elif lo == hi:
            bounds.append(f" {nm} = {_num(lo)}")
        elif lo == 0:
            bounds.append(f" {nm} <= {_num(hi)}")
        else:
            bounds.append(f" {_num(lo)} <= {nm} <= {_num(hi)}")
    if bounds:
        out.append("Bounds")
        out.extend(bounds)
    if generals:
        out.append("Generals")
        out.extend(f" {nm}" for nm in generals)
    if binaries:
        out.append("Binaries")
        out.extend(f" {nm}" for nm in binaries)
    out.append("End")
    return "\n".join(out) + "\n"


_TERM_RE = re.compile(r"([+-])?\s*((?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)?\s*([A-Za-z_][A-Za-z0-9_.]*)?")


def _parse_expr(text: str):
    """Return (list of (name, coef), constant)."""
    terms, const = [], 0.0
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _TERM_RE.match(text, pos)
        if not m or m.end() == pos:
            raise LPFormatError(f"cannot parse expression near {text[pos:pos + 20]!r}")
        sign = -1.0 if m.group(1) == "-" else 1.0
        coef = float(m.group(2)) if m.group(2) else 1.0
        if m.group(3):
            terms.append((m.group(3), sign * coef))
        elif m.group(2):
            const += sign * coef
        pos = m.end()
        while pos < len(text) and text[pos] == " ":
            pos += 1
    return terms, const


def _parse_num(tok: str) -> float:
    t = tok.strip().lower()
    if t in ("inf", "+inf", "infinity", "+infinity"):
        return math.inf
    if t in ("-inf", "-infinity"):
        return -math.inf
    return float(t)


def parse_lp_text(text: str) -> LinearProgram:
    """Parse LP text written by :func:`export_lp_text` back into a program."""
    section = None
    sense = None
    obj_terms: list = []
    offset = 0.0
    rows: list[tuple[str, list, str, float]] = []
    var_index: dict[str, int] = {}
    bounds: dict[str, list[float]] = {}
    integers: dict[str, str] = {}

    def var(nm: str) -> int:
        if nm not in var_index:
            var_index[nm] = len(var_index)
        return var_index[nm]

    for raw in text.splitlines():
        line = raw.split("\\", 1)[0].strip()
        if not line:
            continue
        low = line.lower()
        if low in ("maximize", "maximise", "max"):
            section, sense = "obj", "max"
            continue
        if low in ("minimize", "minimise", "min"):
            section, sense = "obj", "min"
            continue
        if low in ("subject to", "such that", "st", "s.t."):
            section = "rows"
            continue
        if low in ("bounds", "bound"):
            section = "bounds"
            continue
        if low in ("binaries", "binary", "bin"):
            section = "bin"
            continue
        if low in ("generals", "general", "gen"):
            section = "gen"
            continue
        if low == "end":
            break
        if section == "obj":
            body = line.split(":", 1)[1] if ":" in line else line
            terms, const = _parse_expr(body)
            obj_terms += terms
            offset += const
            for nm, _ in terms:
                var(nm)
        elif section == "rows":
            name, body = line.split(":", 1)
            m = re.match(r"(.*?)(<=|>=|=<|=>|=|<|>)\s*(\S+)\s*$", body)
            if not m:
                raise LPFormatError(f"bad constraint {line!r}")
            terms, const = _parse_expr(m.group(1))
            op = m.group(2)
            s = "<" if op in ("<=", "=<", "<") else ">" if op in (">=", "=>", ">") else "="
            rows.append((name.strip(), terms, s, _parse_num(m.group(3)) - const))
            for nm, _ in terms:
                var(nm)
        elif section == "bounds":
            toks = line.split()
            if len(toks) == 2 and toks[1].lower() == "free":
                bounds[toks[0]] = [-math.inf, math.inf]
                var(toks[0])
            elif len(toks) == 5:
                bounds[toks[2]] = [_parse_num(toks[0]), _parse_num(toks[4])]
                var(toks[2])
            elif len(toks) == 3:
                nm, op, val = toks
                lo, hi = bounds.get(nm, [0.0, math.inf])
                v = _parse_num(val)
                if op == "=":
                    lo = hi = v
                elif op in ("<=", "<"):
                    hi = v
                else:
                    lo = v
                bounds[nm] = [lo, hi]
                var(nm)
            else:
                raise LPFormatError(f"bad bound {line!r}")
        elif section in ("bin", "gen"):
            for nm in line.split():
                integers[nm] = section
                var(nm)
        else:
            raise LPFormatError(f"content outside a section: {line!r}")
    if sense is None:
        raise LPFormatError("missing objective section")
    n = len(var_index)
    names = [None] * n
    for nm, j in var_index.items():
        names[j] = nm
    c = np.zeros(n)
    for nm, v in obj_terms:
        c[var_index[nm]] += v
    lb, ub = np.zeros(n), np.full(n, math.inf)
    integer = np.zeros(n, bool)
    for nm, kind in integers.items():
        j = var_index[nm]
        integer[j] = True
        if kind == "bin":
            lb[j], ub[j] = 0.0, 1.0
    for nm, (lo, hi) in bounds.items():
        j = var_index[nm]
        lb[j], ub[j] = lo, hi
    ri, ci, vals = [], [], []
    for i, (_, terms, _, _) in enumerate(rows):
        for nm, v in terms:
            ri.append(i)
            ci.append(var_index[nm])
            vals.append(v)
    A = sparse.csr_matrix((vals, (ri, ci)), shape=(len(rows), n))
    A.sum_duplicates()
    return LinearProgram(
        A,
        [r[2] for r in rows],
        [r[3] for r in rows],
        lb,
        ub,
        c,
        sense,
        integer,
        names,
        [r[0] for r in rows],
        offset,
    )
