"""SDPA sparse (``.dat-s``) interchange.

An :class:`SdpProblem` maps onto the SDPA *dual* form
``max <F0, Y>  s.t.  <F_r, Y> = c_r,  Y PSD`` with ``F_r = A_r``,
``c_r = b_r`` and ``F0 = -C``. External solvers therefore report the negative
of our optimal value. SDPA has no free variables; ``x`` is split as
``x = x_plus - x_minus`` inside one trailing diagonal block of size
``-2 * n_free``.
"""

from __future__ import annotations

import os
from typing import List, TextIO, Union

import numpy as np

from .problem import SdpProblem


def _fmt(v: float) -> str:
    return repr(float(v) + 0.0)


def export_sdpa(p: SdpProblem, destination: Union[str, os.PathLike, TextIO, None] = None) -> str:
    """Write ``p`` in SDPA sparse format and return the text."""
    nb = p.n_blocks
    sizes = [str(s) for s in p.block_sizes]
    lp = nb + 1 if p.n_free else None
    if p.n_free:
        sizes.append(str(-2 * p.n_free))
    lines = [str(p.m), str(len(sizes)), " ".join(sizes), " ".join(_fmt(v) for v in p.b)]

    def lp_entries(mat, var, val):
        out = []
        for k, v in zip(var, val):
            out.append((mat, lp, k + 1, k + 1, v))
            out.append((mat, lp, p.n_free + k + 1, p.n_free + k + 1, -v))
        return out

    entries = [(0, int(k) + 1, int(i) + 1, int(j) + 1, -v)
               for k, i, j, v in zip(p.c_blk, p.c_i, p.c_j, p.c_val)]
    nz = np.flatnonzero(p.c_free)
    entries += lp_entries(0, nz, -p.c_free[nz])
    for r in range(p.m):
        sel = p.a_row == r
        entries += [(r + 1, int(k) + 1, int(i) + 1, int(j) + 1, v)
                    for k, i, j, v in zip(p.a_blk[sel], p.a_i[sel], p.a_j[sel], p.a_val[sel])]
        fs = p.f_row == r
        entries += lp_entries(r + 1, p.f_var[fs], p.f_val[fs])
    entries.sort(key=lambda e: e[:4])
    lines += [f"{m} {b} {i} {j} {_fmt(v)}" for m, b, i, j, v in entries if v != 0.0]
    text = "\n".join(lines) + "\n"
    if destination is not None:
        if hasattr(destination, "write"):
            destination.write(text)
        else:
            tmp = f"{os.fspath(destination)}.tmp"
            with open(tmp, "w") as fh:
                fh.write(text)
            os.replace(tmp, destination)
    return text


def _tokens(text: str) -> List[str]:
    body = []
    for line in text.splitlines():
        s = line.strip()
        if not s or s[0] in "\"*":
            continue
        body.append(s.translate(str.maketrans("{},()", "     ")))
    return body


def import_sdpa(source: Union[str, os.PathLike, TextIO]) -> SdpProblem:
    """Read the subset of SDPA sparse format written by :func:`export_sdpa`.

    A trailing diagonal block whose entries come in ``(k, v), (n + k, -v)``
    pairs is turned back into free variables; any other diagonal block becomes
    ``1 x 1`` PSD blocks.
    """
    if hasattr(source, "read"):
        text = source.read()
    elif isinstance(source, str) and "\n" in source:
        text = source
    else:
        with open(source) as fh:
            text = fh.read()
    lines = _tokens(text)
    m = int(lines[0].split()[0])
    nblocks = int(lines[1].split()[0])
    sizes = [int(float(t)) for t in lines[2].split()][:nblocks]
    b = np.array([float(t) for t in " ".join(lines[3:]).split()][:m]) if m else np.zeros(0)
    # entries start after the rhs, which may wrap several lines
    rest = " ".join(lines[3:]).split()[m:]
    raw = np.array(rest, dtype=float).reshape(-1, 5) if rest else np.zeros((0, 5))

    lp_blocks = [k for k, s in enumerate(sizes) if s < 0]
    free_block = None
    if lp_blocks and lp_blocks[-1] == len(sizes) - 1 and (-sizes[-1]) % 2 == 0:
        k = len(sizes) - 1
        half = -sizes[-1] // 2
        sel = raw[:, 1] == k + 1
        pos = {(int(r[0]), int(r[2])): r[4] for r in raw[sel]}
        paired = all(
            (idx <= half and pos.get((mat, idx + half)) == -v) or
            (idx > half and pos.get((mat, idx - half)) == -v)
            for (mat, idx), v in pos.items())
        if paired:
            free_block = k

    # map original blocks to new PSD blocks
    new_sizes, where = [], {}
    for k, s in enumerate(sizes):
        if k == free_block:
            continue
        if s > 0:
            where[k] = (len(new_sizes), None)
            new_sizes.append(s)
        else:
            where[k] = (len(new_sizes), -s)
            new_sizes.extend([1] * (-s))
    n_free = -sizes[free_block] // 2 if free_block is not None else 0

    a_row, a_blk, a_i, a_j, a_val = [], [], [], [], []
    c_blk, c_i, c_j, c_val = [], [], [], []
    f_row, f_var, f_val = [], [], []
    c_free = np.zeros(n_free)
    for mat, blk, i, j, v in raw:
        mat, blk, i, j = int(mat), int(blk) - 1, int(i) - 1, int(j) - 1
        if blk == free_block:
            if i >= n_free:
                continue
            if mat == 0:
                c_free[i] = -v
            else:
                f_row.append(mat - 1), f_var.append(i), f_val.append(v)
            continue
        start, lp_size = where[blk]
        if lp_size is not None:
            if i != j:
                raise ValueError("off-diagonal entry in a diagonal block")
            nb, i, j = start + i, 0, 0
        else:
            nb = start
        if mat == 0:
            c_blk.append(nb), c_i.append(i), c_j.append(j), c_val.append(-v)
        else:
            a_row.append(mat - 1), a_blk.append(nb), a_i.append(i), a_j.append(j), a_val.append(v)
    return SdpProblem(tuple(new_sizes), n_free, b, a_row, a_blk, a_i, a_j, a_val,
                      f_row, f_var, f_val, c_blk, c_i, c_j, c_val, c_free)
