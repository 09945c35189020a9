"""Backend selection for the batched best-response loop.

The compiled extension is used when it imported cleanly and
``STRATDAG_NO_EXT`` is unset; otherwise the pure-numpy loop runs. Both
implement identical update rules, so results agree to floating-point noise.
"""

from __future__ import annotations

import os

import numpy as np

from . import _respond_py as eng

_ext = None
if not os.environ.get("STRATDAG_NO_EXT"):
    try:
        from . import _respond_c as _ext
    except ImportError:
        _ext = None


def backend_name() -> str:
    return "compiled" if _ext is not None else "python"


def have_extension() -> bool:
    return _ext is not None


def _c_loop(problem, kind, whiten, radius, starts, max_iter):
    fs, fm = problem.fs, problem.fm
    m, nm = problem.m, len(problem.mut_idx)
    if fs.n + 1 > 63:
        return eng.py_loop(problem, kind, whiten, radius, starts, max_iter)
    whiten_arr = np.ascontiguousarray(np.broadcast_to(np.atleast_2d(whiten), (m, nm)), dtype=float)
    starts_arr = np.ascontiguousarray(np.stack([np.broadcast_to(s, (m, nm)) for s in starts]), dtype=float)
    y = np.empty((m, nm))
    obj = np.empty(m)
    _ext.pgd_loop(
        int(kind == "l1"),
        fs.topo, fs.const, fs.par_ptr, fs.par_idx, fs.coef_ptr, fs.coef,
        fs.ch_ptr, fs.ch_idx, fs.ch_edge,
        fm.lin, fm.poly_node, fm.poly_ptr, fm.poly_coef,
        np.ascontiguousarray(problem.u),
        problem.mut_idx.astype(np.int64),
        whiten_arr, float(radius), starts_arr, int(max_iter),
        y, obj,
    )
    return y, obj


def batch_loop(pure: bool = False):
    if pure or _ext is None:
        return eng.py_loop
    return _c_loop
