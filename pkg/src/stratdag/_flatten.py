"""Flat array views of additive SCMs and polynomial mechanisms, shared by the
compiled and pure-numpy best-response backends."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mechanisms import IsolationMechanism, LinearMechanism


@dataclass
class FlatScm:
    """CSR-style encoding of an additive SCM.

    Node ``j`` has parents ``par_idx[par_ptr[j]:par_ptr[j+1]]``; edge ``e``
    carries polynomial coefficients ``coef[coef_ptr[e]:coef_ptr[e+1]]`` for
    powers ``1..deg``. ``ch_*`` arrays are the transposed adjacency used for
    reverse-topological gradient accumulation (``ch_edge`` maps back into the
    coefficient pool).
    """

    n: int
    topo: np.ndarray
    const: np.ndarray
    par_ptr: np.ndarray
    par_idx: np.ndarray
    coef_ptr: np.ndarray
    coef: np.ndarray
    ch_ptr: np.ndarray
    ch_idx: np.ndarray
    ch_edge: np.ndarray


def flatten_scm(scm) -> FlatScm:
    additive = scm.to_additive() if hasattr(scm, "to_additive") and scm.is_linear else scm
    n = additive.n
    topo = np.asarray(additive.topological_order(), dtype=np.int64)
    const = np.array([f.const for f in additive.functions], dtype=float)
    par_ptr = np.zeros(n + 2, dtype=np.int64)
    par_idx, coef_ptr, coef = [], [0], []
    edges_by_parent: dict[int, list[tuple[int, int]]] = {j: [] for j in range(n + 1)}
    eid = 0
    for j, f in enumerate(additive.functions):
        for p, cs in zip(f.parents, f.coeffs):
            par_idx.append(p)
            coef.extend(cs)
            coef_ptr.append(len(coef))
            edges_by_parent[p].append((j, eid))
            eid += 1
        par_ptr[j + 1] = len(par_idx)
    ch_ptr = np.zeros(n + 2, dtype=np.int64)
    ch_idx, ch_edge = [], []
    for p in range(n + 1):
        for c, e in edges_by_parent[p]:
            ch_idx.append(c)
            ch_edge.append(e)
        ch_ptr[p + 1] = len(ch_idx)
    return FlatScm(
        n=n,
        topo=topo,
        const=const,
        par_ptr=par_ptr,
        par_idx=np.asarray(par_idx, dtype=np.int64),
        coef_ptr=np.asarray(coef_ptr, dtype=np.int64),
        coef=np.asarray(coef, dtype=float),
        ch_ptr=ch_ptr,
        ch_idx=np.asarray(ch_idx, dtype=np.int64),
        ch_edge=np.asarray(ch_edge, dtype=np.int64),
    )


@dataclass
class FlatMech:
    """Score ``lin . x + sum_j q_j(x_j)`` with per-node univariate ``q_j``."""

    lin: np.ndarray
    poly_node: np.ndarray
    poly_ptr: np.ndarray
    poly_coef: np.ndarray


def flatten_mechanism(mech, n: int) -> FlatMech | None:
    """Mechanisms expressible as affine + per-node polynomials; ``None`` for
    custom callables (those take the closure path)."""
    if isinstance(mech, LinearMechanism):
        return FlatMech(mech.weights(), np.empty(0, np.int64), np.zeros(1, np.int64), np.empty(0))
    if isinstance(mech, IsolationMechanism):
        lin = np.zeros(n + 1)
        lin[mech.target] = 1.0
        nodes, ptr, coefs = [], [0], []
        model = mech.model
        if model is not None:
            if getattr(model, "family", None) == "linear":
                for node, cs in zip(model.regressors, model.coeffs):
                    lin[node] -= cs[0]
            else:
                for node, cs in zip(model.regressors, model.coeffs):
                    nodes.append(node)
                    coefs.extend(-c for c in cs)
                    ptr.append(len(coefs))
        return FlatMech(
            lin,
            np.asarray(nodes, dtype=np.int64),
            np.asarray(ptr, dtype=np.int64),
            np.asarray(coefs, dtype=float),
        )
    return None
