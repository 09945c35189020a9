"""Small dense convex QP solver, primal active-set flavor.

Solves ``min 1/2 w^T P w + q^T w  s.t.  G w <= h`` for symmetric positive
(semi)definite ``P`` at the sizes this package needs (tens of variables and
constraints). Every solution ships with its KKT residuals so callers can
assert optimality instead of trusting the iteration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class QpError(RuntimeError):
    pass


@dataclass
class QpResult:
    w: np.ndarray
    value: float
    active: list[int]
    multipliers: np.ndarray
    kkt_residual: float
    iterations: int


def _kkt_residual(P, q, G, h, w, lam) -> float:
    """max of stationarity, primal feasibility and complementarity violations."""
    stat = np.abs(P @ w + q + (G.T @ lam if G.size else 0.0)).max(initial=0.0)
    feas = float(np.maximum(G @ w - h, 0.0).max(initial=0.0)) if G.size else 0.0
    comp = float(np.abs(lam * (G @ w - h)).max(initial=0.0)) if G.size else 0.0
    dual = float(np.maximum(-lam, 0.0).max(initial=0.0)) if lam.size else 0.0
    return max(stat, feas, comp, dual)


def solve_qp(P, q, G=None, h=None, w0=None, max_iter: int = 400, tol: float = 1e-10) -> QpResult:
    """Primal active-set iteration from a feasible starting point (default:
    the origin, which must then satisfy ``h >= 0``)."""
    P = np.asarray(P, dtype=float)
    q = np.asarray(q, dtype=float)
    n = q.size
    if G is None or len(G) == 0:
        w = np.linalg.solve(P, -q)
        return QpResult(w, float(0.5 * w @ P @ w + q @ w), [], np.empty(0), _kkt_residual(P, q, np.empty((0, n)), np.empty(0), w, np.empty(0)), 0)
    G = np.asarray(G, dtype=float)
    h = np.asarray(h, dtype=float)
    w = np.zeros(n) if w0 is None else np.asarray(w0, dtype=float).copy()
    slack0 = G @ w - h
    if slack0.max(initial=0.0) > 1e-9:
        raise QpError(f"starting point infeasible by {slack0.max():.3e}")

    active: list[int] = []
    lam = np.zeros(0)
    for it in range(1, max_iter + 1):
        Ga = G[active]
        k = len(active)
        kkt = np.zeros((n + k, n + k))
        kkt[:n, :n] = P
        if k:
            kkt[:n, n:] = Ga.T
            kkt[n:, :n] = Ga
        rhs = np.concatenate([-(P @ w + q), np.zeros(k)])
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
        p = sol[:n]
        lam = sol[n:]

        if np.abs(p).max(initial=0.0) <= tol * (1.0 + np.abs(w).max(initial=0.0)):
            if k == 0 or lam.min(initial=0.0) >= -tol:
                lam_full = np.zeros(G.shape[0])
                lam_full[active] = np.maximum(lam, 0.0)
                return QpResult(
                    w,
                    float(0.5 * w @ P @ w + q @ w),
                    sorted(active),
                    lam_full,
                    _kkt_residual(P, q, G, h, w, lam_full),
                    it,
                )
            drop = active[int(np.argmin(lam))]
            active.remove(drop)
            continue

        # step length limited by the first inactive constraint that would be crossed
        alpha = 1.0
        blocking = -1
        for i in range(G.shape[0]):
            if i in active:
                continue
            gi_p = float(G[i] @ p)
            if gi_p > tol:
                ai = float(h[i] - G[i] @ w) / gi_p
                if ai < alpha - 1e-15:
                    alpha = max(ai, 0.0)
                    blocking = i
        w = w + alpha * p
        if blocking >= 0:
            # keep the working set linearly independent
            trial = G[active + [blocking]]
            if np.linalg.matrix_rank(trial, tol=1e-10) == len(active) + 1:
                active.append(blocking)
            elif alpha == 0.0:
                raise QpError("degenerate working set: zero step onto a dependent constraint")
    raise QpError(f"active-set iteration did not converge in {max_iter} steps")
