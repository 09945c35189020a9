"""Pure-numpy best-response engine: batched projected-gradient ascent on the
cost-budget set for every agent at once.

The compiled backend (``_respond_c``) replaces only the hot multi-start loop
(:func:`py_loop`); start generation, whitening and the stationarity residual
live here and are shared by both backends. This module also hosts the paths
the kernel does not cover (custom mechanisms, general power costs).
"""

from __future__ import annotations

import numpy as np

from ._flatten import FlatMech, FlatScm

GROW = 1.3
SHRINK = 0.5
STEP_FLOOR = 1e-12
ACCEPT_RTOL = 1e-14
STALL_LIMIT = 12  # consecutive rejections before an agent is frozen


def _poly_val(cs: np.ndarray, x: np.ndarray) -> np.ndarray:
    acc = np.zeros_like(x)
    for c in cs[::-1]:
        acc = (acc + c) * x
    return acc


def _poly_deriv(cs: np.ndarray, x: np.ndarray) -> np.ndarray:
    acc = np.zeros_like(x)
    for k in range(len(cs) - 1, -1, -1):
        acc = acc * x + (k + 1) * cs[k]
    return acc


def forward_eval(fs: FlatScm, u: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Evaluate all nodes in topological order; ``a`` broadcasts over rows."""
    u = np.atleast_2d(u)
    a = np.atleast_2d(a)
    x = np.empty_like(u)
    for j in fs.topo:
        acc = fs.const[j] + u[:, j] + (a[:, j] if a.shape[0] > 1 else a[0, j])
        for e in range(fs.par_ptr[j], fs.par_ptr[j + 1]):
            p = fs.par_idx[e]
            acc = acc + _poly_val(fs.coef[fs.coef_ptr[e] : fs.coef_ptr[e + 1]], x[:, p])
        x[:, j] = acc
    return x


def score_and_grad(fm: FlatMech, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    s = x @ fm.lin
    g = np.broadcast_to(fm.lin, x.shape).copy()
    for k, j in enumerate(fm.poly_node):
        cs = fm.poly_coef[fm.poly_ptr[k] : fm.poly_ptr[k + 1]]
        s = s + _poly_val(cs, x[:, j])
        g[:, j] += _poly_deriv(cs, x[:, j])
    return s, g


def accumulate_grad(fs: FlatScm, x: np.ndarray, gx: np.ndarray) -> np.ndarray:
    """Pull the score gradient back through the structural equations,
    ``z_j = gx_j + sum_{c: j in pa(c)} g_c'(x_j) z_c`` in reverse topological
    order; ``z`` is then the gradient of the score with respect to ``a``."""
    z = gx.copy()
    for j in fs.topo[::-1]:
        for t in range(fs.ch_ptr[j], fs.ch_ptr[j + 1]):
            c = fs.ch_idx[t]
            e = fs.ch_edge[t]
            cs = fs.coef[fs.coef_ptr[e] : fs.coef_ptr[e + 1]]
            z[:, j] += _poly_deriv(cs, x[:, j]) * z[:, c]
    return z


def project_l1(z: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection of each row onto the L1 ball of the given radius."""
    absz = np.abs(z)
    over = absz.sum(axis=1) > radius
    if not over.any():
        return z
    out = z.copy()
    zo = absz[over]
    srt = np.sort(zo, axis=1)[:, ::-1]
    csum = np.cumsum(srt, axis=1)
    k = np.arange(1, zo.shape[1] + 1)
    cond = srt - (csum - radius) / k > 0
    rho = cond.shape[1] - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = (csum[np.arange(len(rho)), rho] - radius) / (rho + 1)
    out[over] = np.sign(z[over]) * np.maximum(absz[over] - theta[:, None], 0.0)
    return out


def project_l2(y: np.ndarray, radius: float) -> np.ndarray:
    nrm = np.linalg.norm(y, axis=1)
    scale = np.where(nrm > radius, radius / np.maximum(nrm, 1e-300), 1.0)
    return y * scale[:, None]


class Problem:
    """One best-response program, restricted to the mutable feature
    coordinates. ``u`` rows are agents."""

    def __init__(self, fs: FlatScm, fm, u, mutable, custom_mech=None):
        self.fs = fs
        self.fm = fm
        self.u = np.atleast_2d(u)
        self.m = self.u.shape[0]
        self.n = fs.n
        self.mut_idx = np.nonzero(mutable)[0]
        self.custom = custom_mech

    def expand(self, a_mut: np.ndarray) -> np.ndarray:
        a = np.zeros((a_mut.shape[0], self.n + 1))
        a[:, self.mut_idx] = a_mut
        return a

    def obj_and_grad(self, a_mut: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        x = forward_eval(self.fs, self.u, self.expand(a_mut))
        if self.custom is not None:
            s = self.custom.score(x)
            gx = self.custom.grad(x)
        else:
            s, gx = score_and_grad(self.fm, x)
        z = accumulate_grad(self.fs, x, gx)
        return s, z[:, self.mut_idx]

    def objective_only(self, a_mut: np.ndarray) -> np.ndarray:
        x = forward_eval(self.fs, self.u, self.expand(a_mut))
        if self.custom is not None:
            return np.asarray(self.custom.score(x), dtype=float)
        return score_and_grad(self.fm, x)[0]


def py_loop(problem: Problem, kind: str, whiten, radius: float, starts, max_iter: int):
    """Multi-start projected-gradient ascent in whitened coordinates
    (``y = whiten * a``). Accept/grow, reject/halve per agent; an agent that
    rejects STALL_LIMIT times in a row is frozen."""
    project = project_l2 if kind == "l2" else project_l1
    m = problem.m
    best_obj = np.full(m, -np.inf)
    best_y = np.zeros((m, len(problem.mut_idx)))
    for y0 in starts:
        y = project(np.array(y0, dtype=float), radius)
        obj, g = problem.obj_and_grad(y / whiten)
        step = np.full(m, radius)
        stall = np.zeros(m, dtype=np.int64)
        for _ in range(max_iter):
            gw = g / whiten
            nrm = np.linalg.norm(gw, axis=1)
            d = gw / np.maximum(nrm, 1e-300)[:, None]
            cand = project(y + step[:, None] * d, radius)
            obj_new, g_new = problem.obj_and_grad(cand / whiten)
            live = stall < STALL_LIMIT
            better = live & (obj_new > obj + ACCEPT_RTOL * (1.0 + np.abs(obj)))
            if better.any():
                y[better] = cand[better]
                obj[better] = obj_new[better]
                g[better] = g_new[better]
            step = np.where(better, step * GROW, step * SHRINK)
            stall = np.where(better, 0, stall + 1)
            if (stall >= STALL_LIMIT).all() or (step < radius * STEP_FLOOR).all():
                break
        replace = obj > best_obj
        best_y[replace] = y[replace]
        best_obj = np.maximum(best_obj, obj)
    return best_y, best_obj


def make_starts(problem: Problem, kind: str, whiten, radius: float, n_starts: int, seed):
    """Deterministic start set: the budget-surface point along the initial
    ascent direction (exactly the linearized best response), then the origin,
    then seeded random surface points."""
    m, nm = problem.m, len(problem.mut_idx)
    _, g0 = problem.obj_and_grad(np.zeros((m, nm)))
    gw = g0 / whiten
    if kind == "l2":
        s0 = gw * (radius / np.maximum(np.linalg.norm(gw, axis=1), 1e-300))[:, None]
    else:
        s0 = np.zeros_like(gw)
        j = np.argmax(np.abs(gw), axis=1)
        rows = np.arange(m)
        s0[rows, j] = np.sign(gw[rows, j]) * radius
    starts = [s0]
    if n_starts > 1:
        starts.append(np.zeros((m, nm)))
    rng = np.random.default_rng(seed)
    for _ in range(max(0, n_starts - 2)):
        d = rng.standard_normal((m, nm))
        if kind == "l1":
            d = np.sign(d) * rng.dirichlet(np.ones(nm), size=m) * radius
        else:
            d *= radius / np.maximum(np.linalg.norm(d, axis=1), 1e-300)[:, None]
        starts.append(d)
    return starts


def stationarity_residual(problem: Problem, y, kind: str, whiten, radius: float) -> np.ndarray:
    """Norm of the projected-gradient displacement per unit step; zero exactly
    at a first-order stationary point of the constrained program."""
    project = project_l2 if kind == "l2" else project_l1
    t = 1e-7 * radius
    _, g = problem.obj_and_grad(y / whiten)
    moved = project(y + t * (g / whiten), radius)
    return np.linalg.norm(moved - y, axis=1) / t


def solve(problem: Problem, kind: str, whiten, radius: float, n_starts, max_iter, seed, loop=py_loop, want_residual=True):
    starts = make_starts(problem, kind, whiten, radius, n_starts, seed)
    y, obj = loop(problem, kind, whiten, radius, starts, max_iter)
    resid = stationarity_residual(problem, y, kind, whiten, radius) if want_residual else np.zeros(problem.m)
    a = problem.expand(y / whiten)
    return a, obj, resid


def solve_power(problem: Problem, cost, x_natural, budget: float, n_starts, max_iter, seed):
    """General separable power costs: gradient steps in intervention
    coordinates with a radial retraction onto the feasible set."""
    mut = problem.mut_idx

    def cost_of(a_mut):
        a = np.zeros((a_mut.shape[0], cost.n))
        a[:, mut] = a_mut
        return cost.value(a, x_natural)

    def retract(a_mut, _radius=None):
        c = cost_of(a_mut)
        over = c > budget
        if not over.any():
            return a_mut
        out = np.array(a_mut, dtype=float)
        lo = np.zeros(int(over.sum()))
        hi = np.ones(int(over.sum()))
        sub = out[over]
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            cm = cost_of(sub * mid[:, None])
            lo = np.where(cm < budget, mid, lo)
            hi = np.where(cm >= budget, mid, hi)
        out[over] = sub * (0.5 * (lo + hi))[:, None]
        return out

    radius = float(np.mean([cost.node_root(int(i), budget) for i in mut]))
    whiten = np.ones(len(mut))
    m = problem.m
    starts = [np.zeros((m, len(mut)))]
    if n_starts > 1:
        _, g0 = problem.obj_and_grad(starts[0])
        d = g0 / np.maximum(np.linalg.norm(g0, axis=1), 1e-300)[:, None]
        starts.append(retract(d * radius))
    rng = np.random.default_rng(seed)
    for _ in range(max(0, n_starts - 2)):
        d = rng.standard_normal((m, len(mut)))
        d *= radius / np.maximum(np.linalg.norm(d, axis=1), 1e-300)[:, None]
        starts.append(retract(d))

    best_obj = np.full(m, -np.inf)
    best_a = np.zeros((m, len(mut)))
    for a0 in starts:
        a = retract(np.array(a0, dtype=float))
        obj, g = problem.obj_and_grad(a)
        step = np.full(m, radius)
        for _ in range(max_iter):
            nrm = np.linalg.norm(g, axis=1)
            d = g / np.maximum(nrm, 1e-300)[:, None]
            cand = retract(a + step[:, None] * d)
            obj_new, g_new = problem.obj_and_grad(cand)
            better = obj_new > obj + ACCEPT_RTOL * (1.0 + np.abs(obj))
            if better.any():
                a[better] = cand[better]
                obj[better] = obj_new[better]
                g[better] = g_new[better]
            step = np.where(better, step * GROW, step * SHRINK)
            if (step < radius * STEP_FLOOR).all():
                break
        replace = obj > best_obj
        best_a[replace] = a[replace]
        best_obj = np.maximum(best_obj, obj)

    # radial retraction moves boundary points tangentially even at a KKT
    # point, so measure stationarity as the ascent rate still available
    t = 1e-7 * radius
    obj0, g = problem.obj_and_grad(best_a)
    moved = retract(best_a + t * g)
    obj1 = problem.objective_only(moved)
    resid = np.maximum(obj1 - obj0, 0.0) / t
    return problem.expand(best_a), best_obj, resid
