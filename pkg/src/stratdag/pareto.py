"""From discovered structure to mechanisms: structural-model identification,
risk/improvement evaluation, the offline tradeoff front, and the linear-cost
exploration + QP pipeline that gets the front without causal knowledge.

Risk conventions: :func:`risk_improvement` (and the offline front built on
it) score a mechanism by the variance of its prediction error on the induced
distribution, which is what the closed-form tradeoff analysis uses. The
QP objective of :func:`min_mse_given_intervention` keeps the full second
moment of the observed deployment-specific distribution, since distinguishing
the induced mean shifts is the whole point there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .agents import shared_best_response
from .costs import CostSpec, SeparableCost
from .graphs import OrientedGraph
from .mechanisms import LinearMechanism
from .observe import InducedDistribution, Registry, fit_conditional, induce, natural_distribution
from .qp import QpResult, solve_qp
from .scm import AdditiveScm, LinearScm, NodeFunction, NoiseSpec

NULLSPACE_RTOL = 1e-9
DEFAULT_LAMBDA_GRID = tuple(np.logspace(-3.0, 3.0, 33))


class ParetoError(RuntimeError):
    pass


@dataclass(frozen=True)
class ParetoPoint:
    w: tuple[float, ...]
    risk: float
    improvement: float
    lam: float | None = None

    def dominates(self, other: "ParetoPoint") -> bool:
        return (
            self.risk <= other.risk
            and self.improvement >= other.improvement
            and (self.risk < other.risk or self.improvement > other.improvement)
        )


@dataclass
class Front:
    points: list[ParetoPoint]

    def __post_init__(self):
        self.points = sorted(self.points, key=lambda p: (p.risk, -p.improvement))

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def validate(self) -> None:
        for p in self.points:
            for q in self.points:
                if q is not p and q.dominates(p):
                    raise ParetoError(f"front contains dominated point {p}")


def pareto_filter(points) -> Front:
    """Exactly the non-dominated subset."""
    points = list(points)
    keep = [p for p in points if not any(q.dominates(p) for q in points)]
    return Front(keep)


# ---------------------------------------------------------------------------
# structural-model identification (conditional fits on the natural law)


def identify_scm(graph: OrientedGraph, d0: InducedDistribution, registry: Registry | None = None):
    """Fit every node's structural function on its discovered parents from the
    natural distribution; exogenous means are normalized to zero (the model is
    identified up to constant shifts) and noise variances are recovered as
    residual variances."""
    if not graph.fully_oriented:
        raise ParetoError("identification needs a fully oriented graph")
    n = graph.n
    registry = registry or Registry.linear(n)
    functions, noises = [], []
    for v in range(n + 1):
        pa = tuple(sorted(graph.parents(v)))
        fam, deg = registry.family_of(v)
        fit = fit_conditional(d0, v, pa, family=fam, degree=deg)
        if d0.exact:
            if pa:
                idx = list(pa)
                sig = d0.cov[np.ix_(idx, idx)]
                svv = d0.cov[v, v]
                resid_var = float(svv - d0.cov[idx, v] @ np.linalg.solve(sig, d0.cov[idx, v]))
            else:
                resid_var = float(d0.cov[v, v])
        else:
            resid = d0.samples[:, v] - fit.predict(d0.samples)
            resid_var = float(resid.var(ddof=1))
        functions.append(NodeFunction(parents=pa, coeffs=fit.coeffs, const=fit.intercept))
        noises.append(NoiseSpec.gaussian(0.0, max(resid_var, 0.0)))
    model = AdditiveScm(n, tuple(functions), tuple(noises))
    return model.to_linear() if registry.all_linear else model


# ---------------------------------------------------------------------------
# risk / improvement of a linear mechanism


def risk_improvement(w, scm, cost: CostSpec, b: float, count: int | None = None, seed=None) -> tuple[float, float]:
    """Prediction-error variance on the induced distribution, and the induced
    mean shift of the outcome. Closed form on linear SCMs with homogeneous
    costs; otherwise evaluated empirically from ``count`` agents."""
    w = np.asarray(w, dtype=float)
    mech = LinearMechanism(tuple(w))
    if isinstance(scm, LinearScm) and cost.is_homogeneous:
        br = shared_best_response(mech, scm, cost, b)
        if br is not None:
            v = w.copy()
            v[scm.n] -= 1.0
            # prediction error as a combination of exogenous noises: stable
            # even when the per-noise contributions cancel to ~0
            rho = scm.B.T @ v
            risk = float((rho * rho) @ scm.noise_vars())
            improvement = float((scm.B @ br.a_star)[scm.n])
            return risk, improvement
    if count is None:
        raise ParetoError("no closed form for this SCM/cost; pass an empirical count")
    seeds = np.random.SeedSequence(seed).spawn(2)
    induced = induce(scm, mech, cost, b, "empirical", count, seeds[0].entropy)
    nat = natural_distribution(scm, "empirical", count, seeds[1].entropy)
    resid = induced.samples @ w - induced.samples[:, scm.n]
    risk = float(resid.var(ddof=1))
    improvement = float(induced.samples[:, scm.n].mean() - nat.samples[:, scm.n].mean())
    return risk, improvement


# ---------------------------------------------------------------------------
# offline tradeoff front (known SCM + quadratic cost, Eq.-style objective)


def _quadratic_c_diag(cost: CostSpec) -> np.ndarray:
    if not (isinstance(cost, SeparableCost) and cost.is_quadratic and cost.is_homogeneous):
        raise ParetoError("the offline front needs a homogeneous quadratic cost")
    return cost.quadratic_c_diag() * cost.scale_values(None)[0]


def offline_front(
    scm: LinearScm,
    cost: CostSpec,
    b: float,
    lambda_grid=None,
    n_starts: int = 16,
    gd_iters: int = 400,
    seed: int = 0,
    skipped: list | None = None,
) -> Front:
    """Minimize ``risk(w) - lambda * improvement(w)`` over linear mechanisms
    for each lambda on the grid by multi-start gradient descent with analytic
    gradients, then keep the non-dominated (risk, improvement) pairs. A
    tradeoff weight whose optimization ends non-finite is skipped and appended
    to ``skipped`` when a list is given."""
    if not isinstance(scm, LinearScm):
        raise ParetoError("the offline front is computed on an identified linear model")
    lambda_grid = DEFAULT_LAMBDA_GRID if lambda_grid is None else tuple(lambda_grid)
    n, y = scm.n, scm.n
    c_diag = _quadratic_c_diag(cost)
    _, cov = scm.exact_moments()
    sig_xx = cov[:n, :n]
    sig_xy = cov[:n, y]
    sig_yy = cov[y, y]
    m1 = scm.B[:n, :n]
    r = scm.B[y, :n]
    cinv = 1.0 / c_diag
    p_vec = m1 @ (cinv * r)
    g_mat = m1 @ (cinv[:, None] * m1.T)
    root2b = math.sqrt(2.0 * b)

    def risk_of(v):
        return float(v @ sig_xx @ v - 2.0 * v @ sig_xy + sig_yy)

    def imp_of(v):
        s2 = float(v @ g_mat @ v)
        if s2 <= 1e-300:
            return 0.0
        return root2b * float(p_vec @ v) / math.sqrt(s2)

    def grad(v, lam):
        g_risk = 2.0 * (sig_xx @ v - sig_xy)
        s2 = float(v @ g_mat @ v)
        if s2 <= 1e-300:
            return g_risk
        s = math.sqrt(s2)
        g_imp = root2b * (p_vec / s - (float(p_vec @ v) / (s2 * s)) * (g_mat @ v))
        return g_risk - lam * g_imp

    rng = np.random.default_rng(seed)
    gls = np.linalg.solve(sig_xx, sig_xy)
    struct = scm.A[y, :n].copy()
    base_starts = [gls, struct] + [rng.standard_normal(n) * (1.0 + 2.0 * rng.random()) for _ in range(max(0, n_starts - 2))]

    points = []
    for lam in lambda_grid:
        best_v, best_obj = None, np.inf
        for v0 in base_starts:
            v = np.array(v0, dtype=float)
            obj = risk_of(v) - lam * imp_of(v)
            step = 1.0 / (1.0 + np.linalg.norm(sig_xx) + lam)
            for _ in range(gd_iters):
                g = grad(v, lam)
                cand = v - step * g
                obj_new = risk_of(cand) - lam * imp_of(cand)
                if obj_new < obj - 1e-15 * (1.0 + abs(obj)):
                    v, obj = cand, obj_new
                    step *= 1.25
                else:
                    step *= 0.5
                    if step < 1e-14:
                        break
            if obj < best_obj:
                best_v, best_obj = v, obj
        if best_v is None or not np.isfinite(best_obj) or not np.all(np.isfinite(best_v)):
            if skipped is not None:
                skipped.append(float(lam))
            continue
        w_full = np.concatenate([best_v, [0.0]])
        risk, imp = risk_improvement(w_full, scm, cost, b)
        points.append(ParetoPoint(tuple(w_full), risk, imp, lam=float(lam)))
    return pareto_filter(points)


# ---------------------------------------------------------------------------
# linear-cost pipeline: explore all inducible interventions, then QP per
# distribution


@dataclass
class InterventionCatalog:
    """Outcome of the exploration phase: the distinct induced distributions,
    the shift/probe bookkeeping rows, and the estimated natural mean."""

    dists: list[InducedDistribution]
    probes: list[np.ndarray]
    natural_mean: np.ndarray
    k_mutable: int
    deployments: int = 0

    @property
    def size(self) -> int:
        return len(self.dists)


def nullspace_probe(rows, n: int) -> np.ndarray:
    """A unit vector orthogonal to every row, via SVD with a relative
    singular-value threshold; deterministic sign."""
    mat = np.vstack([np.zeros((0, n))] + [np.atleast_2d(r) for r in rows])
    _, s, vt = np.linalg.svd(mat, full_matrices=True) if mat.size else (None, np.zeros(0), np.eye(n))
    probe = vt[-1]
    smax = s.max(initial=0.0)
    if mat.size and np.linalg.norm(mat @ probe) > max(NULLSPACE_RTOL * smax, 1e-300) * 10:
        raise ParetoError("internal invariant failed: probe not in the nullspace of the shift rows")
    nz = np.nonzero(np.abs(probe) > 1e-12)[0]
    if nz.size and probe[nz[0]] < 0:
        probe = -probe
    return probe


def _is_duplicate(dist: InducedDistribution, seen, dup_tol: float) -> bool:
    mu = dist.mean_vector()
    return any(np.abs(mu - d.mean_vector()).max() <= dup_tol for d in seen)


def explore_linear(env, n: int, prices=None, dup_tol: float = 1e-7) -> InterventionCatalog:
    """Elicit every inducible intervention under a linear cost by repeatedly
    deploying +-w for probe vectors w orthogonal to all shifts seen so far.
    Uses at most 2n deployments and stops early once all 2k distinct
    distributions (k mutable features) have been observed."""
    k = int(np.isfinite(np.asarray(prices, dtype=float)).sum()) if prices is not None else n
    start = env.deployments
    e1 = np.zeros(n + 1)
    e1[0] = 1.0
    d_plus = env.deploy(LinearMechanism(tuple(e1)))
    d_minus = env.deploy(LinearMechanism(tuple(-e1)))
    natural_mean = 0.5 * (d_plus.mean_vector() + d_minus.mean_vector())
    dists = [d_plus]
    if not _is_duplicate(d_minus, dists, dup_tol):
        dists.append(d_minus)
    probes = [(d_plus.mean_vector() - d_minus.mean_vector())[:n]]

    for _ in range(2, n + 1):
        if len(dists) >= 2 * k:
            break
        w = nullspace_probe(probes, n)
        mech_p = LinearMechanism(tuple(np.concatenate([w, [0.0]])))
        mech_m = LinearMechanism(tuple(np.concatenate([-w, [0.0]])))
        d_i = env.deploy(mech_p)
        d_mi = env.deploy(mech_m)
        fresh = []
        for d in (d_i, d_mi):
            if not _is_duplicate(d, dists + fresh, dup_tol):
                fresh.append(d)
        if fresh:
            dists.extend(fresh)
            probes.append((fresh[0].mean_vector() - natural_mean)[:n])
        else:
            probes.append(w)
    return InterventionCatalog(
        dists=dists,
        probes=probes,
        natural_mean=natural_mean,
        k_mutable=k,
        deployments=env.deployments - start,
    )


def min_mse_given_intervention(index: int, catalog: InterventionCatalog, kkt_tol: float = 1e-6) -> tuple[np.ndarray, float, QpResult]:
    """Lowest-MSE weights among mechanisms that keep inducing the
    distribution ``catalog.dists[index]``: a convex QP whose constraints say
    this intervention's score gain weakly beats every other observed one."""
    d_i = catalog.dists[index]
    n = d_i.n
    mom = d_i.second_moment()
    p_mat = 2.0 * mom[:n, :n]
    q = -2.0 * mom[:n, n]
    mu_i = d_i.mean_vector()[:n]
    rows = []
    for j, d_j in enumerate(catalog.dists):
        if j == index:
            continue
        rows.append(d_j.mean_vector()[:n] - mu_i)
    G = np.vstack(rows) if rows else None
    h = np.zeros(len(rows)) if rows else None
    res = solve_qp(p_mat, q, G, h)
    if res.kkt_residual > kkt_tol:
        raise ParetoError(f"QP finished with KKT residual {res.kkt_residual:.2e} > {kkt_tol:g}")
    risk = float(res.w @ mom[:n, :n] @ res.w - 2.0 * res.w @ mom[:n, n] + mom[n, n])
    return res.w, risk, res


def linear_cost_points(catalog: InterventionCatalog, kkt_tol: float = 1e-6):
    """One (point, QP certificate) pair per observed distribution; the
    improvement is fixed by the induced distribution, the QP finds the lowest
    MSE among mechanisms that keep inducing it."""
    y = catalog.natural_mean.size - 1
    out = []
    for idx, d in enumerate(catalog.dists):
        w, risk, res = min_mse_given_intervention(idx, catalog, kkt_tol)
        imp = float(d.mean_vector()[y] - catalog.natural_mean[y])
        out.append((ParetoPoint(tuple(np.concatenate([w, [0.0]])), risk, imp), res))
    return out


def linear_cost_front(catalog: InterventionCatalog, kkt_tol: float = 1e-6) -> Front:
    """Non-dominated subset of the per-distribution QP candidates."""
    return pareto_filter(p for p, _ in linear_cost_points(catalog, kkt_tol))
