"""Best-response solvers: the intervention a rational, causally aware agent
plays against a deployed mechanism under a cost budget.

Closed forms cover the linear-SCM cases (quadratic cost via the Lagrange
condition ``B^T w = lambda C a``, linear cost via the per-coordinate
bang-for-buck argmax, isolation mechanisms via budget saturation); everything
else goes through a multi-start projected-gradient solver, batched across the
population by the selected backend.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _respond_py as eng
from ._backend import batch_loop
from ._flatten import flatten_mechanism, flatten_scm
from .costs import CostError, CostSpec, LinearCost, SeparableCost
from .mechanisms import Mechanism, as_linear_weights
from .scm import LinearScm

ZERO_DIRECTION_RTOL = 1e-9


class SolverError(RuntimeError):
    def __init__(self, msg, best=None):
        super().__init__(msg)
        self.best = best


@dataclass
class BestResponse:
    """``a_star`` is the full-length intervention (y entry zero);
    ``achieved_score`` is the score gain over playing ``a = 0``."""

    a_star: np.ndarray
    achieved_score: float
    cost_used: float
    degenerate: bool = False
    tie_break: bool = False
    residual: float | None = None


def _feature_effects(w: np.ndarray, scm: LinearScm) -> np.ndarray:
    """``(B^T w)`` on the feature coordinates: how much a unit perturbation of
    each feature moves the score."""
    return (scm.B.T @ w)[: scm.n]


def best_response_quadratic(w, scm: LinearScm, c_diag, b: float) -> BestResponse:
    """Closed form for cost ``1/2 a^T C a <= b`` with positive diagonal C:
    ``a* = C^{-1} B^T w / lambda``, ``lambda = sqrt(w^T B C^{-1} B^T w / 2b)``,
    which saturates the budget exactly. A score direction that no feature can
    move (``B^T w = 0``) returns the zero intervention, flagged degenerate."""
    w = np.asarray(w, dtype=float)
    c_diag = np.asarray(c_diag, dtype=float)
    if np.any(c_diag <= 0):
        raise CostError("quadratic cost matrix must be positive diagonal")
    if b <= 0:
        raise CostError("budget must be positive")
    m = _feature_effects(w, scm)
    a = np.zeros(scm.n + 1)
    if np.abs(m).max(initial=0.0) <= ZERO_DIRECTION_RTOL * max(1.0, np.abs(w).max()):
        return BestResponse(a, 0.0, 0.0, degenerate=True)
    lam = math.sqrt(float(m @ (m / c_diag)) / (2.0 * b))
    a[: scm.n] = m / c_diag / lam
    cost = 0.5 * float(a[: scm.n] @ (c_diag * a[: scm.n]))
    return BestResponse(a, float(m @ a[: scm.n]), cost)


def best_response_linear_cost(w, scm: LinearScm, prices, b: float) -> BestResponse:
    """Closed form for cost ``sum c_i |a_i| <= b``: the whole budget goes on
    the mutable coordinate maximizing ``|(B^T w)_i| / c_i``. When the score is
    flat on every mutable coordinate the population tie-breaks to the lowest
    mutable index, spent in the positive direction."""
    w = np.asarray(w, dtype=float)
    prices = np.asarray(prices, dtype=float)
    if b <= 0:
        raise CostError("budget must be positive")
    mutable = np.isfinite(prices)
    if not mutable.any():
        raise CostError("at least one feature must be mutable")
    m = _feature_effects(w, scm)
    zero_tol = ZERO_DIRECTION_RTOL * max(1.0, np.abs(w).max()) * max(1.0, np.abs(scm.B).max())
    ratios = np.where(mutable & (np.abs(m) > zero_tol), np.abs(m) / prices, -1.0)
    a = np.zeros(scm.n + 1)
    if ratios.max() <= 0.0:
        i0 = int(np.nonzero(mutable)[0][0])
        a[i0] = b / prices[i0]
        return BestResponse(a, 0.0, b, tie_break=True)
    i_star = int(np.argmax(ratios))
    a[i_star] = math.copysign(b / prices[i_star], m[i_star])
    return BestResponse(a, float(m @ a[: scm.n]), b)


def best_response_isolation(target: int, cost: CostSpec, b: float) -> BestResponse:
    """Best response to ``f = x_target - g_target(x_pa)`` with the true
    structural function: the objective collapses to ``u_target + a_target``,
    so the agent saturates the budget on the target coordinate alone. The
    saturation level is the unique positive root of ``c_target(t) = b``."""
    if b <= 0:
        raise CostError("budget must be positive")
    if isinstance(cost, SeparableCost) and not cost.is_homogeneous:
        raise CostError("cost is not separable from the agent's features; solve per agent")
    root = cost.node_root(target, b)
    a = np.zeros(cost.n + 1)
    a[target] = root
    return BestResponse(a, root, b)


def closed_form_response(w, scm: LinearScm, cost: CostSpec, b: float) -> BestResponse | None:
    if isinstance(cost, LinearCost):
        return best_response_linear_cost(w, scm, cost.price_array(), b)
    if isinstance(cost, SeparableCost) and cost.is_quadratic and cost.is_homogeneous:
        scale = cost.scale_values(None)[0]
        # c_i = kappa_i a_i^2  <=>  1/2 C a^2 with C = 2 kappa
        coef = np.array([t[0][0] for t in cost.terms])
        return best_response_quadratic(w, scm, 2.0 * coef * scale, b)
    return None


def shared_best_response(mechanism: Mechanism, scm, cost: CostSpec, b: float, seed=0) -> BestResponse | None:
    """The single population-wide best response, when one exists: linear SCM,
    homogeneous cost and a mechanism linear in ``x`` make the program
    independent of the agent's realized noise."""
    if not (isinstance(scm, LinearScm) and cost.is_homogeneous):
        return None
    w = as_linear_weights(mechanism, scm.n)
    if w is None:
        return None
    closed = closed_form_response(w, scm, cost, b)
    if closed is not None:
        return closed
    # homogeneous power cost with a linear score: one numeric solve covers everyone
    return best_response_numeric(mechanism, scm, cost, b, u=np.zeros(scm.n + 1), seed=seed)


def best_response_numeric(
    mechanism: Mechanism,
    scm,
    cost: CostSpec,
    b: float,
    u,
    n_starts: int = 8,
    max_iter: int = 10_000,
    tol: float = 1e-6,
    seed=0,
) -> BestResponse:
    """Multi-start projected-gradient ascent on the budget set for one agent
    with realized noise ``u``. Raises :class:`SolverError` carrying the best
    iterate if the stationarity residual stays above ``tol``."""
    u = np.asarray(u, dtype=float).reshape(1, -1)
    a, obj, resid = _population_pgd(mechanism, scm, cost, b, u, n_starts, max_iter, seed, force_python=True)
    x_nat = scm.evaluate(u, np.zeros(scm.n + 1))
    base = float(mechanism.score(x_nat)[0])
    br = BestResponse(
        a_star=a[0],
        achieved_score=float(obj[0]) - base,
        cost_used=float(cost.value(a[:1, : scm.n], x_nat)[0]),
        residual=float(resid[0]),
    )
    norm_scale = max(1.0, float(np.linalg.norm(mechanism.grad(x_nat))))
    if br.residual > tol * norm_scale:
        raise SolverError(
            f"projected-gradient solver did not reach stationarity {tol:g} "
            f"(residual {br.residual:.2e} after {max_iter} iterations)",
            best=br,
        )
    return br


def population_best_response(
    mechanism: Mechanism,
    scm,
    cost: CostSpec,
    b: float,
    u: np.ndarray,
    n_starts: int = 1,
    max_iter: int = 25,
    seed=0,
) -> np.ndarray:
    """Best responses for every row of ``u`` at once; returns (m, n+1)
    interventions. Uses the shared closed form whenever the program is
    agent-independent, otherwise the batched solver started from the
    linearized best response."""
    u = np.atleast_2d(np.asarray(u, dtype=float))
    shared = shared_best_response(mechanism, scm, cost, b, seed=seed)
    if shared is not None:
        return np.broadcast_to(shared.a_star, (u.shape[0], scm.n + 1)).copy()
    a, _, _ = _population_pgd(mechanism, scm, cost, b, u, n_starts, max_iter, seed, want_residual=False)
    return a


def _population_pgd(mechanism, scm, cost, b, u, n_starts, max_iter, seed, force_python=False, want_residual=True):
    fs = flatten_scm(scm)
    fm = flatten_mechanism(mechanism, scm.n)
    custom = mechanism if fm is None else None
    mutable = cost.mutable()
    x_nat = None
    if isinstance(cost, SeparableCost) and not cost.is_homogeneous:
        x_nat = eng.forward_eval(fs, u, np.zeros(scm.n + 1))
    problem = eng.Problem(fs, fm, u, mutable, custom_mech=custom)
    loop = batch_loop(pure=force_python or custom is not None)
    if isinstance(cost, LinearCost):
        prices = cost.price_array()[mutable]
        return eng.solve(problem, "l1", prices, float(b), n_starts, max_iter, seed, loop=loop, want_residual=want_residual)
    if isinstance(cost, SeparableCost) and cost.is_quadratic:
        coef = np.array([t[0][0] for t in cost.terms])
        kappa = cost.scale_values(x_nat) * coef
        whiten = np.sqrt(kappa[:, mutable])
        return eng.solve(problem, "l2", whiten, math.sqrt(b), n_starts, max_iter, seed, loop=loop, want_residual=want_residual)
    return eng.solve_power(problem, cost, x_nat, float(b), n_starts, max_iter, seed)
