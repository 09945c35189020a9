"""Separable intervention-cost families and the budget semantics agents
optimize under.

Two families cover everything the solvers accept:

* :class:`SeparableCost` -- per-coordinate sums of power terms
  ``c_i(a_i) = kappa_i(x_{S_i}) * sum_k coef_k |a_i|**exp_k`` with ``exp_k >= 1``
  and ``coef_k > 0`` (so each ``c_i`` is strictly increasing in ``|a_i|``).
  When every exponent is >= 2 the marginal cost at zero vanishes, which is the
  property the per-node incentivization strategy relies on. The optional
  ``kappa_i`` scale makes the cost heterogeneous: it depends on the agent's
  pre-manipulation features.
* :class:`LinearCost` -- per-coordinate prices, ``inf`` marking an immutable
  feature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class CostError(ValueError):
    pass


@dataclass(frozen=True)
class HeteroScale:
    """Positive per-node multiplier ``base + sum_s weight_s * x_s**2``."""

    base: float
    deps: tuple[tuple[int, float], ...] = ()

    def __post_init__(self):
        if self.base <= 0:
            raise CostError("heterogeneous scale base must be > 0")
        if any(w < 0 for _, w in self.deps):
            raise CostError("heterogeneous scale weights must be >= 0")

    def value(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        out = np.full(x.shape[0], self.base)
        for node, w in self.deps:
            out = out + w * x[:, node] ** 2
        return out


@dataclass(frozen=True)
class SeparableCost:
    """``c(a; x) = sum_i kappa_i(x) * sum_k coef |a_i|**exp`` over features."""

    terms: tuple[tuple[tuple[float, float], ...], ...]
    scales: tuple[HeteroScale | None, ...] | None = None

    def __post_init__(self):
        for i, node_terms in enumerate(self.terms):
            if not node_terms:
                raise CostError(f"feature {i} has no cost terms")
            for coef, exp in node_terms:
                if coef <= 0 or exp < 1:
                    raise CostError(f"feature {i}: cost terms need coef > 0 and exponent >= 1")
        if self.scales is not None and len(self.scales) != len(self.terms):
            raise CostError("one scale entry per feature required")

    @classmethod
    def quadratic(cls, c_diag, scales=None) -> "SeparableCost":
        """Cost ``1/2 a^T C a`` for a positive diagonal ``C``."""
        c_diag = np.asarray(c_diag, dtype=float)
        if np.any(c_diag <= 0):
            raise CostError("quadratic cost matrix must be positive diagonal")
        return cls(tuple(((ci / 2.0, 2.0),) for ci in c_diag), scales)

    @classmethod
    def power(cls, node_terms) -> "SeparableCost":
        return cls(tuple(tuple((float(c), float(e)) for c, e in t) for t in node_terms))

    @property
    def n(self) -> int:
        return len(self.terms)

    @property
    def is_class1(self) -> bool:
        """Marginal cost at zero is zero on every coordinate (all exponents >= 2).

        Verified numerically at +-1e-6 to keep the declared class honest."""
        if not all(all(e >= 2 for _, e in t) for t in self.terms):
            return False
        eps = 1e-6
        probe = np.zeros(self.n)
        for i in range(self.n):
            for s in (eps, -eps):
                probe[i] = s
                if abs(self._node_value(i, s)) > eps * 1e-3:
                    probe[i] = 0.0
                    break
                probe[i] = 0.0
            else:
                continue
            return False
        return True

    @property
    def is_quadratic(self) -> bool:
        return all(len(t) == 1 and t[0][1] == 2.0 for t in self.terms)

    @property
    def is_homogeneous(self) -> bool:
        return self.scales is None or all(s is None or not s.deps for s in self.scales)

    def quadratic_c_diag(self) -> np.ndarray:
        if not self.is_quadratic:
            raise CostError("cost is not of the quadratic family")
        return np.array([2.0 * t[0][0] for t in self.terms])

    def mutable(self) -> np.ndarray:
        return np.ones(self.n, dtype=bool)

    def _node_value(self, i: int, a):
        a = np.abs(np.asarray(a, dtype=float))
        out = np.zeros_like(a)
        for coef, exp in self.terms[i]:
            out = out + coef * a**exp
        return out

    def _node_deriv(self, i: int, a):
        a = np.asarray(a, dtype=float)
        out = np.zeros_like(a)
        for coef, exp in self.terms[i]:
            out = out + coef * exp * np.abs(a) ** (exp - 1.0) * np.sign(a)
        return out

    def scale_values(self, x: np.ndarray | None) -> np.ndarray:
        """Per-agent, per-feature multiplier matrix (m, n)."""
        if self.scales is None:
            return np.ones((1, self.n))
        if x is None and not self.is_homogeneous:
            raise CostError("heterogeneous cost needs the agent's natural features")
        m = 1 if x is None else np.atleast_2d(x).shape[0]
        out = np.ones((m, self.n))
        for i, s in enumerate(self.scales):
            if s is not None:
                out[:, i] = s.base if x is None else s.value(x)
        return out

    def value(self, a: np.ndarray, x: np.ndarray | None = None) -> np.ndarray:
        """Total cost for feature-space interventions ``a`` (rows = agents)."""
        a = np.atleast_2d(a)
        scale = self.scale_values(x)
        out = np.zeros(max(a.shape[0], scale.shape[0]))
        for i in range(self.n):
            out = out + scale[:, i] * self._node_value(i, a[:, i])
        return out

    def grad(self, a: np.ndarray, x: np.ndarray | None = None) -> np.ndarray:
        a = np.atleast_2d(a)
        scale = self.scale_values(x)
        out = np.empty_like(a)
        for i in range(self.n):
            out[:, i] = scale[:, i] * self._node_deriv(i, a[:, i])
        return out

    def node_root(self, i: int, budget: float) -> float:
        """Positive root of ``c_i(t) = budget`` for the homogeneous cost; unique
        by strict monotonicity."""
        if self.scales is not None and self.scales[i] is not None and self.scales[i].deps:
            raise CostError("budget root undefined for a feature-dependent cost; solve per agent")
        scale = 1.0 if self.scales is None or self.scales[i] is None else self.scales[i].base
        terms = self.terms[i]
        if len(terms) == 1:
            coef, exp = terms[0]
            return float((budget / (scale * coef)) ** (1.0 / exp))
        lo, hi = 0.0, 1.0
        while scale * self._node_value(i, hi) < budget:
            hi *= 2.0
            if hi > 1e12:
                raise CostError("budget root bracketing failed")
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if scale * self._node_value(i, mid) < budget:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)


@dataclass(frozen=True)
class LinearCost:
    """``c(a) = sum_i price_i |a_i|``; ``inf`` prices mark immutable features."""

    prices: tuple[float, ...]

    def __post_init__(self):
        if any(p <= 0 for p in self.prices):
            raise CostError("linear prices must be positive (inf allowed)")
        if not any(math.isfinite(p) for p in self.prices):
            raise CostError("at least one feature must be mutable")

    @property
    def n(self) -> int:
        return len(self.prices)

    @property
    def is_class1(self) -> bool:
        return False

    @property
    def is_homogeneous(self) -> bool:
        return True

    def mutable(self) -> np.ndarray:
        return np.array([math.isfinite(p) for p in self.prices])

    def price_array(self) -> np.ndarray:
        return np.array(self.prices, dtype=float)

    def value(self, a: np.ndarray, x: np.ndarray | None = None) -> np.ndarray:
        a = np.atleast_2d(a)
        p = self.price_array()
        finite = self.mutable()
        out = np.abs(a[:, finite]) @ p[finite]
        infeasible = np.abs(a[:, ~finite]).sum(axis=1) > 0
        out = np.where(infeasible, np.inf, out)
        return out

    def node_root(self, i: int, budget: float) -> float:
        if not math.isfinite(self.prices[i]):
            raise CostError(f"feature {i} is immutable")
        return budget / self.prices[i]


CostSpec = SeparableCost | LinearCost
