"""Structural models over nodes ``(x1..xn, y)``: exogenous-noise
specifications, linear and additive-noise structural equations, soft
interventions, sampling and exact Gaussian-moment computation.

Structural conventions:

* node ``j`` evaluates to ``g_j(parents) + u_j + a_j`` where ``a`` is the
  soft-intervention vector (``a[y] = 0`` always);
* for the linear model, ``A[j, k]`` is the weight of edge ``k -> j`` and the
  total-effect matrix is ``B = (I - A)^{-1}``, so a population-wide
  intervention shifts means by ``B a``;
* additive structural functions are sums of univariate polynomials of the
  parents plus a constant (the closed registry: ``linear`` is degree 1,
  ``poly`` is degree <= d).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graphs import GraphError, node_name, oriented_from_dag


class ScmError(ValueError):
    pass


# ---------------------------------------------------------------------------
# exogenous noise


@dataclass(frozen=True)
class NoiseSpec:
    """One exogenous variable: ``gaussian{mean, var}``, ``uniform{lo, hi}`` or
    ``two_point{hi, lo, p}`` (value ``hi`` with probability ``p``)."""

    kind: str
    a: float = 0.0
    b: float = 1.0
    p: float = 0.5

    def __post_init__(self):
        if self.kind not in ("gaussian", "uniform", "two_point"):
            raise ScmError(f"unknown noise family {self.kind!r}")
        if self.kind == "gaussian" and self.b < 0:
            raise ScmError("gaussian variance must be >= 0")
        if self.kind == "uniform" and self.b < self.a:
            raise ScmError("uniform upper bound below lower bound")
        if self.kind == "two_point" and not 0.0 <= self.p <= 1.0:
            raise ScmError("two_point probability must lie in [0, 1]")

    @classmethod
    def gaussian(cls, mean: float = 0.0, var: float = 1.0) -> "NoiseSpec":
        return cls("gaussian", mean, var)

    @classmethod
    def uniform(cls, lo: float, hi: float) -> "NoiseSpec":
        return cls("uniform", lo, hi)

    @classmethod
    def two_point(cls, hi: float, lo: float, p: float) -> "NoiseSpec":
        return cls("two_point", hi, lo, p)

    @property
    def mean(self) -> float:
        if self.kind == "gaussian":
            return self.a
        if self.kind == "uniform":
            return 0.5 * (self.a + self.b)
        return self.p * self.a + (1.0 - self.p) * self.b

    @property
    def var(self) -> float:
        if self.kind == "gaussian":
            return self.b
        if self.kind == "uniform":
            return (self.b - self.a) ** 2 / 12.0
        return self.p * (1.0 - self.p) * (self.a - self.b) ** 2

    def draw(self, rng: np.random.Generator, count: int) -> np.ndarray:
        if self.kind == "gaussian":
            return self.a + np.sqrt(self.b) * rng.standard_normal(count)
        if self.kind == "uniform":
            return rng.uniform(self.a, self.b, count)
        return np.where(rng.random(count) < self.p, self.a, self.b)


# ---------------------------------------------------------------------------
# interventions


def intervention(n: int, values: dict[int, float] | np.ndarray | None = None) -> np.ndarray:
    """Length-``n+1`` additive perturbation vector with the y entry pinned to 0."""
    a = np.zeros(n + 1)
    if values is None:
        return a
    if isinstance(values, dict):
        for j, v in values.items():
            a[j] = v
    else:
        values = np.asarray(values, dtype=float)
        a[: values.size] = values
    if a[n] != 0.0:
        raise ScmError("the outcome node cannot be intervened on (a[y] must be 0)")
    return a


def check_intervention(a: np.ndarray, n: int) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.shape != (n + 1,):
        raise ScmError(f"intervention must have length {n + 1}")
    if a[n] != 0.0:
        raise ScmError("the outcome node cannot be intervened on (a[y] must be 0)")
    return a


# ---------------------------------------------------------------------------
# structural functions (closed registry: per-parent univariate polynomials)


@dataclass(frozen=True)
class NodeFunction:
    """``g(parents) = const + sum_p poly_p(x_p)`` with ``poly_p`` a univariate
    polynomial without constant term (coeffs[k] multiplies ``x_p**(k+1)``)."""

    parents: tuple[int, ...]
    coeffs: tuple[tuple[float, ...], ...]
    const: float = 0.0

    def __post_init__(self):
        if len(self.parents) != len(self.coeffs):
            raise ScmError("one coefficient list per parent required")
        if len(set(self.parents)) != len(self.parents):
            raise ScmError("duplicate parent")

    @property
    def degree(self) -> int:
        return max((len(c) for c in self.coeffs), default=1)

    @property
    def is_linear(self) -> bool:
        return all(len(c) <= 1 for c in self.coeffs)

    def value(self, x_parents: np.ndarray) -> np.ndarray:
        """Evaluate on columns ordered like ``self.parents``; rows are samples."""
        x_parents = np.atleast_2d(np.asarray(x_parents, dtype=float))
        if x_parents.shape[1] != len(self.parents):
            raise ScmError(f"expected {len(self.parents)} parent values, got {x_parents.shape[1]}")
        out = np.full(x_parents.shape[0], self.const)
        for col, cs in enumerate(self.coeffs):
            xp = x_parents[:, col]
            acc = np.zeros_like(xp)
            for c in reversed(cs):
                acc = (acc + c) * xp
            out = out + acc
        return out

    def deriv(self, x_parents: np.ndarray) -> np.ndarray:
        """d g / d x_p per parent column, evaluated rowwise."""
        x_parents = np.atleast_2d(np.asarray(x_parents, dtype=float))
        out = np.zeros_like(x_parents)
        for col, cs in enumerate(self.coeffs):
            xp = x_parents[:, col]
            acc = np.zeros_like(xp)
            for k in range(len(cs) - 1, -1, -1):
                acc = acc * xp + (k + 1) * cs[k]
            out[:, col] = acc
        return out


# ---------------------------------------------------------------------------
# additive-noise SCM


@dataclass
class AdditiveScm:
    """Additive-noise model: ``x_j = g_j(x_pa(j)) + u_j (+ a_j)``."""

    n: int
    functions: tuple[NodeFunction, ...]
    noises: tuple[NoiseSpec, ...]
    _topo: list[int] = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.functions) != self.n + 1 or len(self.noises) != self.n + 1:
            raise ScmError("need one structural function and one noise spec per node")
        arcs = [(p, j) for j, f in enumerate(self.functions) for p in f.parents]
        try:
            self._topo = oriented_from_dag(self.n, arcs).topological_order()
        except GraphError as exc:
            raise ScmError(f"parent lists are not acyclic: {exc}") from exc

    @property
    def y(self) -> int:
        return self.n

    def topological_order(self) -> list[int]:
        return list(self._topo)

    def parents(self, j: int) -> tuple[int, ...]:
        return self.functions[j].parents

    def graph(self):
        return oriented_from_dag(self.n, [(p, j) for j, f in enumerate(self.functions) for p in f.parents])

    def structural_value(self, node: int, parent_values) -> float:
        """``g_j`` at the given parent values, noise excluded."""
        f = self.functions[node]
        vals = np.asarray(parent_values, dtype=float).reshape(1, -1)
        return float(f.value(vals)[0])

    def draw_noise(self, count: int, seed) -> np.ndarray:
        rng = np.random.default_rng(seed)
        u = np.empty((count, self.n + 1))
        for j, spec in enumerate(self.noises):
            u[:, j] = spec.draw(rng, count)
        return u

    def evaluate(self, u: np.ndarray, a: np.ndarray) -> np.ndarray:
        """Evaluate all nodes in topological order for noise rows ``u`` with a
        shared intervention ``a``, or per-row interventions if ``a`` is 2-d."""
        u = np.atleast_2d(u)
        x = np.empty_like(u)
        a2 = np.atleast_2d(a)
        for j in self._topo:
            f = self.functions[j]
            if f.parents:
                gj = f.value(x[:, list(f.parents)])
            else:
                gj = f.const
            aj = a2[:, j] if a2.shape[0] > 1 else a2[0, j]
            x[:, j] = gj + u[:, j] + aj
        return x

    def sample(self, count: int, intervention_vec=None, seed=None) -> np.ndarray:
        """Rows of ``(x1..xn, y)`` under the soft intervention (default: none)."""
        if count < 1:
            raise ScmError("count must be >= 1")
        a = check_intervention(intervention_vec, self.n) if intervention_vec is not None else np.zeros(self.n + 1)
        return self.evaluate(self.draw_noise(count, seed), a)

    @property
    def is_linear(self) -> bool:
        return all(f.is_linear for f in self.functions)

    def to_linear(self) -> "LinearScm":
        if not self.is_linear:
            raise ScmError("model has non-linear structural functions")
        A = np.zeros((self.n + 1, self.n + 1))
        const = np.zeros(self.n + 1)
        for j, f in enumerate(self.functions):
            const[j] = f.const
            for p, cs in zip(f.parents, f.coeffs):
                A[j, p] = cs[0] if cs else 0.0
        return LinearScm(self.n, A, self.noises, const=const)


# ---------------------------------------------------------------------------
# linear SCM with exact moments


@dataclass
class LinearScm:
    """Linear SCM ``x = A x + const + u``; stores the direct-effect matrix
    ``A`` (the edges discovery must recover) and derives the total-effect
    matrix ``B = (I - A)^{-1}``."""

    n: int
    A: np.ndarray
    noises: tuple[NoiseSpec, ...]
    const: np.ndarray | None = None
    B: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        if self.A.shape != (self.n + 1, self.n + 1):
            raise ScmError(f"A must be ({self.n + 1}, {self.n + 1})")
        if len(self.noises) != self.n + 1:
            raise ScmError("need one noise spec per node")
        self.const = np.zeros(self.n + 1) if self.const is None else np.asarray(self.const, dtype=float)
        arcs = [(k, j) for j in range(self.n + 1) for k in range(self.n + 1) if self.A[j, k] != 0.0]
        try:
            self._topo = oriented_from_dag(self.n, arcs).topological_order()
        except GraphError as exc:
            raise ScmError(f"edge weights do not form a DAG: {exc}") from exc
        self.B = np.linalg.inv(np.eye(self.n + 1) - self.A)
        resid = np.abs(self.B @ (np.eye(self.n + 1) - self.A) - np.eye(self.n + 1)).max()
        if resid > 1e-10:
            raise ScmError(f"total-effect inversion residual {resid:.2e} exceeds 1e-10")

    @property
    def y(self) -> int:
        return self.n

    def topological_order(self) -> list[int]:
        return list(self._topo)

    def parents(self, j: int) -> tuple[int, ...]:
        return tuple(int(k) for k in np.nonzero(self.A[j])[0])

    def graph(self):
        return oriented_from_dag(self.n, [(p, j) for j in range(self.n + 1) for p in self.parents(j)])

    def structural_value(self, node: int, parent_values) -> float:
        pa = self.parents(node)
        vals = np.asarray(parent_values, dtype=float)
        if vals.size != len(pa):
            raise ScmError(f"expected {len(pa)} parent values, got {vals.size}")
        return float(self.A[node, list(pa)] @ vals + self.const[node])

    def noise_means(self) -> np.ndarray:
        return np.array([s.mean for s in self.noises])

    def noise_vars(self) -> np.ndarray:
        return np.array([s.var for s in self.noises])

    def exact_moments(self, intervention_vec=None) -> tuple[np.ndarray, np.ndarray]:
        """Mean ``B (const + mu_u + a)`` and covariance ``B diag(var_u) B^T``."""
        a = check_intervention(intervention_vec, self.n) if intervention_vec is not None else np.zeros(self.n + 1)
        mean = self.B @ (self.const + self.noise_means() + a)
        cov = self.B @ np.diag(self.noise_vars()) @ self.B.T
        return mean, cov

    def draw_noise(self, count: int, seed) -> np.ndarray:
        rng = np.random.default_rng(seed)
        u = np.empty((count, self.n + 1))
        for j, spec in enumerate(self.noises):
            u[:, j] = spec.draw(rng, count)
        return u

    def evaluate(self, u: np.ndarray, a: np.ndarray) -> np.ndarray:
        u = np.atleast_2d(u)
        shift = self.const + a if np.ndim(a) == 1 else self.const[None, :] + a
        return (u + shift) @ self.B.T

    def sample(self, count: int, intervention_vec=None, seed=None) -> np.ndarray:
        if count < 1:
            raise ScmError("count must be >= 1")
        a = check_intervention(intervention_vec, self.n) if intervention_vec is not None else np.zeros(self.n + 1)
        return self.evaluate(self.draw_noise(count, seed), a)

    @property
    def is_linear(self) -> bool:
        return True

    def to_additive(self) -> AdditiveScm:
        fns = []
        for j in range(self.n + 1):
            pa = self.parents(j)
            fns.append(NodeFunction(pa, tuple((float(self.A[j, p]),) for p in pa), const=float(self.const[j])))
        return AdditiveScm(self.n, tuple(fns), tuple(self.noises))


def chain_scm(weights, noises=None, const=None) -> LinearScm:
    """Chain ``x1 -> x2 -> ... -> y`` with the given edge weights; weights[k]
    is the weight of the edge into node k+1. Standard-normal noises by default."""
    n = len(weights)
    A = np.zeros((n + 1, n + 1))
    for k, w in enumerate(weights):
        A[k + 1, k] = w
    noises = noises or tuple(NoiseSpec.gaussian(0.0, 1.0) for _ in range(n + 1))
    return LinearScm(n, A, tuple(noises), const=const)


def sample_to_csv(samples: np.ndarray, path) -> None:
    """Write a sample matrix with the ``x1..xn, y`` header row."""
    n = samples.shape[1] - 1
    header = ",".join(node_name(j, n) for j in range(n + 1))
    np.savetxt(path, samples, delimiter=",", header=header, comments="")
