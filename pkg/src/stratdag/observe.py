"""What the principal sees after a deployment: induced distributions (exact
moments or samples), conditional-expectation fits, and the shift tests that
drive discovery.

The linear-Gaussian instantiation of the conditional test works on regression
intercepts: shifting every variable by a constant leaves regression
coefficients unchanged and moves only the intercept, by
``delta_V - delta_M^T Sigma^{-1} sigma_{M,V}``. That quantity doubles as the
faithfulness diagnostic: when it vanishes for a genuinely intervened
configuration, the shift is invisible to the test.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .agents import population_best_response, shared_best_response
from .costs import CostSpec
from .mechanisms import Mechanism
from .scm import LinearScm

MIN_EMPIRICAL_COUNT = 16
EXACT_TOL = 1e-7
Z_THRESHOLD = 4.0


class ObservationError(ValueError):
    pass


class SingularRegressorsError(ObservationError):
    def __init__(self, cond):
        self.cond = cond
        super().__init__(f"regressor covariance is numerically singular (cond ~ {cond:.3e})")


@dataclass
class InducedDistribution:
    """Joint law of ``(x1..xn, y)`` after best response: exact first/second
    moments for the closed-form settings, or an empirical sample matrix."""

    n: int
    mean: np.ndarray | None = None
    cov: np.ndarray | None = None
    samples: np.ndarray | None = None
    shift: np.ndarray | None = None
    mechanism: dict | None = None

    def __post_init__(self):
        if self.samples is None and (self.mean is None or self.cov is None):
            raise ObservationError("need either samples or exact moments")
        if self.samples is not None and self.samples.shape[0] < MIN_EMPIRICAL_COUNT:
            raise ObservationError(f"empirical distribution needs >= {MIN_EMPIRICAL_COUNT} rows")
        if self.cov is not None:
            asym = np.abs(self.cov - self.cov.T).max()
            if asym > 1e-9:
                raise ObservationError(f"covariance asymmetry {asym:.2e}")

    @property
    def exact(self) -> bool:
        return self.samples is None

    @property
    def count(self) -> int:
        return 0 if self.samples is None else self.samples.shape[0]

    def mean_vector(self) -> np.ndarray:
        if self.exact:
            return self.mean
        return self.samples.mean(axis=0)

    def cov_matrix(self) -> np.ndarray:
        if self.exact:
            return self.cov
        return np.cov(self.samples, rowvar=False)

    def second_moment(self) -> np.ndarray:
        """``E[v v^T]`` over all nodes, means included."""
        if self.exact:
            mu = self.mean
            return self.cov + np.outer(mu, mu)
        return self.samples.T @ self.samples / self.count

    def var_of(self, node: int) -> float:
        if self.exact:
            return float(self.cov[node, node])
        return float(self.samples[:, node].var(ddof=1))

    def moments_block(self) -> dict:
        return {"mean": self.mean_vector().tolist(), "cov": self.cov_matrix().tolist(), "count": self.count}


# ---------------------------------------------------------------------------
# inducing distributions


def induce(scm, mechanism: Mechanism, cost: CostSpec, b: float, mode: str, count: int = 0, seed=None) -> InducedDistribution:
    """Deploy ``mechanism`` against a population with the given cost/budget and
    return what the principal observes.

    ``exact`` mode needs a linear SCM, a homogeneous cost and a mechanism that
    is linear in the features, so the best response is population-wide and the
    induced law is Gaussian-momented: mean ``B(mu_u + a*)``, covariance
    unchanged. ``empirical`` mode draws ``count`` agents and lets each
    best-respond."""
    if mode == "exact":
        shared = shared_best_response(mechanism, scm, cost, b)
        if shared is None:
            raise ObservationError(
                "exact mode requires a linear SCM, homogeneous cost and a linear mechanism"
            )
        mean0, cov = scm.exact_moments()
        mean, _ = scm.exact_moments(shared.a_star)
        return InducedDistribution(
            n=scm.n, mean=mean, cov=cov, shift=mean - mean0, mechanism=mechanism.describe()
        )
    if mode != "empirical":
        raise ObservationError(f"unknown observation mode {mode!r}")
    if count < MIN_EMPIRICAL_COUNT:
        raise ObservationError(f"empirical mode needs count >= {MIN_EMPIRICAL_COUNT}")
    noise_seed, solver_seed = np.random.SeedSequence(seed).spawn(2)
    u = scm.draw_noise(count, noise_seed)
    a = population_best_response(mechanism, scm, cost, b, u, seed=solver_seed.entropy)
    samples = scm.evaluate(u, a)
    return InducedDistribution(n=scm.n, samples=samples, mechanism=mechanism.describe())


def natural_distribution(scm, mode: str, count: int = 0, seed=None) -> InducedDistribution:
    if mode == "exact":
        mean, cov = scm.exact_moments()
        return InducedDistribution(n=scm.n, mean=mean, cov=cov, shift=np.zeros(scm.n + 1), mechanism={"kind": "null"})
    if count < MIN_EMPIRICAL_COUNT:
        raise ObservationError(f"empirical mode needs count >= {MIN_EMPIRICAL_COUNT}")
    samples = scm.sample(count, seed=np.random.SeedSequence(seed).spawn(1)[0])
    return InducedDistribution(n=scm.n, samples=samples, mechanism={"kind": "null"})


# ---------------------------------------------------------------------------
# conditional-expectation fitting


@dataclass(frozen=True)
class RegressionModel:
    """Fitted conditional expectation of ``target`` given ``regressors``,
    within the registered family: per-regressor powers ``1..degree`` plus an
    intercept."""

    target: int
    regressors: tuple[int, ...]
    family: str
    degree: int
    coeffs: tuple[tuple[float, ...], ...]
    intercept: float

    def basis(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        cols = []
        for r in self.regressors:
            for k in range(1, self.degree + 1):
                cols.append(X[:, r] ** k)
        if not cols:
            return np.empty((X.shape[0], 0))
        return np.column_stack(cols)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        out = np.full(X.shape[0], self.intercept)
        for r, cs in zip(self.regressors, self.coeffs):
            xr = X[:, r]
            acc = np.zeros_like(xr)
            for c in cs[::-1]:
                acc = (acc + c) * xr
            out = out + acc
        return out

    def grad(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        out = np.zeros_like(X)
        for r, cs in zip(self.regressors, self.coeffs):
            xr = X[:, r]
            acc = np.zeros_like(xr)
            for k in range(len(cs) - 1, -1, -1):
                acc = acc * xr + (k + 1) * cs[k]
            out[:, r] = acc
        return out

    def coeff_vector(self) -> np.ndarray:
        return np.concatenate([[self.intercept]] + [list(c) for c in self.coeffs]) if self.coeffs else np.array([self.intercept])

    def describe(self) -> dict:
        return {
            "target": self.target,
            "regressors": list(self.regressors),
            "family": self.family,
            "degree": self.degree,
            "coeffs": [list(c) for c in self.coeffs],
            "intercept": self.intercept,
        }


def fit_conditional(
    dist: InducedDistribution,
    target: int,
    regressors,
    family: str = "linear",
    degree: int = 1,
) -> RegressionModel:
    """Least-squares conditional fit within the registered family. Exact mode
    uses the closed form ``beta = Sigma^{-1} sigma_{M,V}`` with intercept
    ``mu_V - mu_M^T beta`` (only linear fits are defined on moments)."""
    regressors = tuple(int(r) for r in regressors)
    if target in regressors:
        raise ObservationError("regressors must exclude the target")
    if family == "linear":
        degree = 1
    if dist.exact:
        if family != "linear":
            raise ObservationError("exact moments only support the linear family")
        mu = dist.mean
        cov = dist.cov
        if not regressors:
            return RegressionModel(target, (), family, 1, (), float(mu[target]))
        idx = list(regressors)
        sig = cov[np.ix_(idx, idx)]
        cond = np.linalg.cond(sig)
        if not np.isfinite(cond) or cond > 1e12:
            raise SingularRegressorsError(cond)
        beta = np.linalg.solve(sig, cov[idx, target])
        intercept = float(mu[target] - mu[idx] @ beta)
        return RegressionModel(target, regressors, family, 1, tuple((float(v),) for v in beta), intercept)

    X = dist.samples
    model0 = RegressionModel(target, regressors, family, degree, tuple(tuple([0.0] * degree) for _ in regressors), 0.0)
    basis = model0.basis(X)
    design = np.column_stack([np.ones(X.shape[0]), basis])
    sv = np.linalg.svd(design, compute_uv=False)
    if sv[-1] <= 1e-12 * sv[0]:
        raise SingularRegressorsError(sv[0] / max(sv[-1], 1e-300))
    theta, *_ = np.linalg.lstsq(design, X[:, target], rcond=None)
    intercept = float(theta[0])
    coeffs = []
    k = 1
    for _ in regressors:
        coeffs.append(tuple(float(v) for v in theta[k : k + degree]))
        k += degree
    return RegressionModel(target, regressors, family, degree, tuple(coeffs), intercept)


def _ols_se(dist: InducedDistribution, model: RegressionModel) -> np.ndarray:
    """Standard errors of (intercept, coefficients) for an empirical fit."""
    X = dist.samples
    design = np.column_stack([np.ones(X.shape[0]), model.basis(X)])
    resid = X[:, model.target] - model.predict(X)
    dof = max(X.shape[0] - design.shape[1], 1)
    sigma2 = float(resid @ resid) / dof
    cov = sigma2 * np.linalg.inv(design.T @ design)
    return np.sqrt(np.diag(cov))


# ---------------------------------------------------------------------------
# shift tests


def conditional_shift_test(
    d_i: InducedDistribution,
    d_0: InducedDistribution,
    target: int,
    given,
    tol: float = EXACT_TOL,
    family: str = "linear",
    degree: int = 1,
    z_threshold: float = Z_THRESHOLD,
) -> bool:
    """True iff the conditional law of ``target`` given ``given`` differs
    between the two distributions. Exact linear-Gaussian mode compares the
    closed-form intercepts; empirical mode compares fitted coefficient vectors
    against their standard errors."""
    if d_i.n != d_0.n:
        raise ObservationError("distributions are over different node sets")
    given = tuple(int(g) for g in given)
    if d_i.exact and d_0.exact:
        mu_i, mu_0 = d_i.mean, d_0.mean
        if not given:
            return bool(abs(mu_i[target] - mu_0[target]) > tol)
        idx = list(given)
        sig = d_0.cov[np.ix_(idx, idx)]
        cond = np.linalg.cond(sig)
        if not np.isfinite(cond) or cond > 1e12:
            raise SingularRegressorsError(cond)
        beta = np.linalg.solve(sig, d_0.cov[idx, target])
        delta = mu_i - mu_0
        return bool(abs(delta[target] - delta[idx] @ beta) > tol)

    fit_i = fit_conditional(d_i, target, given, family, degree)
    fit_0 = fit_conditional(d_0, target, given, family, degree)
    se_i = _ols_se(d_i, fit_i)
    se_0 = _ols_se(d_0, fit_0)
    se = np.sqrt(se_i**2 + se_0**2)
    diff = np.abs(fit_i.coeff_vector() - fit_0.coeff_vector())
    if family == "linear":
        # coefficients are shift-invariant in the linear-Gaussian case: the
        # intercept carries the whole signal
        return bool(diff[0] / max(se[0], 1e-300) > z_threshold)
    z = diff / np.maximum(se, 1e-300)
    return bool(z.max() > z_threshold)


def mean_shift_test(
    d_prime: InducedDistribution,
    d_0: InducedDistribution,
    node: int,
    tol: float = EXACT_TOL,
    z_threshold: float = Z_THRESHOLD,
) -> bool:
    """True iff ``E[node]`` differs between the two distributions."""
    if d_prime.n != d_0.n:
        raise ObservationError("distributions are over different node sets")
    if d_prime.exact and d_0.exact:
        return bool(abs(d_prime.mean[node] - d_0.mean[node]) > tol)
    m1 = d_prime.mean_vector()[node]
    m0 = d_0.mean_vector()[node]
    v1 = d_prime.var_of(node) / max(d_prime.count, 1)
    v0 = d_0.var_of(node) / max(d_0.count, 1)
    z = abs(m1 - m0) / max(np.sqrt(v1 + v0), 1e-300)
    return bool(z > z_threshold)


def faithfulness_diagnostic(delta_m, sigma, sigma_mv, delta_v, tol: float = EXACT_TOL) -> bool:
    """True (faithful) iff the intervention shift stays visible to the
    conditional test: ``|delta_V - delta_M^T Sigma^{-1} sigma_{M,V}| > tol``."""
    sigma = np.asarray(sigma, dtype=float)
    cond = np.linalg.cond(sigma)
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularRegressorsError(cond)
    delta_m = np.asarray(delta_m, dtype=float)
    proj = float(delta_m @ np.linalg.solve(sigma, np.asarray(sigma_mv, dtype=float)))
    return bool(abs(float(delta_v) - proj) > tol)


# ---------------------------------------------------------------------------
# per-node function registry (closed parametric families)


@dataclass(frozen=True)
class Registry:
    """Which parametric family each node's structural function belongs to;
    the discovery regressions fit within these families."""

    families: tuple[tuple[str, int], ...]

    @classmethod
    def linear(cls, n: int) -> "Registry":
        return cls(tuple(("linear", 1) for _ in range(n + 1)))

    @classmethod
    def from_scm(cls, scm) -> "Registry":
        if isinstance(scm, LinearScm):
            return cls.linear(scm.n)
        fams = []
        for f in scm.functions:
            if f.is_linear:
                fams.append(("linear", 1))
            else:
                fams.append(("poly", f.degree))
        return cls(tuple(fams))

    def family_of(self, node: int) -> tuple[str, int]:
        return self.families[node]

    @property
    def all_linear(self) -> bool:
        return all(f == "linear" for f, _ in self.families)
