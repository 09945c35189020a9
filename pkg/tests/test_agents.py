import math

import numpy as np
import pytest

from stratdag import (
    CostError,
    CustomMechanism,
    HeteroScale,
    LinearCost,
    LinearMechanism,
    LinearScm,
    NoiseSpec,
    SeparableCost,
    best_response_isolation,
    best_response_linear_cost,
    best_response_numeric,
    best_response_quadratic,
    population_best_response,
)
from stratdag.mechanisms import MechanismError

from conftest import example_proxy, random_linear_dag


def identity_scm(n):
    return LinearScm(n, np.zeros((n + 1, n + 1)), tuple(NoiseSpec.gaussian() for _ in range(n + 1)))


def sphere_grid_oracle(scm, c_diag, w, b, seed=0):
    """Search over the cost sphere 1/2 a^T C a = b (the best response
    saturates the budget): dense direction sampling plus shrinking-cap
    refinement around the incumbent. Pure search, no use of the closed form."""
    rng = np.random.default_rng(seed)
    n = scm.n
    effects = (scm.B.T @ w)[:n]

    def on_sphere(d):
        return d * np.sqrt(2.0 * b / (d**2 @ c_diag))[:, None]

    best = None
    best_score = -np.inf
    spread = 1.0
    for stage in range(6):
        d = rng.standard_normal((300_000, n))
        if best is not None:
            d = best[None, :] + spread * d
        a = on_sphere(d)
        scores = a @ effects
        i = int(np.argmax(scores))
        if scores[i] > best_score:
            best_score = scores[i]
            best = a[i]
        spread *= 0.15
    return best


class TestCostFamilies:
    def test_quadratic_is_class1(self):
        cost = SeparableCost.quadratic([1.0, 2.0])
        assert cost.is_class1 and cost.is_quadratic and cost.is_homogeneous

    def test_power_with_linear_term_is_not_class1(self):
        cost = SeparableCost.power([((1.0, 2.0),), ((3.0, 1.0),)])
        assert not cost.is_class1

    def test_heterogeneous_scale(self):
        cost = SeparableCost.quadratic([2.0, 2.0], scales=(HeteroScale(1.0, ((0, 0.5),)), None))
        x = np.array([[2.0, 0.0, 0.0]])
        assert not cost.is_homogeneous
        # kappa_1 = 1 + 0.5 * x1^2 = 3 at x1 = 2
        assert cost.value(np.array([[1.0, 1.0]]), x)[0] == pytest.approx(3.0 + 1.0)

    def test_linear_cost_requires_mutable(self):
        with pytest.raises(CostError):
            LinearCost((math.inf, math.inf))

    def test_invalid_terms(self):
        with pytest.raises(CostError):
            SeparableCost.power([((0.0, 2.0),)])
        with pytest.raises(CostError):
            SeparableCost.power([((1.0, 0.5),)])


class TestQuadraticClosedForm:
    def test_identity_scm_budget_saturation(self):
        scm = identity_scm(2)
        br = best_response_quadratic(np.array([1.0, 0.0, 0.0]), scm, np.ones(2), 1.0)
        assert np.allclose(br.a_star, [math.sqrt(2.0), 0.0, 0.0])
        assert br.cost_used == pytest.approx(1.0)

    @pytest.mark.parametrize("alpha2", [0.1, 1.0, 10.0])
    def test_proxy_chain_closed_form(self, alpha2):
        scm = example_proxy(alpha2)
        br = best_response_quadratic(np.array([0.0, 1.0, 0.0]), scm, np.array([2.0, 2.0]), 1.0)
        expected = np.array([alpha2, 1.0, 0.0]) / math.hypot(alpha2, 1.0)
        assert np.abs(br.a_star - expected).max() < 1e-10

    def test_degenerate_direction_flagged(self):
        # w reads a feature no intervention can move: x2 has no ancestors
        A = np.zeros((3, 3))
        A[2, 0] = 1.0
        scm = LinearScm(2, A, tuple(NoiseSpec.gaussian() for _ in range(3)))
        w = np.zeros(3)
        br = best_response_quadratic(w, scm, np.ones(2), 1.0)
        assert br.degenerate and np.allclose(br.a_star, 0.0)

    def test_matches_sphere_grid_oracle(self, rng):
        for trial in range(6):
            scm = random_linear_dag(3, rng)
            c_diag = rng.uniform(0.5, 3.0, 3)
            w = np.concatenate([rng.standard_normal(3), [0.0]])
            br = best_response_quadratic(w, scm, c_diag, 1.0)
            oracle = sphere_grid_oracle(scm, c_diag, w, 1.0, seed=trial)
            assert np.abs(br.a_star[:3] - oracle).max() < 1e-3


class TestLinearCostClosedForm:
    def test_single_edge_argmax(self):
        A = np.zeros((3, 3))
        A[1, 0] = 0.5  # x1 -> x2
        scm = LinearScm(2, A, tuple(NoiseSpec.gaussian() for _ in range(3)))
        w = np.array([0.0, 1.0, 0.0])
        assert np.allclose((scm.B.T @ w)[:2], [0.5, 1.0])
        br = best_response_linear_cost(w, scm, [1.0, 1.0], 1.0)
        assert np.allclose(br.a_star, [0.0, 1.0, 0.0])
        # enumeration oracle over the 2n vertex interventions
        best = max(
            (s * (1.0 / c) * (scm.B.T @ w)[i], s, i)
            for i in range(2)
            for s, c in [(1.0, 1.0), (-1.0, 1.0)]
        )
        assert best[2] == 1 and best[1] == 1.0

    def test_zero_direction_tie_breaks_low_index(self):
        scm = identity_scm(3)
        w = np.zeros(4)
        br = best_response_linear_cost(w, scm, [math.inf, 2.0, 4.0], 1.0)
        assert br.tie_break
        assert np.allclose(br.a_star, [0.0, 0.5, 0.0, 0.0])

    def test_immutable_never_intervened(self, rng):
        scm = random_linear_dag(3, rng)
        prices = np.array([math.inf, 1.0, 1.0])
        for _ in range(20):
            w = np.concatenate([rng.standard_normal(3), [0.0]])
            br = best_response_linear_cost(w, scm, prices, 1.0)
            assert br.a_star[0] == 0.0

    def test_sign_antisymmetry(self, rng):
        scm = random_linear_dag(4, rng)
        prices = rng.uniform(0.5, 2.0, 4)
        for _ in range(20):
            w = np.concatenate([rng.standard_normal(4), [0.0]])
            plus = best_response_linear_cost(w, scm, prices, 1.0)
            minus = best_response_linear_cost(-w, scm, prices, 1.0)
            if not plus.tie_break:
                assert np.allclose(plus.a_star, -minus.a_star)


class TestIsolation:
    def test_quadratic_root(self):
        cost = SeparableCost.power([((1.0, 2.0),), ((1.0, 2.0),)])  # a^2
        br = best_response_isolation(0, cost, 4.0)
        assert br.a_star[0] == pytest.approx(2.0)
        assert br.a_star[1] == 0.0 and br.a_star[2] == 0.0

    def test_linear_root(self):
        br = best_response_isolation(1, LinearCost((1.0, 3.0)), 6.0)
        assert br.a_star[1] == pytest.approx(2.0)

    def test_quartic_plus_quadratic_vs_bisection(self):
        cost = SeparableCost.power([((1.0, 4.0), (1.0, 2.0))])
        br = best_response_isolation(0, cost, 20.0)
        lo, hi = 0.0, 10.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid**4 + mid**2 < 20.0:
                lo = mid
            else:
                hi = mid
        assert br.a_star[0] == pytest.approx(0.5 * (lo + hi), abs=1e-9)

    def test_heterogeneous_rejected(self):
        cost = SeparableCost.quadratic([1.0], scales=(HeteroScale(1.0, ((0, 1.0),)),))
        with pytest.raises(CostError):
            best_response_isolation(0, cost, 1.0)


class TestNumericSolver:
    def test_matches_quadratic_closed_form(self, rng):
        for trial in range(5):
            scm = random_linear_dag(3, rng)
            c_diag = rng.uniform(0.5, 3.0, 3)
            w = np.concatenate([rng.standard_normal(3), [0.0]])
            closed = best_response_quadratic(w, scm, c_diag, 1.0)
            if closed.degenerate:
                continue
            cost = SeparableCost.quadratic(c_diag)
            mech = LinearMechanism(tuple(w))
            # route through the generic engine with an opaque score callable
            opaque = CustomMechanism(mech.score, mech.grad)
            num = best_response_numeric(opaque, scm, cost, 1.0, u=rng.standard_normal(4), seed=trial)
            assert np.abs(num.a_star - closed.a_star).max() < 1e-5

    def test_constant_mechanism_stays_home(self):
        scm = identity_scm(2)
        flat = CustomMechanism(lambda X: np.zeros(X.shape[0]), lambda X: np.zeros_like(X))
        br = best_response_numeric(flat, scm, SeparableCost.quadratic([1.0, 1.0]), 1.0, u=np.zeros(3))
        assert np.allclose(br.a_star, 0.0)

    def test_proxy_intervention_ratio(self):
        # the induced ratio a1/a2 equals the proxy coupling strength
        alpha2 = 3.0
        scm = example_proxy(alpha2)
        mech = LinearMechanism((0.0, 1.0, 0.0))
        opaque = CustomMechanism(mech.score, mech.grad)
        br = best_response_numeric(opaque, scm, SeparableCost.quadratic([2.0, 2.0]), 1.0, u=np.zeros(3), seed=4)
        assert br.a_star[0] / br.a_star[1] == pytest.approx(alpha2, abs=1e-4)

    def test_power_cost_budget_saturation(self, rng):
        scm = random_linear_dag(2, rng)
        cost = SeparableCost.power([((1.0, 4.0), (0.5, 2.0)), ((1.0, 2.0),)])
        w = np.array([1.0, 0.5, 0.0])
        br = best_response_numeric(LinearMechanism(tuple(w)), scm, cost, 1.0, u=np.zeros(3), seed=2)
        assert br.cost_used <= 1.0 + 1e-8
        assert br.cost_used == pytest.approx(1.0, abs=1e-5)


class TestProperties:
    def test_budget_feasibility_and_saturation(self, rng):
        for trial in range(20):
            scm = random_linear_dag(3, rng)
            w = np.concatenate([rng.standard_normal(3), [0.0]])
            c_diag = rng.uniform(0.5, 2.0, 3)
            br = best_response_quadratic(w, scm, c_diag, 1.0)
            assert br.cost_used <= 1.0 + 1e-8
            if not br.degenerate:
                assert br.cost_used == pytest.approx(1.0, abs=1e-9)
            prices = rng.uniform(0.5, 2.0, 3)
            brl = best_response_linear_cost(w, scm, prices, 1.0)
            assert brl.cost_used <= 1.0 + 1e-8

    def test_class1_target_always_intervened(self, rng):
        # deploying f = x_i under a class-1 cost guarantees a nonzero push on i
        for trial in range(20):
            scm = random_linear_dag(4, rng)
            i = int(rng.integers(0, 4))
            w = np.zeros(5)
            w[i] = 1.0
            br = best_response_quadratic(w, scm, rng.uniform(0.5, 2.0, 4), 1.0)
            assert abs(br.a_star[i]) > 1e-6

    def test_class1_support_restricted_to_ancestors(self, rng):
        for trial in range(20):
            scm = random_linear_dag(4, rng)
            g = scm.graph()
            i = int(rng.integers(0, 4))
            w = np.zeros(5)
            w[i] = 1.0
            br = best_response_quadratic(w, scm, rng.uniform(0.5, 2.0, 4), 1.0)
            allowed = g.ancestors(i) | {i}
            for k in range(4):
                if k not in allowed:
                    assert abs(br.a_star[k]) < 1e-12

    def test_quadratic_sign_antisymmetry(self, rng):
        scm = random_linear_dag(3, rng)
        for _ in range(10):
            w = np.concatenate([rng.standard_normal(3), [0.0]])
            plus = best_response_quadratic(w, scm, np.ones(3), 1.0)
            minus = best_response_quadratic(-w, scm, np.ones(3), 1.0)
            assert np.allclose(plus.a_star, -minus.a_star)

    def test_score_gain_nonnegative(self, rng):
        scm = random_linear_dag(3, rng)
        for _ in range(10):
            w = np.concatenate([rng.standard_normal(3), [0.0]])
            assert best_response_quadratic(w, scm, np.ones(3), 1.0).achieved_score >= 0.0
            assert best_response_linear_cost(w, scm, np.ones(3), 1.0).achieved_score >= 0.0


class TestPopulation:
    def test_shared_response_broadcast(self, rng):
        scm = random_linear_dag(3, rng)
        w = np.concatenate([rng.standard_normal(3), [0.0]])
        cost = SeparableCost.quadratic(np.ones(3))
        u = scm.draw_noise(40, 0)
        a = population_best_response(LinearMechanism(tuple(w)), scm, cost, 1.0, u)
        assert a.shape == (40, 4)
        assert np.allclose(a, a[0])
        # SeparableCost.quadratic(c) is 1/2 a^T diag(c) a
        closed = best_response_quadratic(w, scm, np.ones(3), 1.0)
        assert np.allclose(a[0], closed.a_star, atol=1e-12)

    def test_heterogeneous_cost_varies_by_agent(self, rng):
        scm = random_linear_dag(2, rng)
        cost = SeparableCost.quadratic([2.0, 2.0], scales=(HeteroScale(1.0, ((1, 2.0),)), None))
        w = np.concatenate([np.array([1.0, 0.5]), [0.0]])
        u = scm.draw_noise(30, 1)
        a = population_best_response(LinearMechanism(tuple(w)), scm, cost, 1.0, u)
        assert a.std(axis=0).max() > 1e-3
        x = scm.evaluate(u, np.zeros(3))
        assert np.all(cost.value(a[:, :2], x) <= 1.0 + 1e-6)


def test_mechanism_weight_validation():
    with pytest.raises(MechanismError):
        LinearMechanism((1.0, 0.5))
