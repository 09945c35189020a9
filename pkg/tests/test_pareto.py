import math

import numpy as np
import pytest

from stratdag import (
    LinearCost,
    LinearScm,
    NodeFunction,
    NoiseSpec,
    ParetoPoint,
    Registry,
    SeparableCost,
    SimulatorEnvironment,
    chain_scm,
    discover_per_node,
    explore_linear,
    identify_scm,
    linear_cost_front,
    min_mse_given_intervention,
    natural_distribution,
    offline_front,
    pareto_filter,
    risk_improvement,
)
from stratdag.pareto import InterventionCatalog, ParetoError, nullspace_probe
from stratdag.scm import AdditiveScm

from conftest import all_ancestor_dag, example_proxy, random_linear_dag

UNIT_QUAD2 = SeparableCost.quadratic([2.0, 2.0])  # a1^2 + a2^2


def dominance_oracle(points):
    # independent double-loop over explicit domination triples
    keep = []
    for i, p in enumerate(points):
        dominated = False
        for j, q in enumerate(points):
            if i == j:
                continue
            le = q.risk <= p.risk and q.improvement >= p.improvement
            strict = q.risk < p.risk or q.improvement > p.improvement
            if le and strict:
                dominated = True
                break
        if not dominated:
            keep.append(p)
    return keep


class TestParetoFilter:
    def test_strict_dominance(self):
        pts = [ParetoPoint((0.0,), 1.0, 1.0), ParetoPoint((0.0,), 2.0, 0.5)]
        front = pareto_filter(pts)
        assert len(front) == 1 and front.points[0].risk == 1.0

    def test_incomparable_kept(self):
        pts = [ParetoPoint((0.0,), 1.0, 1.0), ParetoPoint((0.0,), 0.5, 0.2)]
        assert len(pareto_filter(pts)) == 2

    def test_random_cloud_matches_oracle(self, rng):
        pts = [ParetoPoint((0.0,), float(r), float(i)) for r, i in rng.random((100, 2))]
        front = pareto_filter(pts)
        assert sorted((p.risk, p.improvement) for p in front) == sorted(
            (p.risk, p.improvement) for p in dominance_oracle(pts)
        )
        front.validate()


class TestIdentifyScm:
    def test_linear_chain_exact(self):
        scm = chain_scm([0.8, -0.6, 1.2])
        d0 = natural_distribution(scm, "exact")
        model = identify_scm(scm.graph(), d0)
        assert np.abs(model.A - scm.A).max() < 1e-8
        assert np.abs(model.noise_vars() - scm.noise_vars()).max() < 1e-8

    def test_parentless_node_keeps_marginal_variance(self, rng):
        scm = random_linear_dag(4, rng)
        d0 = natural_distribution(scm, "exact")
        model = identify_scm(scm.graph(), d0)
        for v in range(scm.n + 1):
            if not scm.parents(v):
                assert model.noise_vars()[v] == pytest.approx(d0.cov[v, v], abs=1e-10)

    def test_polynomial_from_samples(self):
        f = NodeFunction((0,), ((0.5, 0.8),))
        scm = AdditiveScm(1, (NodeFunction((), ()), f), (NoiseSpec.gaussian(0, 1), NoiseSpec.gaussian(0, 0.4)))
        d0 = natural_distribution(scm, "empirical", 100_000, seed=1)
        model = identify_scm(scm.graph(), d0, Registry.from_scm(scm))
        got = model.functions[1].coeffs[0]
        assert abs(got[0] - 0.5) < 0.02 and abs(got[1] - 0.8) < 0.02

    def test_unoriented_graph_rejected(self):
        scm = chain_scm([1.0])
        from stratdag import OrientedGraph

        g = OrientedGraph(scm.graph().skeleton)
        with pytest.raises(ParetoError):
            identify_scm(g, natural_distribution(scm, "exact"))


class TestRiskImprovement:
    def test_parent_only_mechanism_is_improvement_optimal(self):
        risk, imp = risk_improvement(np.array([1.0, 0.0, 0.0]), example_proxy(2.0), UNIT_QUAD2, 1.0)
        assert imp == pytest.approx(1.0)
        assert risk == pytest.approx(1.0)  # var(u_y)

    def test_strong_proxy_scenario_values(self):
        eps = 0.01
        scm = example_proxy(1.0 / eps, v1=1.0 / eps, v2=eps**4, vy=1.0 / eps)
        risk, imp = risk_improvement(np.array([0.0, eps, 0.0]), scm, UNIT_QUAD2, 1.0)
        assert abs(risk - eps**6) < 1e-15
        assert imp >= 1.0 - eps

    def test_null_mechanism(self):
        scm = example_proxy(1.7)
        risk, imp = risk_improvement(np.zeros(3), scm, UNIT_QUAD2, 1.0)
        assert imp == 0.0
        assert risk == pytest.approx(scm.exact_moments()[1][2, 2])

    def test_empirical_agreement(self, rng):
        scm = example_proxy(1.5)
        w = np.array([0.4, 0.7, 0.0])
        exact = risk_improvement(w, scm, UNIT_QUAD2, 1.0)
        emp = risk_improvement(w, scm, UNIT_QUAD2, 1.0, count=200_000, seed=3)
        assert emp[0] == pytest.approx(exact[0], rel=0.05)
        assert emp[1] == pytest.approx(exact[1], abs=0.05)


class TestOfflineFront:
    def test_low_lambda_endpoint_is_risk_minimal(self, rng):
        scm = random_linear_dag(3, rng)
        cost = SeparableCost.quadratic(rng.uniform(0.5, 2.0, 3))
        front = offline_front(scm, cost, 1.0, lambda_grid=(1e-3, 1.0, 10.0), seed=1)
        min_risk_pt = min(front, key=lambda p: p.risk)
        for _ in range(200):
            w = np.concatenate([rng.standard_normal(3) * 2, [0.0]])
            risk, _ = risk_improvement(w, scm, cost, 1.0)
            assert min_risk_pt.risk <= risk + 1e-9

    def test_high_lambda_reaches_max_improvement_on_ancestor_graphs(self, rng):
        for trial in range(3):
            scm = all_ancestor_dag(4, rng)
            c_diag = rng.uniform(1.0, 2.0, 4)
            # normalize the budget so the best attainable improvement is 1
            r = scm.B[scm.n, :4]
            b = 1.0 / (2.0 * float(r @ (r / c_diag)))
            cost = SeparableCost.quadratic(c_diag)
            front = offline_front(scm, cost, b, lambda_grid=(1e-3, 1.0, 1e3), seed=trial)
            top = max(front, key=lambda p: p.improvement)
            assert top.improvement >= 1.0 - 1e-3

    def test_proxy_chain_endpoints_match_closed_forms(self):
        scm = example_proxy(2.0)
        front = offline_front(scm, UNIT_QUAD2, 1.0, seed=0)
        front.validate()
        # the improvement-optimal end approaches the parent-only mechanism
        best_imp = max(front, key=lambda p: p.improvement)
        assert best_imp.improvement >= 1.0 - 1e-3
        risk_p, imp_p = risk_improvement(np.asarray(best_imp.w), scm, UNIT_QUAD2, 1.0)
        assert best_imp.risk == pytest.approx(risk_p, abs=1e-9)
        # the risk-optimal end agrees with the generalized least-squares point
        _, cov = scm.exact_moments()
        w_gls = np.linalg.solve(cov[:2, :2], cov[:2, 2])
        gls_risk, _ = risk_improvement(np.concatenate([w_gls, [0.0]]), scm, UNIT_QUAD2, 1.0)
        assert min(p.risk for p in front) == pytest.approx(gls_risk, abs=1e-8)

    def test_rejects_linear_cost(self):
        with pytest.raises(ParetoError):
            offline_front(example_proxy(1.0), LinearCost((1.0, 1.0)), 1.0)


class TestExploreLinear:
    def test_two_mutable_features_all_found(self):
        scm = example_proxy(2.0)
        env = SimulatorEnvironment(scm, LinearCost((1.0, 3.0)), 1.0, seed=0)
        catalog = explore_linear(env, 2, (1.0, 3.0))
        assert catalog.size == 4
        assert catalog.deployments <= 4
        # natural mean estimated without a natural() call
        assert np.abs(catalog.natural_mean - scm.exact_moments()[0]).max() < 1e-9

    def test_immutable_feature_halves_the_catalog(self):
        scm = example_proxy(2.0)
        env = SimulatorEnvironment(scm, LinearCost((1.0, math.inf)), 1.0, seed=0)
        catalog = explore_linear(env, 2, (1.0, math.inf))
        assert catalog.k_mutable == 1
        assert catalog.size == 2
        assert catalog.deployments == 2

    def test_duplicate_branch_grows_probes_not_catalog(self):
        # identity effects, one immutable feature: the nullspace probe after
        # +-e1 is flat on every mutable coordinate, so the tie-break response
        # reproduces an already-seen distribution
        n = 3
        scm = LinearScm(n, np.zeros((n + 1, n + 1)), tuple(NoiseSpec.gaussian() for _ in range(n + 1)))
        prices = (1.0, 1.0, math.inf)
        env = SimulatorEnvironment(scm, LinearCost(prices), 1.0, seed=0)
        catalog = explore_linear(env, n, prices)
        assert catalog.size == 4  # 2k with k = 2
        duplicates = [
            p
            for p in catalog.probes
            if abs(np.linalg.norm(p) - 1.0) < 1e-9 and abs(p[2]) > 0.99  # the immutable direction
        ]
        assert duplicates, "expected the flat probe to be recorded, not a new shift"
        assert catalog.deployments <= 2 * n

    def test_exploration_accounting_random_instances(self, rng):
        for trial in range(10):
            n = int(rng.integers(2, 7))
            scm = random_linear_dag(n, rng)
            prices = rng.uniform(0.5, 2.0, n)
            k = int(rng.integers(1, n + 1))
            prices[k:] = math.inf
            env = SimulatorEnvironment(scm, LinearCost(tuple(prices)), 1.0, seed=trial)
            catalog = explore_linear(env, n, tuple(prices))
            assert catalog.deployments <= 2 * n
            assert catalog.size == 2 * k

    def test_nullspace_probe_orthogonal(self, rng):
        rows = [rng.standard_normal(5) for _ in range(3)]
        v = nullspace_probe(rows, 5)
        assert np.abs(np.vstack(rows) @ v).max() < 1e-9
        assert np.linalg.norm(v) == pytest.approx(1.0)


def exact_dist_for_intervention(scm, a):
    from stratdag import InducedDistribution

    mean0, cov = scm.exact_moments()
    mean, _ = scm.exact_moments(a)
    return InducedDistribution(n=scm.n, mean=mean, cov=cov, shift=mean - mean0, mechanism={"kind": "oracle"})


def brute_force_front(scm, prices, b):
    """Enumerate all 2k vertex interventions, QP each, dominance-filter."""
    n = scm.n
    mean0 = scm.exact_moments()[0]
    dists = []
    for i in range(n):
        if not math.isfinite(prices[i]):
            continue
        for s in (1.0, -1.0):
            a = np.zeros(n + 1)
            a[i] = s * b / prices[i]
            dists.append(exact_dist_for_intervention(scm, a))
    catalog = InterventionCatalog(dists=dists, probes=[], natural_mean=mean0, k_mutable=len(dists) // 2)
    return linear_cost_front(catalog)


class TestLinearCostFront:
    def test_single_distribution_is_unconstrained_least_squares(self):
        scm = example_proxy(1.5)
        a = np.zeros(3)
        a[0] = 1.0
        catalog = InterventionCatalog(
            dists=[exact_dist_for_intervention(scm, a)],
            probes=[],
            natural_mean=scm.exact_moments()[0],
            k_mutable=1,
        )
        w, risk, res = min_mse_given_intervention(0, catalog)
        d = catalog.dists[0]
        mom = d.second_moment()
        w_ls = np.linalg.solve(mom[:2, :2], mom[:2, 2])
        assert np.abs(w - w_ls).max() < 1e-9
        assert res.active == []

    def test_two_feature_instance_matches_grid(self, rng):
        scm = example_proxy(1.3)
        prices = (1.0, 0.7)
        front = brute_force_front(scm, prices, 1.0)
        # dense grid over mechanisms, classified by induced intervention
        best = {}
        from stratdag.agents import best_response_linear_cost

        for w1 in np.linspace(-3, 3, 121):
            for w2 in np.linspace(-3, 3, 121):
                w = np.array([w1, w2, 0.0])
                br = best_response_linear_cost(w, scm, prices, 1.0)
                d = exact_dist_for_intervention(scm, br.a_star)
                mom = d.second_moment()
                risk = float(w[:2] @ mom[:2, :2] @ w[:2] - 2 * w[:2] @ mom[:2, 2] + mom[2, 2])
                imp = float(d.mean_vector()[2] - scm.exact_moments()[0][2])
                key = round(imp, 9)
                if key not in best or risk < best[key]:
                    best[key] = risk
        for p in front:
            key = round(p.improvement, 9)
            assert key in best
            assert p.risk <= best[key] + 1e-3

    def test_active_constraint_solution_sits_on_boundary(self):
        # cheap-but-weak feature: the unconstrained least squares for its
        # distribution would rather induce the expensive predictive one
        A = np.zeros((3, 3))
        A[2, 0] = 1.5  # x1 drives y strongly
        scm = LinearScm(2, A, (NoiseSpec.gaussian(0, 1), NoiseSpec.gaussian(0, 1), NoiseSpec.gaussian(0, 0.2)))
        prices = (4.0, 0.5)
        dists = []
        for i in range(2):
            for s in (1.0, -1.0):
                a = np.zeros(3)
                a[i] = s / prices[i]
                dists.append(exact_dist_for_intervention(scm, a))
        catalog = InterventionCatalog(dists=dists, probes=[], natural_mean=scm.exact_moments()[0], k_mutable=2)
        any_active = False
        for idx in range(4):
            w, risk, res = min_mse_given_intervention(idx, catalog)
            if res.active:
                any_active = True
                g = dists[res.active[0]].mean_vector()[:2] - dists[idx].mean_vector()[:2]
                assert abs(g @ w) < 1e-8  # constraint holds with equality
        assert any_active

    def test_front_matches_brute_force_on_random_instances(self, rng):
        for trial in range(5):
            n = int(rng.integers(2, 5))
            scm = random_linear_dag(n, rng)
            prices = tuple(rng.uniform(0.5, 2.0, n))
            env = SimulatorEnvironment(scm, LinearCost(prices), 1.0, seed=trial)
            catalog = explore_linear(env, n, prices)
            front = linear_cost_front(catalog)
            oracle = brute_force_front(scm, prices, 1.0)
            got = sorted((round(p.risk, 8), round(p.improvement, 8)) for p in front)
            want = sorted((round(p.risk, 8), round(p.improvement, 8)) for p in oracle)
            assert got == want


class TestPipeline:
    def test_discover_identify_front(self, rng):
        # end to end: discovery, identification, offline front
        scm = random_linear_dag(4, rng)
        cost = SeparableCost.quadratic(rng.uniform(0.5, 2.0, 4))
        env = SimulatorEnvironment(scm, cost, 1.0, mode="exact", seed=0)
        graph, _ = discover_per_node(env, scm.graph().skeleton)
        model = identify_scm(graph, env.natural())
        assert np.abs(model.A - scm.A).max() < 1e-8
        front = offline_front(model, cost, 1.0, lambda_grid=(0.01, 1.0, 100.0), seed=0)
        front.validate()
        for p in front:
            risk, imp = risk_improvement(np.asarray(p.w), scm, cost, 1.0)
            assert risk == pytest.approx(p.risk, abs=1e-6)
            assert imp == pytest.approx(p.improvement, abs=1e-6)
