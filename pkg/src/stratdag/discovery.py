"""Deploy-and-observe graph discovery.

Two drivers work against an abstract environment:

* :func:`discover_per_node` -- top-down root peeling. Deploys ``f = x_i`` for
  every feature up front (marginal cost at zero being zero guarantees node i
  is intervened on in its own deployment), then repeatedly finds a node whose
  conditionals against every remaining neighbor, controlling for its already
  oriented ancestors, match the natural distribution: only subgraph roots
  look like that, because induced interventions land on the node and its
  ancestors only.
* :func:`discover_general` -- bottom-up leaf peeling. For a candidate leaf,
  fit its conditional expectation on its remaining skeleton neighbors from the
  natural distribution, deploy ``x_i - ghat_i(x_P)``, and accept the node as a
  leaf iff no other remaining node's mean moved: with the true structural
  function that mechanism provokes an intervention on the target alone.

Both raise :class:`FaithfulnessViolationError` instead of returning a graph
when the tests leave no admissible node: the observable symptom of a shift
cancelling against its own projection.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .costs import CostSpec
from .graphs import OrientedGraph, Skeleton, node_name
from .mechanisms import IsolationMechanism, Mechanism, unit_mechanism
from .observe import (
    EXACT_TOL,
    Z_THRESHOLD,
    InducedDistribution,
    Registry,
    conditional_shift_test,
    fit_conditional,
    induce,
    mean_shift_test,
    natural_distribution,
)


class FaithfulnessViolationError(RuntimeError):
    def __init__(self, msg, stuck_nodes, session):
        super().__init__(msg)
        self.stuck_nodes = stuck_nodes
        self.session = session


class Environment:
    """Behavioral interface of a deployable population. ``deploy`` increments
    the deployment counter exactly once; ``natural`` does not (the natural
    distribution is treated as given)."""

    deployments: int = 0

    def natural(self) -> InducedDistribution:
        raise NotImplementedError

    def deploy(self, mechanism: Mechanism) -> InducedDistribution:
        raise NotImplementedError


class SimulatorEnvironment(Environment):
    """Population simulated from a ground-truth SCM; each deployment draws a
    fresh agent population from a per-deployment child seed, so runs are
    reproducible given (config, seed)."""

    def __init__(self, scm, cost: CostSpec, budget: float, mode: str = "exact", count: int = 0, seed=None):
        self.scm = scm
        self.cost = cost
        self.budget = budget
        self.mode = mode
        self.count = count
        self._seed_seq = np.random.SeedSequence(seed)
        self.deployments = 0
        self._natural = None

    def natural(self) -> InducedDistribution:
        if self._natural is None:
            self._natural = natural_distribution(
                self.scm, self.mode, self.count, self._seed_seq.spawn(1)[0].entropy
            )
        return self._natural

    def deploy(self, mechanism: Mechanism) -> InducedDistribution:
        self.deployments += 1
        seed = np.random.SeedSequence((self._seed_seq.entropy, self.deployments)).entropy
        return induce(self.scm, mechanism, self.cost, self.budget, self.mode, self.count, seed)


class ReplayEnvironment(Environment):
    """Serves recorded distributions keyed by mechanism description, so the
    drivers can run from files instead of a live simulator."""

    def __init__(self, natural: InducedDistribution, recorded: dict[str, InducedDistribution]):
        self._natural = natural
        self._recorded = recorded
        self.deployments = 0

    @staticmethod
    def key(mechanism: Mechanism) -> str:
        return json.dumps(mechanism.describe(), sort_keys=True)

    def natural(self) -> InducedDistribution:
        return self._natural

    def deploy(self, mechanism: Mechanism) -> InducedDistribution:
        self.deployments += 1
        try:
            return self._recorded[self.key(mechanism)]
        except KeyError:
            raise KeyError(f"no recorded distribution for mechanism {self.key(mechanism)}") from None


@dataclass
class DiscoverySession:
    """Everything a run decided and observed, one record per deployment plus
    one per orientation decision; exportable as JSON lines."""

    skeleton: Skeleton
    graph: OrientedGraph
    oriented: list[int] = field(default_factory=list)
    log: list[dict] = field(default_factory=list)
    deployments_used: int = 0

    def record(self, **entry) -> None:
        self.log.append(entry)

    def to_jsonl(self) -> str:
        return "\n".join(json.dumps(e, sort_keys=True) for e in self.log) + "\n"


def _fmt(nodes, n) -> list[str]:
    return [node_name(v, n) for v in sorted(nodes)]


def discover_per_node(
    env: Environment,
    skeleton: Skeleton,
    registry: Registry | None = None,
    tol: float = EXACT_TOL,
    z_threshold: float = Z_THRESHOLD,
) -> tuple[OrientedGraph, DiscoverySession]:
    """Root-peeling discovery for class-1 costs (zero marginal cost at zero).

    Deploys ``f = x_i`` once per feature (exactly n deployments), then orients
    the whole skeleton from the collected distributions."""
    n = skeleton.n
    registry = registry or Registry.linear(n)
    graph = OrientedGraph(skeleton)
    session = DiscoverySession(skeleton=skeleton, graph=graph)
    d0 = env.natural()

    dists: dict[int, InducedDistribution] = {}
    for i in range(n):
        mech = unit_mechanism(i, n)
        dists[i] = env.deploy(mech)
        session.record(event="deploy", mechanism=mech.describe(), deployment=env.deployments)

    remaining = set(range(n + 1))
    while len(remaining) > 1:
        found_root = None
        for i in sorted(remaining - {skeleton.y}):
            controls = sorted(graph.ancestors(i))
            neighbors = sorted(graph.unoriented_neighbors(i))
            stats = []
            is_root = True
            for v in neighbors:
                fam, deg = registry.family_of(v)
                shifted = conditional_shift_test(
                    dists[i], d0, v, [i] + controls, tol=tol, family=fam, degree=deg, z_threshold=z_threshold
                )
                stats.append({"node": node_name(v, n), "shifted": shifted})
                if shifted:
                    is_root = False
                    break
            session.record(
                event="root_test",
                candidate=node_name(i, n),
                controls=_fmt(controls, n),
                tests=stats,
                decision="root" if is_root else "not_root",
            )
            if is_root:
                found_root = i
                break
        if found_root is not None:
            for v in sorted(graph.unoriented_neighbors(found_root)):
                graph.orient(found_root, v)
            remaining.discard(found_root)
            session.oriented.append(found_root)
            continue
        if skeleton.y not in remaining:
            session.deployments_used = env.deployments
            raise FaithfulnessViolationError(
                "no subgraph root passes the conditional test and the outcome node "
                "is already oriented; a faithfulness violation made some shift invisible. "
                f"Stuck subgraph: {_fmt(remaining, n)}",
                stuck_nodes=sorted(remaining),
                session=session,
            )
        for v in sorted(graph.unoriented_neighbors(skeleton.y)):
            graph.orient(skeleton.y, v)
        remaining.discard(skeleton.y)
        session.oriented.append(skeleton.y)
        session.record(event="y_root", decision="outcome oriented by elimination")
    session.deployments_used = env.deployments
    return graph, session


def discover_general(
    env: Environment,
    skeleton: Skeleton,
    registry: Registry | None = None,
    tol: float = EXACT_TOL,
    z_threshold: float = Z_THRESHOLD,
) -> tuple[OrientedGraph, DiscoverySession]:
    """Leaf-peeling discovery for general strictly-increasing separable costs
    on additive models. Deployments are cached per (candidate, neighbor-set),
    so retesting a candidate after the subgraph shrank only redeploys when its
    fitted regressor set changed; at most n(n-1)/2 deployments are needed."""
    n = skeleton.n
    registry = registry or Registry.linear(n)
    graph = OrientedGraph(skeleton)
    session = DiscoverySession(skeleton=skeleton, graph=graph)
    d0 = env.natural()

    cache: dict[tuple[int, tuple[int, ...]], InducedDistribution] = {}
    remaining = set(range(n + 1))
    while len(remaining) > 1:
        found_leaf = None
        for i in sorted(remaining - {skeleton.y}):
            neighbors = tuple(sorted(graph.unoriented_neighbors(i)))
            key = (i, neighbors)
            if key not in cache:
                fam, deg = registry.family_of(i)
                ghat = fit_conditional(d0, i, neighbors, family=fam, degree=deg) if neighbors else None
                mech = IsolationMechanism(target=i, model=ghat, n_nodes=n + 1)
                cache[key] = env.deploy(mech)
                session.record(
                    event="deploy", mechanism=mech.describe(), deployment=env.deployments, candidate=node_name(i, n)
                )
            dist = cache[key]
            stats = []
            is_leaf = True
            for v in sorted(remaining - {i}):
                shifted = mean_shift_test(dist, d0, v, tol=tol, z_threshold=z_threshold)
                stats.append({"node": node_name(v, n), "shifted": shifted})
                if shifted:
                    is_leaf = False
                    break
            session.record(
                event="leaf_test",
                candidate=node_name(i, n),
                neighbors=_fmt(neighbors, n),
                tests=stats,
                decision="leaf" if is_leaf else "not_leaf",
            )
            if is_leaf:
                found_leaf = i
                break
        if found_leaf is not None:
            for v in sorted(graph.unoriented_neighbors(found_leaf)):
                graph.orient(v, found_leaf)
            remaining.discard(found_leaf)
            session.oriented.append(found_leaf)
            continue
        if skeleton.y not in remaining:
            session.deployments_used = env.deployments
            raise FaithfulnessViolationError(
                "no subgraph leaf passes the mean-shift test and the outcome node "
                "is already oriented; a faithfulness violation made some shift invisible. "
                f"Stuck subgraph: {_fmt(remaining, n)}",
                stuck_nodes=sorted(remaining),
                session=session,
            )
        for v in sorted(graph.unoriented_neighbors(skeleton.y)):
            graph.orient(v, skeleton.y)
        remaining.discard(skeleton.y)
        session.oriented.append(skeleton.y)
        session.record(event="y_leaf", decision="outcome oriented by elimination")
    session.deployments_used = env.deployments
    return graph, session
