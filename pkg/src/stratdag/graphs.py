"""Node-indexed graph machinery: skeletons, partial orientation, ancestor
queries, topological order and DOT export.

Nodes are positional integers ``0 .. n``: indices ``0 .. n-1`` are the feature
nodes and index ``n`` is reserved for the outcome node, so matrices and sample
columns align by position.
"""

from __future__ import annotations

from dataclasses import dataclass, field


class GraphError(ValueError):
    pass


class CycleError(GraphError):
    def __init__(self, cycle: list[int]):
        self.cycle = cycle
        super().__init__("orientation would close the directed cycle " + " -> ".join(map(str, cycle)))


def node_name(v: int, n: int) -> str:
    return "y" if v == n else f"x{v + 1}"


@dataclass(frozen=True)
class Skeleton:
    """Undirected edge set over feature nodes ``0..n-1`` plus outcome node ``n``."""

    n: int
    edges: frozenset[frozenset[int]]

    @classmethod
    def from_pairs(cls, n: int, pairs) -> "Skeleton":
        edges = set()
        for a, b in pairs:
            if a == b:
                raise GraphError(f"self edge on node {a}")
            if not (0 <= a <= n and 0 <= b <= n):
                raise GraphError(f"edge ({a}, {b}) references an unknown node (n={n})")
            edges.add(frozenset((a, b)))
        return cls(n=n, edges=frozenset(edges))

    @property
    def y(self) -> int:
        return self.n

    @property
    def nodes(self) -> range:
        return range(self.n + 1)

    def neighbors(self, v: int) -> set[int]:
        self._check(v)
        return {next(iter(e - {v})) for e in self.edges if v in e}

    def has_edge(self, a: int, b: int) -> bool:
        return frozenset((a, b)) in self.edges

    def _check(self, v: int) -> None:
        if not (0 <= v <= self.n):
            raise GraphError(f"unknown node id {v} (n={self.n})")


@dataclass
class OrientedGraph:
    """A skeleton whose edges are progressively moved from the unoriented set
    to the directed set. The directed portion is kept acyclic at every step so
    a faulty orientation fails at the call that introduces it."""

    skeleton: Skeleton
    directed: set[tuple[int, int]] = field(default_factory=set)
    unoriented: set[frozenset[int]] = field(default_factory=set)

    def __post_init__(self):
        if not self.directed and not self.unoriented:
            self.unoriented = set(self.skeleton.edges)
        self._validate_partition()

    def _validate_partition(self) -> None:
        covered = {frozenset(e) for e in self.directed} | set(self.unoriented)
        if covered != set(self.skeleton.edges) or len(self.directed) + len(self.unoriented) != len(self.skeleton.edges):
            raise GraphError("directed and unoriented sets do not partition the skeleton edges")

    @property
    def n(self) -> int:
        return self.skeleton.n

    @property
    def y(self) -> int:
        return self.skeleton.n

    def copy(self) -> "OrientedGraph":
        return OrientedGraph(self.skeleton, set(self.directed), set(self.unoriented))

    def parents(self, v: int) -> set[int]:
        self.skeleton._check(v)
        return {a for a, b in self.directed if b == v}

    def children(self, v: int) -> set[int]:
        self.skeleton._check(v)
        return {b for a, b in self.directed if a == v}

    def unoriented_neighbors(self, v: int) -> set[int]:
        self.skeleton._check(v)
        return {next(iter(e - {v})) for e in self.unoriented if v in e}

    def ancestors(self, v: int) -> set[int]:
        """Nodes with a directed path to ``v``, using directed edges only."""
        self.skeleton._check(v)
        out: set[int] = set()
        stack = [v]
        while stack:
            node = stack.pop()
            for p in self.parents(node):
                if p not in out:
                    out.add(p)
                    stack.append(p)
        return out

    def descendants(self, v: int) -> set[int]:
        self.skeleton._check(v)
        out: set[int] = set()
        stack = [v]
        while stack:
            node = stack.pop()
            for c in self.children(node):
                if c not in out:
                    out.add(c)
                    stack.append(c)
        return out

    def orient(self, src: int, dst: int) -> None:
        """Move the unoriented edge ``src - dst`` to the directed set as
        ``src -> dst``. Fails if the edge is absent from the unoriented set or
        the new arc would close a directed cycle."""
        edge = frozenset((src, dst))
        if edge not in self.unoriented:
            raise GraphError(
                f"edge {node_name(src, self.n)} - {node_name(dst, self.n)} is not an unoriented edge"
            )
        if src in self.descendants(dst) or src == dst:
            cycle = self._path(dst, src) + [dst]
            raise CycleError([node_name(v, self.n) for v in cycle])
        self.unoriented.discard(edge)
        self.directed.add((src, dst))

    def _path(self, src: int, dst: int) -> list[int]:
        # directed path src -> ... -> dst, used only for cycle reporting
        prev = {src: None}
        stack = [src]
        while stack:
            node = stack.pop()
            if node == dst:
                path = [node]
                while prev[path[-1]] is not None:
                    path.append(prev[path[-1]])
                return path[::-1]
            for c in self.children(node):
                if c not in prev:
                    prev[c] = node
                    stack.append(c)
        return [src, dst]

    @property
    def fully_oriented(self) -> bool:
        return not self.unoriented

    def topological_order(self) -> list[int]:
        """Topological order of a fully oriented graph; isolated nodes included."""
        if not self.fully_oriented:
            raise GraphError(f"{len(self.unoriented)} unoriented edges remain")
        indeg = {v: 0 for v in self.skeleton.nodes}
        for _, b in self.directed:
            indeg[b] += 1
        ready = sorted(v for v, d in indeg.items() if d == 0)
        order: list[int] = []
        while ready:
            v = ready.pop(0)
            order.append(v)
            for c in sorted(self.children(v)):
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
        if len(order) != self.n + 1:
            raise CycleError(sorted(set(self.skeleton.nodes) - set(order)))
        return order

    def edge_set(self) -> frozenset[tuple[int, int]]:
        return frozenset(self.directed)

    def to_dot(self) -> str:
        """DOT export: directed edges solid, unoriented edges dashed."""
        lines = ["digraph g {"]
        for v in self.skeleton.nodes:
            lines.append(f'  {node_name(v, self.n)};')
        for a, b in sorted(self.directed):
            lines.append(f"  {node_name(a, self.n)} -> {node_name(b, self.n)};")
        for e in sorted(self.unoriented, key=sorted):
            a, b = sorted(e)
            lines.append(f"  {node_name(a, self.n)} -> {node_name(b, self.n)} [dir=none, style=dashed];")
        lines.append("}")
        return "\n".join(lines) + "\n"


def oriented_from_dag(n: int, arcs) -> OrientedGraph:
    """Build a fully oriented graph from a list of directed arcs."""
    arcs = list(arcs)
    seen = set()
    for a, b in arcs:
        if (b, a) in seen:
            raise CycleError([node_name(a, n), node_name(b, n), node_name(a, n)])
        seen.add((a, b))
    skel = Skeleton.from_pairs(n, arcs)
    g = OrientedGraph(skel)
    for a, b in arcs:
        g.orient(a, b)
    return g
