"""
Communication graphs.

Static directed/undirected graphs on nodes ``0..n-1``, random generators
(Erdos-Renyi, random attachment trees), BFS spanning trees, diameter and
strong connectivity, plus a small edge-list text format.

Neighbor iteration is always in ascending node id so every traversal is
reproducible.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np


class TopologyError(ValueError):
    """Raised for malformed, disconnected or ungeneratable topologies."""


@dataclass(frozen=True)
class Graph:
    """
    A static communication graph.

    ``edges`` holds ordered pairs ``(i, j)`` meaning ``i`` can send to ``j``.
    Undirected graphs store both orientations of every link.
    """

    n: int
    directed: bool
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.n < 1:
            raise TopologyError(f"graph needs at least one node, got n={self.n}")
        edges = frozenset((int(i), int(j)) for i, j in self.edges)
        for i, j in edges:
            if i == j:
                raise TopologyError(f"self-loop at node {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise TopologyError(f"edge ({i}, {j}) outside node range 0..{self.n - 1}")
        if not self.directed:
            missing = [(i, j) for i, j in edges if (j, i) not in edges]
            if missing:
                raise TopologyError(f"undirected graph lacks reverse of edge {missing[0]}")
        object.__setattr__(self, "edges", edges)

    @classmethod
    def undirected(cls, n: int, pairs) -> "Graph":
        """Build an undirected graph from unordered pairs."""
        edges = set()
        for i, j in pairs:
            edges.add((i, j))
            edges.add((j, i))
        return cls(n, False, frozenset(edges))

    @classmethod
    def directed_from(cls, n: int, pairs) -> "Graph":
        return cls(n, True, frozenset(pairs))

    @cached_property
    def _out(self) -> tuple:
        out = [[] for _ in range(self.n)]
        for i, j in self.edges:
            out[i].append(j)
        return tuple(tuple(sorted(a)) for a in out)

    @cached_property
    def _in(self) -> tuple:
        inn = [[] for _ in range(self.n)]
        for i, j in self.edges:
            inn[j].append(i)
        return tuple(tuple(sorted(a)) for a in inn)

    def out_neighbors(self, i: int) -> tuple:
        return self._out[i]

    def in_neighbors(self, i: int) -> tuple:
        return self._in[i]

    def neighbors(self, i: int) -> tuple:
        """Neighbors of ``i`` in an undirected graph (ascending id)."""
        return self._out[i]

    def degree(self, i: int) -> int:
        return len(self._out[i])

    def undirected_pairs(self) -> list:
        """Sorted unordered pairs ``(i, j)`` with ``i < j`` (undirected graphs)."""
        return sorted({(min(i, j), max(i, j)) for i, j in self.edges})

    @property
    def num_links(self) -> int:
        """Undirected link count, or directed edge count."""
        return len(self.edges) if self.directed else len(self.edges) // 2

    def is_tree(self) -> bool:
        return (not self.directed) and self.num_links == self.n - 1 and is_strongly_connected(self)


@dataclass(frozen=True)
class SpanningTree:
    """An undirected tree over all nodes of some base graph, rooted at ``root``."""

    graph: Graph
    root: int
    parent: dict

    @property
    def n(self) -> int:
        return self.graph.n

    def edge_pairs(self) -> list:
        return self.graph.undirected_pairs()


def _bfs_distances(g: Graph, source: int) -> list:
    dist = [-1] * g.n
    dist[source] = 0
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v in g.out_neighbors(u):
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def is_strongly_connected(g: Graph) -> bool:
    """True iff every ordered pair of nodes is joined by a directed path."""
    if g.n == 1:
        return True
    if min(_bfs_distances(g, 0)) < 0:
        return False
    reverse = Graph(g.n, True, frozenset((j, i) for i, j in g.edges))
    return min(_bfs_distances(reverse, 0)) >= 0


def diameter(g: Graph) -> int:
    """
    Largest shortest-path length (in edges) over all ordered node pairs.

    Raises
    ------
    TopologyError
        If ``g`` is not (strongly) connected.
    """
    best = 0
    for s in range(g.n):
        dist = _bfs_distances(g, s)
        if min(dist) < 0:
            raise TopologyError(f"graph is not strongly connected: node {dist.index(-1)} unreachable from {s}")
        best = max(best, max(dist))
    return best


def bfs_spanning_tree(g: Graph, root: int = 0) -> SpanningTree:
    """
    Breadth-first spanning tree of an undirected connected graph.

    Each discovered node is attached to its first discoverer; neighbors are
    scanned in ascending id, so the result is a deterministic function of
    ``(g, root)``.
    """
    if g.directed:
        raise TopologyError("bfs_spanning_tree needs an undirected graph")
    if not 0 <= root < g.n:
        raise TopologyError(f"root {root} outside 0..{g.n - 1}")
    parent = {root: None}
    pairs = []
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for v in g.neighbors(u):
            if v not in parent:
                parent[v] = u
                pairs.append((u, v))
                queue.append(v)
    if len(parent) < g.n:
        unreachable = min(set(range(g.n)) - set(parent))
        raise TopologyError(f"graph is disconnected: node {unreachable} unreachable from root {root}")
    return SpanningTree(Graph.undirected(g.n, pairs), root, parent)


def tree_from_graph(g: Graph, root: int = 0) -> SpanningTree:
    """Wrap an undirected tree as a :class:`SpanningTree` (validating it)."""
    if not g.is_tree():
        raise TopologyError("graph is not a tree")
    return bfs_spanning_tree(g, root)


def generate_random_tree(n: int, seed) -> SpanningTree:
    """Random labelled tree: node ``k`` attaches to a uniform node ``< k``."""
    if n < 1:
        raise TopologyError(f"need n >= 1, got {n}")
    rng = np.random.default_rng(seed)
    parent = {0: None}
    pairs = []
    for k in range(1, n):
        u = int(rng.integers(0, k))
        parent[k] = u
        pairs.append((u, k))
    return SpanningTree(Graph.undirected(n, pairs), 0, parent)


def generate_erdos_renyi(n: int, seed, max_retries: int = 1000) -> Graph:
    """
    Connected Erdos-Renyi graph with link probability ``min(1, 2 ln n / n)``.

    Disconnected draws are discarded and redrawn from the same generator
    stream, up to ``max_retries`` times.
    """
    if n < 2:
        raise TopologyError(f"need n >= 2, got {n}")
    prob = min(1.0, 2.0 * math.log(n) / n)
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    for _ in range(max_retries):
        keep = rng.random(iu.size) < prob
        g = Graph.undirected(n, zip(iu[keep].tolist(), ju[keep].tolist()))
        if is_strongly_connected(g):
            return g
    raise TopologyError(f"no connected Erdos-Renyi graph on {n} nodes after {max_retries} draws")


def path_graph(n: int) -> Graph:
    return Graph.undirected(n, [(i, i + 1) for i in range(n - 1)])


def star_graph(n: int) -> Graph:
    return Graph.undirected(n, [(0, i) for i in range(1, n)])


def ring_graph(n: int, directed: bool = False) -> Graph:
    pairs = [(i, (i + 1) % n) for i in range(n)] if n > 1 else []
    if directed:
        return Graph.directed_from(n, pairs)
    return Graph.undirected(n, pairs)


def complete_graph(n: int) -> Graph:
    return Graph.undirected(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def generate_strongly_connected_digraph(n: int, seed, extra_prob: float | None = None) -> Graph:
    """
    Random strongly connected digraph: a shuffled Hamiltonian cycle plus
    independent extra arcs with probability ``extra_prob``.
    """
    rng = np.random.default_rng(seed)
    if n == 1:
        return Graph(1, True, frozenset())
    if extra_prob is None:
        extra_prob = float(rng.uniform(0.0, 0.3))
    order = rng.permutation(n).tolist()
    arcs = {(order[k], order[(k + 1) % n]) for k in range(n)}
    mask = rng.random((n, n)) < extra_prob
    for i, j in zip(*np.nonzero(mask)):
        if i != j:
            arcs.add((int(i), int(j)))
    return Graph.directed_from(n, arcs)


def write_edge_list(g: Graph, path) -> None:
    """Write ``n <count> directed <0|1>`` then one ``i j`` pair per line."""
    pairs = sorted(g.edges) if g.directed else g.undirected_pairs()
    lines = [f"n {g.n} directed {int(g.directed)}"]
    lines += [f"{i} {j}" for i, j in pairs]
    Path(path).write_text("\n".join(lines) + "\n")


def read_edge_list(path) -> Graph:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"topology file not found: {path}")
    rows = [ln.split() for ln in path.read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    if not rows or len(rows[0]) != 4 or rows[0][0] != "n" or rows[0][2] != "directed":
        raise TopologyError(f"{path}: first line must be 'n <count> directed <0|1>'")
    n, directed = int(rows[0][1]), rows[0][3] == "1"
    pairs = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise TopologyError(f"{path}:{lineno}: expected 'i j', got {' '.join(row)!r}")
        pairs.append((int(row[0]), int(row[1])))
    return Graph.directed_from(n, pairs) if directed else Graph.undirected(n, pairs)
