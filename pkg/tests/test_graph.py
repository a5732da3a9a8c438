import itertools
from collections import deque

import pytest
from hypothesis import given, settings, strategies as st

from dsfnewton import graph as G


def union_find_acyclic(n, pairs):
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in pairs:
        ri, rj = find(i), find(j)
        if ri == rj:
            return False, 0
        parent[ri] = rj
    return True, len({find(i) for i in range(n)})


def bfs_dist(n, adj, s):
    dist = [None] * n
    dist[s] = 0
    q = deque([s])
    while q:
        u = q.popleft()
        for v in adj.get(u, ()):
            if dist[v] is None:
                dist[v] = dist[u] + 1
                q.append(v)
    return dist


def reference_diameter(g):
    adj = {}
    for i, j in g.edges:
        adj.setdefault(i, []).append(j)
    return max(max(bfs_dist(g.n, adj, s)) for s in range(g.n))


def reachability_closure(n, edges):
    reach = [[i == j or (i, j) in edges for j in range(n)] for i in range(n)]
    for k, i, j in itertools.product(range(n), repeat=3):
        if reach[i][k] and reach[k][j]:
            reach[i][j] = True
    return all(all(row) for row in reach)


def test_graph_validation():
    with pytest.raises(G.TopologyError):
        G.Graph(2, True, frozenset({(0, 0)}))
    with pytest.raises(G.TopologyError):
        G.Graph(2, True, frozenset({(0, 2)}))
    with pytest.raises(G.TopologyError):
        G.Graph(2, False, frozenset({(0, 1)}))
    g = G.Graph.undirected(3, [(0, 1), (1, 2)])
    assert g.neighbors(1) == (0, 2)
    assert g.num_links == 2


def test_erdos_renyi_two_nodes_is_single_edge():
    for seed in range(5):
        g = G.generate_erdos_renyi(2, seed)
        assert g.undirected_pairs() == [(0, 1)]


def test_erdos_renyi_connected_and_deterministic():
    for seed in range(20):
        g = G.generate_erdos_renyi(10, seed)
        assert not g.directed
        assert reachability_closure(g.n, g.edges)
        assert g.edges == G.generate_erdos_renyi(10, seed).edges


def test_erdos_renyi_edge_density():
    # 2 ln 10 / 10 ~ 0.4605 per pair; connectivity conditioning pushes it slightly up
    total = sum(G.generate_erdos_renyi(10, s).num_links for s in range(200))
    frac = total / (200 * 45)
    assert 0.42 < frac < 0.56


def test_erdos_renyi_retry_budget():
    with pytest.raises(G.TopologyError):
        G.generate_erdos_renyi(40, 0, max_retries=0)
    with pytest.raises(ValueError):
        G.generate_erdos_renyi(1, 0)


def test_random_tree_small_cases():
    t = G.generate_random_tree(1, 0)
    assert t.n == 1 and t.edge_pairs() == []
    for seed in range(10):
        t = G.generate_random_tree(3, seed)
        assert len(t.edge_pairs()) == 2


@given(st.integers(1, 80), st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_random_tree_union_find(n, seed):
    t = G.generate_random_tree(n, seed)
    pairs = t.edge_pairs()
    assert len(pairs) == n - 1
    acyclic, components = union_find_acyclic(n, pairs)
    assert acyclic and components == 1


def test_bfs_tree_examples():
    assert G.bfs_spanning_tree(G.complete_graph(3), 0).edge_pairs() == [(0, 1), (0, 2)]
    cycle = G.Graph.undirected(4, [(0, 1), (1, 2), (2, 3), (3, 0)])
    assert sorted(G.bfs_spanning_tree(cycle, 0).edge_pairs()) == [(0, 1), (0, 3), (1, 2)]
    tree = G.generate_random_tree(12, 4).graph
    for root in (0, 5, 11):
        assert G.bfs_spanning_tree(tree, root).graph.edges == tree.edges


def test_bfs_tree_disconnected_names_node():
    g = G.Graph.undirected(4, [(0, 1), (2, 3)])
    with pytest.raises(G.TopologyError, match="2"):
        G.bfs_spanning_tree(g, 0)


@given(st.integers(2, 30), st.integers(0, 10**6))
@settings(max_examples=40, deadline=None)
def test_bfs_tree_subset_and_deterministic(n, seed):
    g = G.generate_erdos_renyi(n, seed)
    t1 = G.bfs_spanning_tree(g, 0)
    t2 = G.bfs_spanning_tree(g, 0)
    assert t1.graph.edges == t2.graph.edges
    assert t1.graph.edges <= g.edges
    assert union_find_acyclic(n, t1.edge_pairs()) == (True, 1)


def test_diameter_examples():
    for n in (2, 5, 9):
        assert G.diameter(G.path_graph(n)) == n - 1
        assert G.diameter(G.complete_graph(n)) == 1
    ring = G.ring_graph(6)
    assert G.diameter(ring) == 3 == reference_diameter(ring)
    with pytest.raises(G.TopologyError):
        G.diameter(G.Graph.undirected(3, [(0, 1)]))


@given(st.integers(2, 40), st.integers(0, 10**6))
@settings(max_examples=50, deadline=None)
def test_tree_diameter_at_most_n_minus_1(n, seed):
    t = G.generate_random_tree(n, seed).graph
    d = G.diameter(t)
    assert d == reference_diameter(t)
    is_path = max(t.degree(i) for i in range(n)) <= 2
    assert d <= n - 1
    assert (d == n - 1) == is_path


def test_strong_connectivity_examples():
    assert G.is_strongly_connected(G.Graph(1, True, frozenset()))
    assert not G.is_strongly_connected(G.Graph.directed_from(2, [(0, 1)]))
    cyc = G.Graph.directed_from(3, [(0, 1), (1, 2), (2, 0)])
    assert G.is_strongly_connected(cyc) == reachability_closure(3, cyc.edges) is True


@given(st.integers(2, 12), st.integers(0, 10**6), st.floats(0.0, 0.5))
@settings(max_examples=60, deadline=None)
def test_strong_connectivity_matches_closure(n, seed, prob):
    import numpy as np
    rng = np.random.default_rng(seed)
    arcs = [(i, j) for i in range(n) for j in range(n) if i != j and rng.random() < prob]
    g = G.Graph.directed_from(n, arcs)
    assert G.is_strongly_connected(g) == reachability_closure(n, g.edges)


@given(st.integers(2, 25), st.integers(0, 10**6))
@settings(max_examples=40, deadline=None)
def test_digraph_generator(n, seed):
    g = G.generate_strongly_connected_digraph(n, seed)
    assert g.directed and reachability_closure(n, g.edges)
    assert G.diameter(g) == reference_diameter(g)


def test_edge_list_round_trip(tmp_path):
    for g in (G.generate_erdos_renyi(9, 1), G.generate_strongly_connected_digraph(7, 2)):
        path = tmp_path / "g.txt"
        G.write_edge_list(g, path)
        assert path.read_text().splitlines()[0] == f"n {g.n} directed {int(g.directed)}"
        back = G.read_edge_list(path)
        assert back == g
    with pytest.raises(FileNotFoundError):
        G.read_edge_list(tmp_path / "missing.txt")
