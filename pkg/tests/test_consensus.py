import json

import pytest
from hypothesis import given, settings, strategies as st

from dsfnewton import consensus as C
from dsfnewton import graph as G


def msgs(n, scalars=1):
    return [C.TaggedMessage(i, f"S{i}", scalars) for i in range(n)]


def state(node, held, sent=None, received=None):
    s = C.DsfNodeState(node, {u: C.TaggedMessage(u, None) for u in held})
    s.sent_to = {j: set(v) for j, v in (sent or {}).items()}
    s.received_from = {j: set(v) for j, v in (received or {}).items()}
    return s


def reference_flood(g, rounds):
    """Independent re-statement of selective flooding on sets of ints."""
    n = g.n
    info = [{i} for i in range(n)]
    sent = {(i, j): set() for i, j in g.edges}
    history = []
    for _ in range(rounds):
        picks = []
        for i, j in sorted(g.edges):
            blocked = sent[(i, j)] | (set() if g.directed else sent.get((j, i), set()))
            cand = info[i] - blocked
            if cand:
                picks.append((i, j, min(cand)))
        for i, j, u in picks:
            sent[(i, j)].add(u)
            info[j].add(u)
        history.append([set(s) for s in info])
    return history


def test_select_undirected_examples():
    assert C.dsf_select_undirected(state(3, {3}, {1: set()}, {1: set()}), 1).origin == 3
    assert C.dsf_select_undirected(state(1, {0, 1}, {0: set()}, {0: {0}}), 0).origin == 1
    assert C.dsf_select_undirected(state(1, {0, 1, 2}, {5: {0}}, {5: {2}}), 5).origin == 1
    assert C.dsf_select_undirected(state(1, {0, 1}, {0: {1}}, {0: {0}}), 0) is None


def test_select_directed_examples():
    assert C.dsf_select_directed(state(2, {2}, {0: set()}), 0).origin == 2
    assert C.dsf_select_directed(state(0, {0, 1}, {1: {0, 1}}), 1) is None
    assert C.dsf_select_directed(state(0, {0, 1}, {1: {0}}, {1: {1}}), 1).origin == 1


def test_path3_hand_simulation():
    g = G.path_graph(3)
    res = C.run_dsf(g, msgs(3))
    assert res.rounds == 2
    after1 = [set(r) for r in reference_flood(g, 1)[0]]
    assert after1 == [{0, 1}, {0, 1, 2}, {1, 2}]
    one = C.run_dsf(g, msgs(3), rounds=1)
    assert [set(s.info) for s in one.states] == after1
    assert all(set(s.info) == {0, 1, 2} for s in res.states)
    assert res.completion_round == 2


def test_single_node():
    res = C.run_dsf(G.Graph(1, False, frozenset()), msgs(1))
    assert res.rounds == 0 and res.completion_round == 0 and res.reports == []
    assert C.min_transmissions_lower_bound(G.generate_random_tree(1, 0)) == 0


def test_directed_three_cycle():
    g = G.Graph.directed_from(3, [(0, 1), (1, 2), (2, 0)])
    assert C.default_rounds(g) == 4
    res = C.run_dsf(g, msgs(3))
    assert res.completion_round <= 4
    # hand schedule: every node forwards the smallest unsent origin each round
    assert res.completion_round == 2


def test_directed_ring_five():
    g = G.ring_graph(5, directed=True)
    assert G.diameter(g) == 4
    assert C.run_dsf(g, msgs(5)).completion_round <= 8


def test_lower_bound_values():
    assert C.min_transmissions_lower_bound(G.generate_random_tree(2, 0)) == 1
    assert C.min_transmissions_lower_bound(G.generate_random_tree(10, 0)) == 9


def test_non_tree_rejected():
    with pytest.raises(G.TopologyError, match="spanning tree"):
        C.run_dsf(G.ring_graph(4), msgs(4))


def test_bad_origins_rejected():
    with pytest.raises(ValueError):
        C.run_dsf(G.path_graph(3), [C.TaggedMessage(0, 0), C.TaggedMessage(0, 1), C.TaggedMessage(2, 2)])


def test_short_budget_is_violation_only_when_required():
    g = G.path_graph(5)
    res = C.run_dsf(g, msgs(5), rounds=3)
    assert not res.complete()
    with pytest.raises(C.ProtocolViolation):
        C.run_dsf(g, msgs(5), rounds=3, require_complete=True)


@given(st.integers(1, 40), st.integers(0, 10**6))
@settings(max_examples=60, deadline=None)
def test_tree_matches_reference_and_properties(n, seed):
    tree = G.generate_random_tree(n, seed)
    res = C.run_dsf(tree, msgs(n, 3))
    assert res.complete()
    ref = reference_flood(tree.graph, n - 1)
    seen_pairs = set()
    prev = [{i} for i in range(n)]
    held = [{i} for i in range(n)]
    for rep, expect in zip(res.reports, ref):
        per_dir = {}
        for t in rep.deliveries:
            held[t.receiver].add(t.origin)
            key = (t.sender, t.receiver, t.origin)
            assert key not in seen_pairs
            seen_pairs.add(key)
            per_dir[(t.sender, t.receiver)] = per_dir.get((t.sender, t.receiver), 0) + 1
            assert t.scalars == 3 and t.bits == 3 * 64 + C.identifier_bits(n)
        assert all(v <= 1 for v in per_dir.values())
        assert held == expect
        assert all(a <= b for a, b in zip(prev, held))
        prev = [set(h) for h in held]


@given(st.integers(2, 15), st.integers(0, 10**6))
@settings(max_examples=40, deadline=None)
def test_digraph_matches_reference(n, seed):
    g = G.generate_strongly_connected_digraph(n, seed)
    res = C.run_dsf(g, msgs(n))
    ref = reference_flood(g, res.rounds)
    assert [set(s.info) for s in res.states] == ref[-1]
    assert res.completion_round <= n + G.diameter(g) - 1


def test_path_not_complete_at_n_minus_2():
    for n in range(3, 20):
        res = C.run_dsf(G.path_graph(n), msgs(n), rounds=n - 2)
        assert not res.complete()


def test_identifier_bits():
    assert [C.identifier_bits(n) for n in (1, 2, 3, 4, 5, 10, 1024, 1025)] == [0, 1, 2, 2, 3, 4, 10, 11]


def test_round_report_json_lines():
    res = C.run_dsf(G.path_graph(3), msgs(3, 2))
    lines = [json.loads(ln) for rep in res.reports for ln in rep.to_json_lines()]
    assert lines[0] == {"round": 1, "edge": [0, 1], "origin": 0, "scalars": 2, "bits": 2 * 64 + 2}
    assert len(lines) == sum(len(r.transmissions) for r in res.reports)
    assert res.reports[-1].cumulative_scalars == [2 * 1, 2 * 4, 2 * 1]
