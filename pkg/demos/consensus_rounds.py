"""
Selective flooding, round by round.

Every node starts with one tagged message.  On a tree each node forwards,
per neighbour, the smallest-origin message it has neither sent to nor
received from that neighbour.  After n - 1 rounds every node holds all n
messages, and no message ever crosses the same link in the same direction
twice.  On a strongly connected digraph the budget is n + diameter - 1.
"""

from dsfnewton import consensus, graph

n = 8
tree = graph.generate_random_tree(n, seed=3)
print("tree links:", tree.edge_pairs())

result = consensus.run_dsf(tree, [consensus.TaggedMessage(i, f"S{i}", 1) for i in range(n)])
held = [{i} for i in range(n)]
for rep in result.reports:
    for t in rep.deliveries:
        held[t.receiver].add(t.origin)
    sent = ", ".join(f"{t.sender}->{t.receiver}:S{t.origin}" for t in rep.transmissions)
    print(f"round {rep.round}: sizes {[len(h) for h in held]}  [{sent}]")
print(f"complete after round {result.completion_round} (budget n - 1 = {n - 1})")

# the directed variant forwards anything not yet sent on an out-link
ring = graph.ring_graph(6, directed=True)
res = consensus.run_dsf(ring, [consensus.TaggedMessage(i, None, 1) for i in range(6)])
print(f"directed 6-ring: complete after round {res.completion_round}, "
      f"budget n + d - 1 = {consensus.default_rounds(ring)}")
