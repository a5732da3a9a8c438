"""
DAN-LA: rank-1 Hessian innovations instead of full Hessians.

Each node sends (r, s, g, h), which is 2p + 2 scalars, instead of the
p(p+1)/2 + p scalars of its gradient and packed Hessian.  A node steps only
when the summed truncation error r_hat is below the threshold set by c.
Larger c makes the threshold stricter and the accepted steps longer.  The
table shows the trade-off across c.
"""

import numpy as np

from dsfnewton import engines, graph, objectives
from dsfnewton.ledger import CommLedger

m, p, n = 400, 10, 6
data = objectives.synth_logistic(m, p, seed=1, rho=5.0)
oracles = objectives.logistic_node_oracles(data, objectives.partition_dataset(m, n, seed=1))
tree = graph.generate_random_tree(n, seed=1)
base = objectives.certified_logistic_constants(data)
x0 = np.zeros(p)

print(f"message scalars: DAN {engines.dan_message_scalars(p)}, DAN-LA {engines.danla_message_scalars(p)}")
ledger = CommLedger(n)
dan = engines.run_dan(oracles, tree, x0, base, ledger=ledger, stop=engines.StopRule(cap=2000))
print(f"DAN           : {dan.iterations:4d} iterations, {ledger.mean_payload_bits_per_node():12.0f} bits/node")
for factor in (0.1, 1.0, 10.0):
    k = base.with_c(factor * base.mu)
    ledger = CommLedger(n)
    tr = engines.run_danla(oracles, tree, x0, k, ledger=ledger, stop=engines.StopRule(cap=2000))
    print(f"DAN-LA c={factor:4.1f}mu: {tr.iterations:4d} iterations ({tr.updating_iterations} steps, "
          f"longest stall {tr.max_consecutive_stalls()}), {ledger.mean_payload_bits_per_node():12.0f} bits/node")
