import json

import numpy as np
import pytest

from dsfnewton import consensus as C
from dsfnewton import graph as G
from dsfnewton.ledger import CommLedger, LedgerError


def flood(g, scalars):
    return C.run_dsf(g, [C.TaggedMessage(i, None, scalars) for i in range(g.n)])


def test_ledger_matches_round_reports():
    tree = G.generate_random_tree(9, 2)
    res = flood(tree, 7)
    ledger = CommLedger(9)
    ledger.record_dsf(res)
    sent = np.zeros(9, dtype=int)
    for rep in res.reports:
        for t in rep.transmissions:
            sent[t.sender] += t.scalars
    assert ledger.sent_scalars.tolist() == sent.tolist()
    assert ledger.sent_scalars.tolist() == res.reports[-1].cumulative_scalars
    assert ledger.sent_scalars.sum() == ledger.recv_scalars.sum()
    assert ledger.conserved()
    assert ledger.iterations[0]["scalars"] == sent.tolist()
    assert ledger.rounds_per_iteration == [8]


def test_every_node_receives_n_minus_1_messages_on_a_tree():
    tree = G.generate_random_tree(12, 5)
    ledger = CommLedger(12)
    ledger.record_dsf(flood(tree, 3))
    assert ledger.recv_messages.tolist() == [11] * 12
    # each tree link carries, per direction, exactly the origins on the sender's side
    assert ledger.sent_messages.sum() == 12 * 11


def test_bits_with_and_without_identifiers():
    g = G.path_graph(5)
    ledger = CommLedger(5)
    ledger.record_dsf(flood(g, 2))
    assert ledger.id_bits == 3
    assert np.array_equal(ledger.payload_bits, ledger.sent_scalars * 64)
    assert np.array_equal(ledger.bits_with_ids, ledger.payload_bits + 3 * ledger.sent_messages)
    assert ledger.mean_payload_bits_per_node() == pytest.approx(ledger.sent_scalars.mean() * 64)


def test_cumulative_non_decreasing_over_iterations():
    g = G.generate_strongly_connected_digraph(6, 1)
    ledger = CommLedger(6)
    prev = ledger.sent_scalars.copy()
    for _ in range(3):
        ledger.record_dsf(flood(g, 4))
        assert np.all(ledger.sent_scalars >= prev)
        prev = ledger.sent_scalars.copy()
    assert len(ledger.iterations) == 3
    assert ledger.iterations[0] == ledger.iterations[2]


def test_conservation_violation_detected():
    res = flood(G.path_graph(3), 1)
    rep = res.reports[0]
    broken = C.RoundReport(rep.round, rep.transmissions, rep.deliveries[:-1], rep.cumulative_scalars)
    with pytest.raises(LedgerError):
        CommLedger(3).record_round(broken)


def test_end_without_begin():
    with pytest.raises(LedgerError):
        CommLedger(2).end_iteration()


def test_json_summary():
    ledger = CommLedger(4)
    ledger.record_dsf(flood(G.star_graph(4), 5))
    data = json.loads(ledger.to_json())
    assert data["conserved"] is True
    assert data["bits_per_scalar"] == 64 and data["identifier_bits"] == 2
    assert data["sent_scalars"] == ledger.sent_scalars.tolist()
