"""
Selective flooding for finite-time set-consensus.

Every node starts with its own tagged message and, round by round, forwards
one message per neighbor.  On an undirected tree a node never forwards a
message to a neighbor it already sent it to or received it from, which makes
every information set complete after ``n - 1`` rounds with no duplicate
transmissions.  On a directed graph only the "already sent" rule can be
enforced (plain flooding) and completion takes at most ``n + d_G - 1``
rounds.

Rounds are synchronous: all selections of a round are computed from the
previous round's states before any delivery is applied.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

from .graph import Graph, SpanningTree, TopologyError, diameter

BITS_PER_SCALAR = 64


class ProtocolViolation(RuntimeError):
    """Set-consensus was not reached within the guaranteed round budget."""


@dataclass(frozen=True)
class TaggedMessage:
    origin: int
    payload: Any
    payload_scalars: int = 0


@dataclass
class DsfNodeState:
    node: int
    info: dict = field(default_factory=dict)
    sent_to: dict = field(default_factory=dict)
    received_from: dict = field(default_factory=dict)

    def origins(self) -> set:
        return set(self.info)


@dataclass(frozen=True)
class Transmission:
    sender: int
    receiver: int
    origin: int
    scalars: int
    bits: int


@dataclass
class RoundReport:
    round: int
    transmissions: list
    deliveries: list
    cumulative_scalars: list

    def to_json_lines(self) -> list:
        return [
            json.dumps({"round": self.round, "edge": [t.sender, t.receiver], "origin": t.origin,
                        "scalars": t.scalars, "bits": t.bits})
            for t in self.transmissions
        ]


@dataclass
class DsfResult:
    states: list
    reports: list
    rounds: int
    completion_round: int | None

    def complete(self) -> bool:
        n = len(self.states)
        return all(len(s.info) == n for s in self.states)


def identifier_bits(n: int) -> int:
    """Bits needed to tag a message with its origin id: ``ceil(log2 n)``."""
    return math.ceil(math.log2(n)) if n > 1 else 0


def init_states(g: Graph, payloads) -> list:
    payloads = list(payloads)
    if sorted(m.origin for m in payloads) != list(range(g.n)):
        raise ValueError("payload origins must be exactly the node ids 0..n-1")
    by_origin = {m.origin: m for m in payloads}
    states = []
    for i in range(g.n):
        st = DsfNodeState(i, {i: by_origin[i]})
        for j in g.out_neighbors(i):
            st.sent_to[j] = set()
        for j in g.in_neighbors(i):
            st.received_from[j] = set()
        states.append(st)
    return states


def dsf_select_undirected(state: DsfNodeState, neighbor: int):
    """Smallest-origin message neither sent to nor received from ``neighbor``."""
    eligible = state.info.keys() - state.sent_to.get(neighbor, set()) - state.received_from.get(neighbor, set())
    return state.info[min(eligible)] if eligible else None


def dsf_select_directed(state: DsfNodeState, out_neighbor: int):
    """Smallest-origin message not yet sent to ``out_neighbor``; repeats of received ones allowed."""
    eligible = state.info.keys() - state.sent_to.get(out_neighbor, set())
    return state.info[min(eligible)] if eligible else None


def default_rounds(g: Graph) -> int:
    """Guaranteed round budget: ``n-1`` on trees, ``n + d_G - 1`` on digraphs."""
    if g.n == 1:
        return 0
    if g.directed:
        return g.n + diameter(g) - 1
    return g.n - 1


def run_dsf(g, payloads, rounds: int | None = None, require_complete: bool | None = None) -> DsfResult:
    """
    Run synchronous selective flooding.

    Parameters
    ----------
    g : Graph or SpanningTree
        Undirected graphs must be trees; extract a spanning tree first.
    payloads : iterable of TaggedMessage
        One message per node, origins exactly ``0..n-1``.
    rounds : int, optional
        Round budget.  Defaults to the guaranteed budget (see
        :func:`default_rounds`).
    require_complete : bool, optional
        Raise :class:`ProtocolViolation` if some information set is still
        incomplete at the end.  Defaults to True when ``rounds`` is None.

    Returns
    -------
    DsfResult
        Final node states, one :class:`RoundReport` per round, and the first
        round after which every node held every message.
    """
    if isinstance(g, SpanningTree):
        g = g.graph
    if not g.directed and not g.is_tree():
        raise TopologyError("undirected selective flooding needs a tree; extract a spanning tree first "
                            "(bfs_spanning_tree)")
    budget = default_rounds(g) if rounds is None else int(rounds)
    if require_complete is None:
        require_complete = rounds is None
    states = init_states(g, payloads)
    n = g.n
    id_bits = identifier_bits(n)
    select = dsf_select_directed if g.directed else dsf_select_undirected
    cumulative = [0] * n
    reports = []
    completion = 0 if n == 1 else None

    for k in range(1, budget + 1):
        outgoing = []
        for i in range(n):
            for j in g.out_neighbors(i):
                msg = select(states[i], j)
                if msg is not None:
                    bits = msg.payload_scalars * BITS_PER_SCALAR + id_bits
                    outgoing.append((Transmission(i, j, msg.origin, msg.payload_scalars, bits), msg))
        deliveries = []
        for t, msg in outgoing:
            states[t.sender].sent_to[t.receiver].add(t.origin)
            receiver = states[t.receiver]
            receiver.received_from[t.sender].add(t.origin)
            receiver.info.setdefault(t.origin, msg)
            cumulative[t.sender] += t.scalars
            deliveries.append(t)
        reports.append(RoundReport(k, [t for t, _ in outgoing], deliveries, list(cumulative)))
        if completion is None and all(len(s.info) == n for s in states):
            completion = k

    result = DsfResult(states, reports, budget, completion)
    if require_complete and not result.complete():
        worst = min(states, key=lambda s: len(s.info))
        raise ProtocolViolation(f"node {worst.node} holds {len(worst.info)}/{n} messages after {budget} rounds")
    return result


def min_transmissions_lower_bound(tree) -> int:
    """A leaf must receive ``n - 1`` messages over its single link."""
    return tree.n - 1
