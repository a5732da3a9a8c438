"""Per-node communication accounting fed by flooding round reports."""

from __future__ import annotations

import json
from collections import defaultdict

import numpy as np

from .consensus import BITS_PER_SCALAR, identifier_bits


class LedgerError(RuntimeError):
    pass


class CommLedger:
    """
    Cumulative scalars, messages and bits sent/received by every node.

    Bits come in two flavours: payload-only (``scalars * 64``) and payload
    plus a ``ceil(log2 n)``-bit origin tag per message.  Conservation
    (everything sent over a directed edge is received at its head) is
    checked on every recorded round.
    """

    def __init__(self, n: int):
        self.n = n
        self.id_bits = identifier_bits(n)
        self.sent_scalars = np.zeros(n, dtype=np.int64)
        self.recv_scalars = np.zeros(n, dtype=np.int64)
        self.sent_messages = np.zeros(n, dtype=np.int64)
        self.recv_messages = np.zeros(n, dtype=np.int64)
        self.edge_sent = defaultdict(int)
        self.edge_recv = defaultdict(int)
        self.iterations = []
        self.rounds_per_iteration = []
        self._mark = None

    # -- recording -----------------------------------------------------------
    def record_round(self, report) -> None:
        round_sent = defaultdict(int)
        round_recv = defaultdict(int)
        for t in report.transmissions:
            self.sent_scalars[t.sender] += t.scalars
            self.sent_messages[t.sender] += 1
            self.edge_sent[(t.sender, t.receiver)] += t.scalars
            round_sent[(t.sender, t.receiver)] += t.scalars
        for t in report.deliveries:
            self.recv_scalars[t.receiver] += t.scalars
            self.recv_messages[t.receiver] += 1
            self.edge_recv[(t.sender, t.receiver)] += t.scalars
            round_recv[(t.sender, t.receiver)] += t.scalars
        if round_sent != round_recv:
            raise LedgerError(f"conservation violated in round {report.round}")

    def record_dsf(self, result) -> None:
        """Record every round of one flooding run as one iteration."""
        self.begin_iteration()
        for rep in result.reports:
            self.record_round(rep)
        self.end_iteration(rounds=result.rounds)

    def begin_iteration(self) -> None:
        self._mark = (self.sent_scalars.copy(), self.sent_messages.copy())

    def end_iteration(self, rounds: int = 0) -> None:
        if self._mark is None:
            raise LedgerError("end_iteration without begin_iteration")
        s0, m0 = self._mark
        self.iterations.append({
            "scalars": (self.sent_scalars - s0).tolist(),
            "messages": (self.sent_messages - m0).tolist(),
        })
        self.rounds_per_iteration.append(rounds)
        self._mark = None

    # -- queries ---------------------------------------------------------------
    @property
    def payload_bits(self) -> np.ndarray:
        return self.sent_scalars * BITS_PER_SCALAR

    @property
    def bits_with_ids(self) -> np.ndarray:
        return self.payload_bits + self.sent_messages * self.id_bits

    def mean_scalars_per_node(self) -> float:
        return float(self.sent_scalars.mean())

    def mean_payload_bits_per_node(self) -> float:
        return float(self.payload_bits.mean())

    def conserved(self) -> bool:
        return dict(self.edge_sent) == dict(self.edge_recv)

    def summary(self) -> dict:
        return {
            "n": self.n,
            "identifier_bits": self.id_bits,
            "bits_per_scalar": BITS_PER_SCALAR,
            "sent_scalars": self.sent_scalars.tolist(),
            "recv_scalars": self.recv_scalars.tolist(),
            "sent_messages": self.sent_messages.tolist(),
            "payload_bits": self.payload_bits.tolist(),
            "bits_with_ids": self.bits_with_ids.tolist(),
            "mean_payload_bits_per_node": self.mean_payload_bits_per_node(),
            "conserved": self.conserved(),
            "rounds_per_iteration": list(self.rounds_per_iteration),
            "iterations": self.iterations,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=1)
